import pytest
from hypothesis import given, settings, strategies as st

from morph.enactment import (BUFFER_LIMIT, RECONF_FAIL, RECONF_OK, EnactorHandle, ExceptionRecord, dispatch,
                             drain_buffer, load, load_plan, start_reconfig, step_behaviour, step_reconfig,
                             swap_point)
from morph.lts import RECONFIGURE
from morph.reconfig import CMD_FAIL, parse_configuration, parse_pool, plan_reconfiguration
from morph.synthesis import StrategyAutomaton


def automaton(moves, choice, sid="b"):
    """moves: state -> {label: state}; labels chosen in ``choice`` are controllable."""
    delta = {q: dict(m) for q, m in moves.items()}
    ctrl = frozenset(c for c in choice.values() if c)
    labels = frozenset(l for m in moves.values() for l in m)
    allowed = {q: frozenset(l for l in delta[q] if l in ctrl) for q in delta}
    expected = {q: frozenset(l for l in delta[q] if l not in ctrl) for q in delta}
    return StrategyAutomaton(sid, "reach", 0, labels, ctrl, delta, {q: choice.get(q) for q in delta},
                             allowed, expected)


SURVEY = automaton({
    0: {"goto(r3)": 1},
    1: {"arrived(r3)": 2},
    2: {"goto(r4)": 3},
    3: {"arrived(r4)": 4},
    4: {},
}, {0: "goto(r3)", 2: "goto(r4)"})

COORD = automaton({
    0: {"fold_arm": 1},
    1: {"arm_folded": 2},
    2: {RECONFIGURE: 3},
    3: {RECONF_OK: 4, RECONF_FAIL: 5},
    4: {"recharge": 6},
    5: {},
    6: {"recharged": 7},
    7: {},
}, {0: "fold_arm", 2: RECONFIGURE, 4: "recharge"})


def test_scripted_step_emits_next_goto():
    h = load(EnactorHandle("behaviour"), SURVEY)
    assert dispatch(h) == ["goto(r3)"]
    assert step_behaviour(h, "arrived(r3)", 1) == ["goto(r4)"]
    assert h.inflight is None and h.outbox == ["goto(r4)"]


def test_unexpected_observation_is_an_assumption_violation():
    h = load(EnactorHandle("behaviour"), SURVEY)
    dispatch(h)
    exc = step_behaviour(h, "battery_below_50", 4)
    assert isinstance(exc, ExceptionRecord)
    assert exc.kind == "BehaviourAssumptionViolated" and exc.observation == "battery_below_50"
    assert exc.tick == 4 and exc.strategy == "b"
    assert h.mode == "faulted" and swap_point(h)


def test_reconfigure_only_after_arm_folded():
    h = load(EnactorHandle("behaviour"), COORD)
    assert dispatch(h) == ["fold_arm"]
    assert h.mode == "running"
    assert step_behaviour(h, "arm_folded", 2) == [RECONFIGURE]
    assert dispatch(h) == [RECONFIGURE]
    assert h.mode == "awaiting_reconfig" and not swap_point(h)


def test_events_buffered_during_reconfiguration_are_replayed():
    h = load(EnactorHandle("behaviour"), COORD)
    dispatch(h)
    step_behaviour(h, "arm_folded", 2)
    dispatch(h)
    assert step_behaviour(h, "recharged", 3) == []
    assert list(h.buffer) == ["recharged"]
    assert step_behaviour(h, RECONF_OK, 4) == ["recharge"]
    assert dispatch(h) == ["recharge"]
    assert drain_buffer(h, 5) == []
    assert h.state == 7 and not h.buffer


def test_buffer_overflow_raises():
    h = load(EnactorHandle("behaviour"), COORD)
    dispatch(h)
    step_behaviour(h, "arm_folded", 2)
    dispatch(h)
    for i in range(BUFFER_LIMIT):
        assert step_behaviour(h, f"e{i}", 3) == []
    exc = step_behaviour(h, "one_more", 3)
    assert isinstance(exc, ExceptionRecord) and exc.observation.startswith("buffer_overflow")


def test_held_enactor_buffers_and_does_not_dispatch():
    h = load(EnactorHandle("behaviour"), SURVEY)
    h.held = True
    assert dispatch(h) == []
    assert step_behaviour(h, "arrived(r3)", 1) == []
    h.held = False
    assert dispatch(h) == ["goto(r3)"]
    assert drain_buffer(h, 2) == ["goto(r4)"]


def test_swap_point_contract():
    h = load(EnactorHandle("behaviour"), SURVEY)
    assert swap_point(h)
    dispatch(h)
    assert not swap_point(h)
    assert swap_point(EnactorHandle("behaviour"))


def test_exception_kind_is_validated():
    with pytest.raises(ValueError):
        ExceptionRecord("Oops", 0, "x", "s", "q")


# -- reconfiguration enactor -------------------------------------------------

POOL = parse_pool("""
type ir_cam provides ir_camera
type analyser provides report requires ir_camera
""")


def removal_plan():
    c, cs, t = parse_configuration("component ir_cam active\ncomponent analyser inactive\n"
                                   "bind analyser ir_camera ir_cam\nforbid ir_cam\n", POOL)
    return plan_reconfiguration(c, t, cs, POOL)


def test_passive_acknowledgement_leads_to_unbind():
    plan = removal_plan()
    h = load_plan(EnactorHandle("reconfig"), plan, staged=True)
    start_reconfig(h)
    assert dispatch(h) == ["cfg.passivate(ir_cam)"]
    cmds, signal = step_reconfig(h, plan.reports[0], 1)
    assert cmds == ["cfg.unbind(analyser,ir_camera,ir_cam)"] and signal is None


def test_plan_completion_signals_reconf_ok():
    plan = removal_plan()
    h = load_plan(EnactorHandle("reconfig"), plan, staged=False)
    assert h.mode == "idle"
    start_reconfig(h)
    signal = None
    for rep in plan.reports:
        dispatch(h)
        cmds, signal = step_reconfig(h, rep, 1)
    assert signal == RECONF_OK and h.mode == "idle"


def test_command_failure_is_reported():
    pool = parse_pool("type ir_cam provides ir_camera spares 1\n")
    c, cs, t = parse_configuration("require ir_camera\n", pool)
    plan = plan_reconfiguration(c, t, cs, pool)
    assert plan.commands[0] == "cfg.add(ir_cam)"
    h = load_plan(EnactorHandle("reconfig"), plan, staged=True)
    start_reconfig(h)
    dispatch(h)
    exc = step_reconfig(h, CMD_FAIL, 3)
    assert isinstance(exc, ExceptionRecord) and exc.kind == "ReconfigCommandFailed"
    assert h.mode == "faulted"


def test_reconfig_enactor_must_be_running():
    h = load_plan(EnactorHandle("reconfig"), removal_plan(), staged=False)
    assert isinstance(step_reconfig(h, "cfg.st(x)", 0), ExceptionRecord)


# -- properties ----------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["arrived(r3)", "arrived(r4)", "battery_low", "landed"]), max_size=6))
def test_each_step_is_one_lookup(events):
    """Enactor cost per observation is a single table lookup; violation exactly when unexpected."""
    h = load(EnactorHandle("behaviour"), SURVEY)
    for ev in events:
        dispatch(h)
        before, state = h.steps, h.state
        expected = ev in SURVEY.expected[state]
        out = step_behaviour(h, ev, 0)
        assert h.steps == before + 1
        if isinstance(out, ExceptionRecord):
            assert not expected
            break
        assert expected and h.state == SURVEY.delta[state][ev]
