from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from morph.lts import RECONFIGURE, untag
from morph.synthesis import GameProblem, solve, verify_closed_loop
from morph.uav import (DEPLETED, RECONF_FAIL, RECONF_OK, U, Mission, ModelSpec, UavDomain, UnknownAssertion,
                       abstract, assemble_goal, battery_bound, command_cap, goal_registry, guard,
                       handling_of, mission_model, observable)

MISSION = Mission((0, 0), (("s1", (2, 1)), ("s2", (3, 3))), 60, 8)
CAPS = frozenset({"attitude_ctrl", "positioning", "grip"})
START = ("base", 0, 0, False, "extended")


def snap(**over):
    base = {"pos": "base", "airborne": False, "arm": "extended", "battery": 60.0,
            "samples": "s1:pending,s2:pending", "moving": False}
    base.update(over)
    return base


def test_state_repr_is_compact():
    assert repr(U("s3", 2, 0, True, "extended", 72, "pickup")) == "s3:k2:c0:air:e:b72/pickup"
    assert observable(("post", U("base", 0, 0, False, "folded", 30))) == ("post", ("base", 0, 0, False, "folded", None))


def test_goto_costs_distance_times_rate_plus_surcharge():
    arena = mission_model(MISSION, ModelSpec(CAPS, "pickup", Fraction(1)), [START])
    u = U("base", 0, 0, True, "extended", 40)
    w = arena.succ[u]["goto(s1)"]
    # 3 cells at (rate 1 + surcharge 1)
    assert w == U("base", 0, 0, True, "extended", 34, "goto(s1)")
    assert arena.succ[w]["arrived(s1)"] == U("s1", 0, 0, True, "extended", 34)


def test_costs_round_down_for_fractional_rates():
    arena = mission_model(MISSION, ModelSpec(CAPS, "pickup", Fraction(3, 2)), [START])
    u = U("base", 0, 0, False, "extended", 40)
    # takeoff: 1.5 + 2 = 3.5, floor(40 - 3.5) = 36
    assert arena.succ[u]["takeoff"].lb == 36


def test_battery_bound_stays_above_threshold():
    arena = mission_model(MISSION, ModelSpec(CAPS, "pickup", Fraction(2)), [START])
    for s in arena.states:
        if s != DEPLETED:
            assert s.lb > MISSION.theta
    low = U("s2", 1, 1, True, "extended", MISSION.theta + 1)
    assert arena.succ[low]["goto(base)"] == DEPLETED


def test_recharge_only_at_base_and_landed():
    arena = mission_model(MISSION, ModelSpec(CAPS, "pickup", Fraction(1)), [START])
    assert "recharge" in arena.succ[U("base", 0, 0, False, "extended", 20)]
    w = arena.succ[U("base", 0, 0, False, "extended", 20)]["recharge"]
    assert arena.succ[w]["recharged"].lb == MISSION.capacity
    assert "recharge" not in arena.succ[U("base", 0, 0, True, "extended", 20)]


def test_missing_capability_removes_commands():
    arena = mission_model(MISSION, ModelSpec(frozenset({"attitude_ctrl", "grip"}), "pickup", Fraction(1)), [START])
    assert not any(l.startswith("goto") for l in arena.alphabet)


def test_fold_only_when_landed():
    arena = mission_model(MISSION, ModelSpec(CAPS, "insitu", Fraction(1), allow_fold=True), [START])
    assert "fold_arm" in arena.succ[U("base", 0, 0, False, "extended", 30)]
    assert "fold_arm" not in arena.succ[U("base", 0, 0, True, "extended", 30)]


def test_guard_is_landed_and_folded():
    assert guard(U("base", 0, 0, False, "folded", 30))
    assert not guard(U("base", 0, 0, True, "folded", 30))
    assert not guard(U("base", 0, 0, False, "extended", 30))
    assert not guard(U("base", 0, 0, False, "folded", 30, "fold_arm"))
    assert not guard(DEPLETED)


def test_goal_registry_and_assembly():
    reg = goal_registry(MISSION)
    g = assemble_goal(["collect_at_base", "battery_safe", "flight"], reg)
    assert g.kind == "reach"
    assert g.bad(DEPLETED) and not g.bad(U("base", 0, 0, False, "extended", 30))
    assert g.predicate(U("base", 2, 0, False, "extended", 30))
    assert not g.predicate(U("base", 2, 1, False, "extended", 30))
    assert assemble_goal(["battery_safe"], reg).kind == "safety"
    with pytest.raises(UnknownAssertion):
        assemble_goal(["teleport"], reg)
    assert handling_of(["analyse_insitu"]) == "insitu" and handling_of(["collect_at_base"]) == "pickup"


def test_abstraction_of_snapshots():
    assert abstract(MISSION, snap()) == START
    assert abstract(MISSION, snap(samples="s1:carried,s2:pending", pos="s1", airborne=True)) == \
        ("s1", 1, 1, True, "extended")
    assert abstract(MISSION, snap(samples="s1:pending,s2:carried")) is None
    assert abstract(MISSION, snap(samples="s2:pending,s1:pending")) is None
    assert battery_bound(MISSION, snap(battery=33.9)) == 33


def test_plain_arena_is_solvable_and_verified():
    dom = UavDomain(MISSION)
    labels = ["collect_at_base", "battery_safe"]
    arena = dom.arena(labels, snap(), 1, CAPS)
    goal = dom.goal(labels)
    s = solve(GameProblem(arena, goal))
    assert s and verify_closed_loop(arena, s, goal)
    assert dom.entry(s, snap(), CAPS) == [arena.initial]
    assert dom.entry(s, snap(moving=True), CAPS) == []


def test_mode_switch_arena_for_in_situ():
    dom = UavDomain(MISSION)
    labels = ["analyse_insitu", "battery_safe"]
    pre = frozenset({"attitude_ctrl", "positioning"})
    arena = dom.arena(labels, snap(), 1, pre, post_caps=pre | {"ir_camera"})
    assert RECONF_FAIL in arena.alphabet and RECONF_OK in arena.alphabet
    assert arena.initial[0] == "pre"
    for src, l, dst in arena.transitions():
        if l == RECONFIGURE:
            assert guard(untag(src)) and untag(dst).pend == "reconf"
    s = solve(GameProblem(arena, dom.goal(labels)))
    assert s
    s.meta["post_caps"] = pre | {"ir_camera"}
    [entry] = dom.entry(s, snap(), pre)
    assert entry[0] == "pre"


def test_command_capabilities():
    assert command_cap("goto(s1)") == "positioning"
    assert command_cap("pickup") == "grip"
    assert command_cap(RECONFIGURE) is None


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(9, 60))
def test_lower_bound_never_exceeds_capacity(rate, lb):
    arena = mission_model(MISSION, ModelSpec(CAPS, "pickup", Fraction(rate)), [START])
    u = U("base", 0, 0, False, "extended", lb)
    for l, w in arena.succ[u].items():
        if w != DEPLETED:
            assert MISSION.theta < w.lb <= MISSION.capacity
            if l != "recharge":
                assert w.lb <= lb
