import random

import pytest

from morph.reconfig import (CMD_FAIL, CommandRejected, ConfigParseError, Infeasible, Instance,
                            StructuralConstraint, TargetSpec, apply_command, capability_profile,
                            check_invariants, make_configuration, parse_configuration, parse_pool,
                            plan_reconfiguration, quiescent_removals, replay)
from oracles import oracle_plan_length, random_reconfig_instance

POOL = parse_pool("""
type attitude provides attitude_ctrl
type gps provides positioning
type gripper provides grip
type wifi provides wifi_signal
type bt provides bt_signal
type cell provides cell_signal
type hybrid provides positioning requires wifi_signal,bt_signal,cell_signal
type ir_cam provides ir_camera param mode=idle
""")
T = {t.name: t for t in POOL}
CS = [StructuralConstraint("never_disabled", "attitude"), StructuralConstraint("max_active", "7")]


def config(*specs, spares=("wifi", "bt", "cell", "hybrid", "ir_cam"), bindings=()):
    insts = [Instance(n, T[n], st, T[n].params) for n, st in specs]
    return make_configuration(insts, bindings, [T[s] for s in spares])


def test_pool_parse():
    assert T["hybrid"].requires == {"wifi_signal", "bt_signal", "cell_signal"}
    assert T["ir_cam"].params == (("mode", "idle"),)
    assert T["gps"].spares == 1
    with pytest.raises(ConfigParseError):
        parse_pool("type x bogus y\n")


def test_max_active_names_all_offenders():
    c = config(("attitude", "active"), ("gps", "active"), ("gripper", "active"), ("wifi", "active"))
    (v,) = check_invariants(c, [StructuralConstraint("max_active", "3")])
    assert v.instances == ("attitude", "gps", "gripper", "wifi")


def test_never_disabled_attitude():
    c = config(("attitude", "inactive"))
    (v,) = check_invariants(c, CS[:1])
    assert v.instances == ("attitude",)


def test_empty_constraints():
    assert check_invariants(config(("gps", "killed")), []) == []


def test_profile_of_gps():
    assert capability_profile(config(("gps", "active"))) == {"positioning"}


def test_hybrid_needs_active_dependencies():
    binds = [("hybrid", "wifi_signal", "wifi"), ("hybrid", "bt_signal", "bt"),
             ("hybrid", "cell_signal", "cell")]
    c = config(("hybrid", "active"), ("wifi", "inactive"), ("bt", "active"), ("cell", "active"),
               bindings=binds)
    assert "positioning" not in capability_profile(c)
    c2 = config(("hybrid", "active"), ("wifi", "active"), ("bt", "active"), ("cell", "active"),
                bindings=binds)
    assert "positioning" in capability_profile(c2)


def test_requirement_cycle_yields_nothing():
    from morph.reconfig import ComponentType
    a = ComponentType("a", frozenset({"x"}), frozenset({"y"}))
    b = ComponentType("b", frozenset({"y"}), frozenset({"x"}))
    c = make_configuration([Instance("a", a, "active"), Instance("b", b, "active")],
                           [("a", "y", "b"), ("b", "x", "a")])
    assert capability_profile(c) == frozenset()


def test_empty_profile():
    assert capability_profile(make_configuration([])) == frozenset()


def test_activate_inactive_gps():
    c = config(("attitude", "active"), ("gps", "inactive"))
    p = plan_reconfiguration(c, TargetSpec(frozenset({"positioning"})), CS, POOL)
    assert p.commands == ["cfg.activate(gps)"]
    assert p.reports == ["cfg.st(gps:active:0)"]


def test_gps_failover_plan():
    c = config(("attitude", "active"), ("gps", "killed"), ("gripper", "active"))
    p = plan_reconfiguration(c, TargetSpec(frozenset({"positioning"})), CS, POOL)
    ops = [cmd.split("(")[0] for cmd in p.commands]
    assert ops.count("cfg.add") == 4 and ops.count("cfg.bind") == 3 and ops.count("cfg.activate") == 4
    assert {cmd for cmd in p.commands if cmd.startswith("cfg.activate")} == {
        "cfg.activate(wifi)", "cfg.activate(bt)", "cfg.activate(cell)", "cfg.activate(hybrid)"}
    assert p.length == oracle_plan_length(c, TargetSpec(frozenset({"positioning"})), CS, POOL)
    assert "positioning" in p.target_profile


def test_forbidding_only_provider_is_infeasible():
    c = config(("attitude", "active"), ("gps", "active"), spares=())
    cs = CS + [StructuralConstraint("always_present", "positioning")]
    res = plan_reconfiguration(c, TargetSpec(frozenset(), frozenset({"gps"})), cs, POOL)
    assert isinstance(res, Infeasible)


def test_removal_goes_through_passivate_and_unbind():
    binds = [("hybrid", "wifi_signal", "wifi"), ("hybrid", "bt_signal", "bt"),
             ("hybrid", "cell_signal", "cell")]
    c = config(("attitude", "active"), ("gps", "active"), ("hybrid", "active"), ("wifi", "active"),
               ("bt", "active"), ("cell", "active"), spares=(), bindings=binds)
    p = plan_reconfiguration(c, TargetSpec(frozenset({"positioning"}), frozenset({"wifi"})), CS, POOL)
    cmds = p.commands
    assert cmds.index("cfg.passivate(hybrid)") < cmds.index("cfg.unbind(hybrid,wifi_signal,wifi)")
    assert cmds.index("cfg.unbind(hybrid,wifi_signal,wifi)") < cmds.index("cfg.remove(wifi)")
    assert cmds.index("cfg.passivate(wifi)") < cmds.index("cfg.remove(wifi)")
    assert quiescent_removals(p)


def test_strategy_automaton_branches_on_failure():
    c = config(("attitude", "active"), ("gps", "inactive"))
    p = plan_reconfiguration(c, TargetSpec(frozenset({"positioning"})), CS, POOL)
    a = p.automaton
    q, cmds = a.initial, a.commands_at(a.initial)
    assert cmds == ["cfg.activate(gps)"]
    q, _ = a.step(q, cmds[0])
    assert a.expected[q] == {"cfg.st(gps:active:0)", CMD_FAIL}
    assert a.step(q, CMD_FAIL)[0] == "failed"
    assert a.step(q, "cfg.st(gps:active:0)")[0] == "done"


def test_setparam_target():
    c = config(("attitude", "active"), ("ir_cam", "active"), spares=())
    p = plan_reconfiguration(c, TargetSpec(params=(("ir_cam", "mode", "thermal"),)), CS, POOL)
    assert p.commands == ["cfg.setparam(ir_cam,mode,thermal)"]


def test_command_rejections():
    c = config(("gps", "killed"), ("ir_cam", "inactive"), spares=(),
               bindings=[])
    with pytest.raises(CommandRejected):
        apply_command(c, "cfg.activate(gps)", T)
    with pytest.raises(CommandRejected):
        apply_command(c, "cfg.add(gps)", T)
    bound = config(("hybrid", "inactive"), ("wifi", "inactive"), spares=(),
                   bindings=[("hybrid", "wifi_signal", "wifi")])
    with pytest.raises(CommandRejected):
        apply_command(bound, "cfg.remove(wifi)", T)


def test_replay_detects_missing_spare():
    c = config(("attitude", "active"), ("gps", "killed"))
    p = plan_reconfiguration(c, TargetSpec(frozenset({"positioning"})), CS, POOL)
    assert replay(p, c, CS) is not None
    drained = config(("attitude", "active"), ("gps", "killed"), spares=("wifi", "bt", "cell"))
    assert replay(p, drained, CS) is None


def test_parse_configuration():
    text = """
        component attitude active
        component gps killed
        constraint never_disabled attitude
        constraint max_active 7
        require positioning
    """
    c, cs, tgt = parse_configuration(text, POOL)
    assert c.get("gps").status == "killed" and c.spares("hybrid") == 1 and c.spares("gps") == 0
    assert [str(x) for x in cs] == ["never_disabled(attitude)", "max_active(7)"]
    assert tgt.required == {"positioning"}
    with pytest.raises(ConfigParseError):
        parse_configuration("component gps sleeping\n", POOL)


def test_planner_matches_bfs_oracle():
    rng = random.Random(2024)
    for _ in range(40):
        c, tgt, cs, pool = random_reconfig_instance(rng)
        p = plan_reconfiguration(c, tgt, cs, pool)
        assert (p.length if p else None) == oracle_plan_length(c, tgt, cs, pool)
        if p:
            trail = replay(p, c, cs)
            assert trail is not None
            assert all(not check_invariants(x, cs) for x in trail)
            assert quiescent_removals(p)


def test_plan_is_deterministic():
    rng = random.Random(99)
    c, tgt, cs, pool = random_reconfig_instance(rng)
    a = plan_reconfiguration(c, tgt, cs, pool)
    b = plan_reconfiguration(c, tgt, cs, list(reversed(pool)))
    assert (a.commands if a else a) == (b.commands if b else b)
