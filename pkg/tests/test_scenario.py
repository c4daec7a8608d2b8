from fractions import Fraction
from pathlib import Path

import pytest

from morph.goal_manager import Variant
from morph.reconfig import capability_profile
from morph.scenario import ScenarioParseError, load_scenario, parse_scenario

SCN = Path(__file__).resolve().parent.parent / "scenarios"


def test_nominal_scenario_fields():
    sc = load_scenario(SCN / "nominal.scn")
    assert (sc.width, sc.height, sc.base) == (8, 8, (0, 0))
    assert sc.sample_names == ["s1", "s2", "s3", "s4", "s5"]
    assert sc.variants == [Variant("nominal", Fraction("1.5")), Variant("conservative", Fraction("2.5"))]
    assert sc.contingencies == ["gps"] and sc.delay == 3 and sc.swaps
    assert capability_profile(sc.configuration()) == {"attitude_ctrl", "positioning", "grip"}
    assert sc.faults.directives == []


def test_fault_directives_are_read():
    sc = load_scenario(SCN / "gripper.scn")
    [d] = sc.faults.directives
    assert d.tick == 12


def test_control_run_keeps_one_variant():
    sc = load_scenario(SCN / "energy_control.scn")
    assert [v.name for v in sc.variants] == ["nominal"] and not sc.swaps


MINIMAL = """
[world]
sample 1 1
component a active
[types]
type a provides attitude_ctrl
[goals]
goal g
assign g cap:attitude_ctrl assert:flight
"""


def test_minimal_scenario_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.battery == 100 and sc.k == 1
    assert sc.variants == [Variant("nominal", Fraction(1))]


@pytest.mark.parametrize("text", [
    MINIMAL + "[nowhere]\n",
    MINIMAL.replace("sample 1 1", "sample 1"),
    MINIMAL.replace("component a active", "component a dozing"),
    MINIMAL.replace("component a active", "component b active"),
    MINIMAL.replace("sample 1 1\n", ""),
    MINIMAL + "[adaptation]\nonly fast\n",
    MINIMAL + "[adaptation]\nswaps maybe\n",
    MINIMAL + "[faults]\nat x fault a\n",
    "sample 1 1\n" + MINIMAL,
])
def test_bad_scenarios(text):
    with pytest.raises(ScenarioParseError):
        parse_scenario(text)


def test_missing_file():
    with pytest.raises(ScenarioParseError):
        load_scenario(SCN / "missing.scn")
