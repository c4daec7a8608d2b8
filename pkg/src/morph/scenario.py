"""Scenario files: sectioned text describing the world, the component pool,
the goal model, adaptation options and the fault script.

::

    [world]
    grid 8 8
    base 0 0
    sample 2 1            # named s1, s2, ... in file order
    battery 100
    threshold 20
    rate 1.0
    component gps active
    bind hybrid wifi_signal wifi
    constraint always_present attitude_ctrl
    [types]
    type gps provides positioning spares 0
    [goals]
    goal mission
    ...
    [adaptation]
    k 1
    delay 3
    variant nominal 1.5
    contingency gps
    initial_rate 1.0
    window 10
    swaps on
    [faults]
    at 10 fault gps
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .goals import GoalModel, GoalModelError, parse_goal_model, validate_goal_graph
from .goal_manager import Variant
from .reconfig import (ComponentType, ConfigParseError, Instance, StructuralConstraint, make_configuration,
                       parse_component_type, parse_constraint)
from .sim import FaultScript, FaultScriptError, Sample, World, parse_fault_script

SECTIONS = ("world", "types", "goals", "adaptation", "faults")


class ScenarioParseError(Exception):
    pass


@dataclass
class Scenario:
    width: int = 8
    height: int = 8
    base: tuple[int, int] = (0, 0)
    samples: list[tuple[int, int]] = field(default_factory=list)
    battery: int = 100
    threshold: int = 20
    rate: float = 1.0
    components: list[tuple[str, str]] = field(default_factory=list)
    bindings: list[tuple[str, str, str]] = field(default_factory=list)
    constraints: list[StructuralConstraint] = field(default_factory=list)
    types: dict[str, ComponentType] = field(default_factory=dict)
    goal_text: str = ""
    k: int = 1
    delay: int = 3
    variants: list[Variant] = field(default_factory=list)
    contingencies: list[str] = field(default_factory=list)
    initial_rate: float | None = None
    window: int = 10
    swaps: bool = True
    faults: FaultScript = field(default_factory=FaultScript)

    @property
    def sample_names(self) -> list[str]:
        return [f"s{i + 1}" for i in range(len(self.samples))]

    def goal_model(self) -> GoalModel:
        return parse_goal_model(self.goal_text)

    def configuration(self):
        used = {t for t, _ in self.components}
        insts = [Instance(t, self.types[t], st, self.types[t].params) for t, st in self.components]
        pool = [ty for name, ty in sorted(self.types.items()) if name not in used]
        return make_configuration(insts, self.bindings, pool)

    def world(self, seed: int = 0) -> World:
        return World(self.width, self.height, self.base,
                     [Sample(n, p) for n, p in zip(self.sample_names, self.samples)],
                     float(self.battery), float(self.battery), self.configuration(), dict(self.types),
                     rate=self.rate, seed=seed)


def _ints(tok, n):
    if len(tok) != n + 1:
        raise ValueError(f"{tok[0]} takes {n} values")
    return [int(x) for x in tok[1:]]


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    section = None
    goals, faults = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if section != "goals" else raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ScenarioParseError(f"line {lineno}: unknown section [{section}]")
            continue
        tok = line.split()
        try:
            if section is None:
                raise ValueError("record outside any section")
            if section == "world":
                _world(sc, tok)
            elif section == "types":
                t = parse_component_type(tok)
                sc.types[t.name] = t
            elif section == "goals":
                goals.append(line)
            elif section == "adaptation":
                _adaptation(sc, tok)
            elif section == "faults":
                faults.append(line)
        except (ValueError, IndexError, ConfigParseError) as exc:
            raise ScenarioParseError(f"line {lineno}: {exc or line}") from exc
    try:
        sc.faults = parse_fault_script(faults)
    except FaultScriptError as exc:
        raise ScenarioParseError(str(exc)) from exc
    sc.goal_text = "\n".join(goals) + "\n"
    try:
        report = validate_goal_graph(parse_goal_model(sc.goal_text))
    except GoalModelError as exc:
        raise ScenarioParseError(f"goal model: {exc}") from exc
    if report:
        raise ScenarioParseError(f"goal model: {[(i.kind, i.subject) for i in report.issues]}")
    for t, _ in sc.components:
        if t not in sc.types:
            raise ScenarioParseError(f"component of unknown type {t}")
    if not sc.samples:
        raise ScenarioParseError("scenario has no samples")
    if not sc.variants:
        sc.variants = [Variant("nominal", Fraction(str(sc.initial_rate or sc.rate)))]
    return sc


def _world(sc: Scenario, tok: list[str]) -> None:
    key = tok[0]
    if key == "grid":
        sc.width, sc.height = _ints(tok, 2)
    elif key == "base":
        sc.base = tuple(_ints(tok, 2))
    elif key == "sample":
        sc.samples.append(tuple(_ints(tok, 2)))
    elif key == "battery":
        (sc.battery,) = _ints(tok, 1)
    elif key == "threshold":
        (sc.threshold,) = _ints(tok, 1)
    elif key == "rate" and len(tok) == 2:
        sc.rate = float(tok[1])
    elif key == "component" and len(tok) == 3:
        if tok[2] not in ("active", "inactive", "killed"):
            raise ValueError(f"bad status {tok[2]}")
        sc.components.append((tok[1], tok[2]))
    elif key == "bind" and len(tok) == 4:
        sc.bindings.append((tok[1], tok[2], tok[3]))
    elif key == "constraint":
        sc.constraints.append(parse_constraint(tok))
    else:
        raise ValueError(f"unknown world record {' '.join(tok)!r}")


def _adaptation(sc: Scenario, tok: list[str]) -> None:
    key = tok[0]
    if key == "k":
        (sc.k,) = _ints(tok, 1)
    elif key == "delay":
        (sc.delay,) = _ints(tok, 1)
    elif key == "variant" and len(tok) == 3:
        sc.variants.append(Variant(tok[1], Fraction(tok[2])))
    elif key == "contingency" and len(tok) >= 2:
        sc.contingencies.extend(tok[1:])
    elif key == "initial_rate" and len(tok) == 2:
        sc.initial_rate = float(tok[1])
    elif key == "window":
        (sc.window,) = _ints(tok, 1)
    elif key == "swaps" and len(tok) == 2 and tok[1] in ("on", "off"):
        sc.swaps = tok[1] == "on"
    elif key == "only" and len(tok) == 2:
        # keep a single named variant (control runs)
        sc.variants = [v for v in sc.variants if v.name == tok[1]]
        if not sc.variants:
            raise ValueError(f"no variant named {tok[1]}")
    else:
        raise ValueError(f"unknown adaptation record {' '.join(tok)!r}")


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    return parse_scenario(text)
