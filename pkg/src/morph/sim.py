"""Deterministic UAV target system: mission world, component architecture,
effectors, probes, translation layer and scripted faults."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .reconfig import (CMD_FAIL, CommandRejected, ComponentType, Configuration, ReconfigError,
                       apply_command, capability_profile, status_label)

# capability each behaviour command needs (None: always available)
COMMAND_CAPS = {
    "takeoff": "attitude_ctrl",
    "land": "attitude_ctrl",
    "goto": "positioning",
    "pickup": "grip",
    "analyse_insitu": "ir_camera",
    "fold_arm": None,
    "recharge": None,
}
SURCHARGE = {"goto": 1, "pickup": 2, "analyse_insitu": 3, "takeoff": 2, "land": 2, "fold_arm": 1,
             "recharge": 0}
RESPONSES = {"takeoff": "takeoff_ok", "land": "landed", "pickup": "pickup_ok",
             "analyse_insitu": "analysis_ok", "fold_arm": "arm_folded", "recharge": "recharged"}
LOW_BATTERY_FRACTION = 0.2


class SimError(Exception):
    pass


class UnknownCommand(SimError):
    pass


class UnmappedSymbol(SimError):
    pass


class FaultScriptError(SimError):
    pass


@dataclass
class Sample:
    name: str
    pos: tuple[int, int]
    state: str = "pending"  # pending | carried | analysed


@dataclass
class World:
    width: int
    height: int
    base: tuple[int, int]
    samples: list[Sample]
    battery: float
    capacity: float
    config: Configuration
    types: dict[str, ComponentType]
    rate: float = 1.0
    pos: tuple[int, int] | None = None
    arm: str = "extended"
    airborne: bool = False
    seed: int = 0
    tick: int = 0
    # goto in progress: destination name and the remaining cells
    motion: tuple[str, list[tuple[int, int]]] | None = None

    def __post_init__(self):
        if self.pos is None:
            self.pos = self.base

    def location(self, pos: tuple[int, int] | None = None) -> str:
        pos = self.pos if pos is None else pos
        if pos == self.base:
            return "base"
        for s in self.samples:
            if s.pos == pos:
                return s.name
        return f"c{pos[0]}_{pos[1]}"

    def named(self, name: str) -> tuple[int, int] | None:
        if name == "base":
            return self.base
        for s in self.samples:
            if s.name == name:
                return s.pos
        m = re.fullmatch(r"c(\d+)_(\d+)", name)
        return (int(m.group(1)), int(m.group(2))) if m else None

    def sample(self, name: str) -> Sample | None:
        return next((s for s in self.samples if s.name == name), None)

    def carrying(self) -> list[str]:
        return [s.name for s in self.samples if s.state == "carried"]

    def profile(self) -> frozenset[str]:
        return capability_profile(self.config)

    def mission_complete(self) -> bool:
        return (all(s.state == "analysed" for s in self.samples) and self.pos == self.base
                and not self.airborne)

    def observables(self) -> dict:
        """The probe view published every tick."""
        return {
            "pos": self.location(),
            "airborne": self.airborne,
            "arm": self.arm,
            "battery": round(self.battery, 6),
            "samples": ",".join(f"{s.name}:{s.state}" for s in self.samples),
            "moving": self.motion is not None,
        }


# -- fault script ------------------------------------------------------------

@dataclass(frozen=True)
class Directive:
    tick: int
    kind: str  # fault | consumption | displace
    args: tuple


@dataclass
class FaultScript:
    directives: list[Directive] = field(default_factory=list)

    def at(self, tick: int) -> list[Directive]:
        return [d for d in self.directives if d.tick == tick]


def parse_fault_line(tok: list[str]) -> Directive:
    try:
        if tok[0] != "at":
            raise ValueError
        t = int(tok[1])
        if tok[2] == "fault" and len(tok) == 4:
            return Directive(t, "fault", (tok[3],))
        if tok[2:4] == ["set", "consumption"] and len(tok) == 5:
            return Directive(t, "consumption", (float(tok[4]),))
        if tok[2] == "displace" and len(tok) == 5:
            return Directive(t, "displace", (int(tok[3]), int(tok[4])))
    except (ValueError, IndexError):
        pass
    raise FaultScriptError(f"cannot parse directive {' '.join(tok)!r}")


def parse_fault_script(lines: Iterable[str]) -> FaultScript:
    out = []
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if line:
            d = parse_fault_line(line.split())
            if out and d.tick < out[-1].tick:
                raise FaultScriptError(f"directive ticks must be nondecreasing: {line!r}")
            out.append(d)
    return FaultScript(out)


# -- translation layer -------------------------------------------------------

_GOTO = re.compile(r"^goto\(([A-Za-z0-9_]+)\)$")


def split_command(cmd: str) -> tuple[str, str | None]:
    m = _GOTO.match(cmd)
    if m:
        return "goto", m.group(1)
    if cmd in COMMAND_CAPS:
        return cmd, None
    raise UnmappedSymbol(cmd)


def path(src: tuple[int, int], dst: tuple[int, int]) -> list[tuple[int, int]]:
    """x first, then y; one cell per entry."""
    cells = []
    x, y = src
    while x != dst[0]:
        x += 1 if dst[0] > x else -1
        cells.append((x, y))
    while y != dst[1]:
        y += 1 if dst[1] > y else -1
        cells.append((x, y))
    return cells


def translate(world: World, cmd: str) -> list[tuple]:
    """Abstract command -> low-level effects executed by the simulator."""
    op, arg = split_command(cmd)
    if op == "goto":
        dst = world.named(arg)
        if dst is None:
            raise UnmappedSymbol(cmd)
        return [("move", c) for c in path(world.pos, dst)]
    return [(op,)]


class Translator:
    """Upward translation; battery level -> edge-triggered ``battery_low``."""

    def __init__(self, capacity: float, fraction: float = LOW_BATTERY_FRACTION):
        self.threshold = capacity * fraction
        self.low = False

    def translate_up(self, obs: tuple) -> str | None:
        if obs[0] == "battery":
            below = obs[1] <= self.threshold
            fire = below and not self.low
            self.low = below
            return "battery_low" if fire else None
        if obs[0] == "arrived":
            return f"arrived({obs[1]})"
        if obs[0] == "fault":
            return f"component_fault({obs[1]})"
        raise UnmappedSymbol(str(obs[0]))


# -- effectors ---------------------------------------------------------------

@dataclass
class TickResult:
    events: list[str] = field(default_factory=list)
    reports: list[str] = field(default_factory=list)  # reconfiguration status observations
    statuses: list[tuple[str, str]] = field(default_factory=list)  # per-instance changes
    telemetry: dict = field(default_factory=dict)
    load: float = 0.0
    flying: bool = False


def apply_reconfig_command(world: World, cmd: str) -> str:
    """Execute one configuration command; returns its status report label."""
    try:
        world.config, touched = apply_command(world.config, cmd, world.types)
    except (CommandRejected, ReconfigError):
        return CMD_FAIL
    return status_label(world.config, touched)


def _statuses(c: Configuration) -> dict[str, str]:
    return {i.id: c.reported_status(i.id) for i in c.instances}


def _kill(world: World, iid: str) -> bool:
    from dataclasses import replace
    inst = world.config.get(iid)
    if inst is None:
        return False
    cfg = world.config.with_instance(replace(inst, status="killed"))
    world.config = replace(cfg, bindings=frozenset(b for b in cfg.bindings if iid not in (b[0], b[2])))
    return True


def _start(world: World, cmd: str, res: TickResult) -> None:
    try:
        op, arg = split_command(cmd)
    except UnmappedSymbol as exc:
        raise UnknownCommand(cmd) from exc
    fail = f"{op}_fail"
    cap = COMMAND_CAPS[op]
    if cap is not None and cap not in world.profile():
        res.events.append(fail)
        return
    if world.motion is not None:
        res.events.append(fail)
        return
    if op == "goto":
        dst = world.named(arg)
        if dst is None:
            raise UnknownCommand(cmd)
        if not world.airborne:
            res.events.append(fail)
            return
        world.motion = (arg, [c for _, c in translate(world, cmd)])
        return
    ok = True
    if op == "takeoff":
        ok = not world.airborne
        if ok:
            world.airborne = True
    elif op == "land":
        ok = world.airborne
        if ok:
            world.airborne = False
            if world.pos == world.base:
                for s in world.samples:
                    if s.state == "carried":
                        s.state = "analysed"
    elif op == "pickup":
        s = world.sample(world.location())
        ok = world.airborne and s is not None and s.state == "pending" and world.arm == "extended"
        if ok:
            s.state = "carried"
    elif op == "analyse_insitu":
        s = world.sample(world.location())
        ok = s is not None and s.state == "pending"
        if ok:
            s.state = "analysed"
    elif op == "fold_arm":
        ok = world.arm == "extended"
        if ok:
            world.arm = "folded"
    elif op == "recharge":
        ok = not world.airborne and world.pos == world.base
    if not ok:
        res.events.append(fail)
        return
    res.load += SURCHARGE[op]
    res.events.append(RESPONSES[op])
    if op == "recharge":
        world.battery = world.capacity


def tick(world: World, behaviour_cmds: list[str], reconfig_cmds: list[str], script: FaultScript,
         translator: Translator) -> TickResult:
    """Advance the world by one tick; mutates ``world``."""
    if len(behaviour_cmds) > 1 or len(reconfig_cmds) > 1:
        raise SimError("at most one behaviour and one reconfiguration command per tick")
    world.tick += 1
    res = TickResult()
    before = _statuses(world.config)
    airborne_before = world.airborne

    for d in script.at(world.tick):
        if d.kind == "fault":
            if _kill(world, d.args[0]):
                res.events.append(translator.translate_up(("fault", d.args[0])))
        elif d.kind == "consumption":
            world.rate = d.args[0]
        elif d.kind == "displace":
            dx, dy = d.args

            def shift(c):
                return (min(max(c[0] + dx, 0), world.width - 1), min(max(c[1] + dy, 0), world.height - 1))

            world.pos = shift(world.pos)
            if world.motion is not None:
                world.motion = (world.motion[0], [shift(c) for c in world.motion[1]])

    for cmd in behaviour_cmds:
        _start(world, cmd, res)
    for cmd in reconfig_cmds:
        res.reports.append(apply_reconfig_command(world, cmd))

    if world.motion is not None:
        dest, cells = world.motion
        if cells:
            world.pos = cells.pop(0)
            res.load += SURCHARGE["goto"]
        if not cells:
            world.motion = None
            res.events.append(translator.translate_up(("arrived", world.location())))
            s = world.sample(world.location())
            if s is not None and s.state == "pending":
                res.events.append(f"sample_detected({s.name})")

    res.flying = airborne_before or world.airborne
    if "recharged" not in res.events:
        world.battery = max(0.0, world.battery - (world.rate if res.flying else 0.0) - res.load)
    low = translator.translate_up(("battery", world.battery))
    if low:
        res.events.append(low)

    after = _statuses(world.config)
    res.statuses = sorted((i, s) for i, s in after.items() if before.get(i) != s)
    res.statuses += sorted((i, "absent") for i in before if i not in after)
    res.telemetry = {**world.observables(), "load": res.load, "flying": res.flying}
    return res
