"""UAV mission domain: behaviour arenas, the behaviour-goal registry and the
snapshot abstraction used for hot-swap entry.

Arena states are macro states of the mission. A state records where the UAV
is, how many samples (in the fixed mission order) have been handled, how many
are carried, flight and arm status, an integer lower bound on the battery and,
for states waiting on a command response, the pending command. The lower
bound is charged pessimistically at the assumed consumption rate, so a
strategy that keeps it above the threshold keeps the real battery above it
whenever the real rate is no worse than the assumed one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple

from .lts import Lts, ModeSwitchSpec, RECONFIGURE, mode_switch_compose, untag
from .synthesis import BehaviourGoal
from .sim import SURCHARGE, RESPONSES

RECONF_OK = "cfg.reconf_ok"
RECONF_FAIL = "cfg.reconf_fail"
DEPLETED = "depleted"


class UnknownAssertion(Exception):
    pass


class U(NamedTuple):
    loc: str
    k: int  # samples handled so far, in mission order
    carry: int
    air: bool
    arm: str
    lb: int
    pend: str | None = None  # command awaiting its response

    def __repr__(self) -> str:
        p = f"/{self.pend}" if self.pend else ""
        return (f"{self.loc}:k{self.k}:c{self.carry}:{'air' if self.air else 'gnd'}:"
                f"{self.arm[0]}:b{self.lb}{p}")


def observable(u) -> tuple:
    """Drop the battery bookkeeping; keeps any mode tag."""
    if isinstance(u, tuple) and len(u) == 2 and u[0] in ("pre", "post"):
        return (u[0], observable(u[1]))
    if isinstance(u, U):
        return (u.loc, u.k, u.carry, u.air, u.arm, u.pend)
    return u


@dataclass(frozen=True)
class Mission:
    base: tuple[int, int]
    samples: tuple[tuple[str, tuple[int, int]], ...]
    capacity: int
    theta: int

    @property
    def n(self) -> int:
        return len(self.samples)

    def where(self, name: str) -> tuple[int, int]:
        if name == "base":
            return self.base
        for s, p in self.samples:
            if s == name:
                return p
        x, y = name[1:].split("_")
        return int(x), int(y)

    def dist(self, a: str, b: str) -> int:
        (x0, y0), (x1, y1) = self.where(a), self.where(b)
        return abs(x0 - x1) + abs(y0 - y1)

    def target_name(self, k: int) -> str | None:
        return self.samples[k][0] if k < self.n else None


# -- arena construction ------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    caps: frozenset[str]
    handling: str  # "pickup" | "insitu"
    rate: Fraction
    allow_fold: bool = False


def _moves(m: Mission, spec: ModelSpec, o: tuple) -> list[tuple[str, str, tuple, Fraction | None]]:
    """Observable moves (command, response, next observable, battery cost); cost None = recharge."""
    loc, k, carry, air, arm = o
    caps, r = spec.caps, spec.rate
    out = []
    if not air:
        if "attitude_ctrl" in caps:
            out.append(("takeoff", RESPONSES["takeoff"], (loc, k, carry, True, arm), r + SURCHARGE["takeoff"]))
        if loc == "base":
            out.append(("recharge", RESPONSES["recharge"], o, None))
        if spec.allow_fold and arm == "extended":
            out.append(("fold_arm", RESPONSES["fold_arm"], (loc, k, carry, air, "folded"),
                        Fraction(SURCHARGE["fold_arm"])))
        return out
    if "attitude_ctrl" in caps:
        c2 = 0 if loc == "base" else carry
        out.append(("land", RESPONSES["land"], (loc, k, c2, False, arm), r + SURCHARGE["land"]))
    nxt = m.target_name(k)
    if "positioning" in caps:
        for dst in sorted({"base", nxt} - {None, loc}):
            d = m.dist(loc, dst)
            out.append((f"goto({dst})", f"arrived({dst})", (dst, k, carry, air, arm), d * (r + SURCHARGE["goto"])))
    if loc == nxt:
        if spec.handling == "pickup" and "grip" in caps and arm == "extended":
            out.append(("pickup", RESPONSES["pickup"], (loc, k + 1, carry + 1, air, arm), r + SURCHARGE["pickup"]))
        if spec.handling == "insitu" and "ir_camera" in caps:
            out.append(("analyse_insitu", RESPONSES["analyse_insitu"], (loc, k + 1, carry, air, arm),
                        r + SURCHARGE["analyse_insitu"]))
    return out


def _observables(m: Mission, spec: ModelSpec, seeds: Iterable[tuple]) -> list[tuple]:
    seen, stack = set(), list(seeds)
    while stack:
        o = stack.pop()
        if o in seen:
            continue
        seen.add(o)
        stack.extend(t for _, _, t, _ in _moves(m, spec, o))
    return sorted(seen, key=repr)


def mission_model(m: Mission, spec: ModelSpec, seeds: Iterable[tuple],
                  reconf_entries: Iterable[tuple] = ()) -> Lts:
    """Arena over every battery bound for the observables reachable from ``seeds``.

    ``reconf_entries`` are observables at which a post-reconfiguration model
    is entered; each gets a waiting state answered by ``cfg.reconf_ok``.
    """
    lo, hi = m.theta + 1, m.capacity
    entries = list(reconf_entries)
    obs = _observables(m, spec, list(seeds) + entries)
    states, trans = [DEPLETED], []
    ctrl, labels = set(), {RECONF_OK}
    for o in obs:
        moves = _moves(m, spec, o)
        for lb in range(lo, hi + 1):
            u = U(*o, lb)
            states.append(u)
            for cmd, resp, o2, cost in moves:
                ctrl.add(cmd)
                labels.update((cmd, resp))
                lb2 = hi if cost is None else math.floor(lb - cost)
                if lb2 < lo:
                    trans.append((u, cmd, DEPLETED))
                    continue
                w = U(*o, lb2, cmd)
                states.append(w)
                trans.append((u, cmd, w))
                trans.append((w, resp, U(*o2, lb2)))
    for o in entries:
        for lb in range(lo, hi + 1):
            w = U(*o, lb, "reconf")
            states.append(w)
            trans.append((w, RECONF_OK, U(*o, lb)))
    init = U(*obs[0], hi) if obs else DEPLETED
    return Lts(states, init, sorted(labels), sorted(ctrl), trans)


def guard(u) -> bool:
    """Switch point for in-flight reconfiguration: landed with the arm folded."""
    return isinstance(u, U) and u.pend is None and not u.air and u.arm == "folded"


# -- goal registry ---------------------------------------------------------

@dataclass(frozen=True)
class GoalPart:
    kind: str  # "target" | "invariant" | "accept" | "none"
    predicate: Callable | None = None


def mission_done(m: Mission) -> Callable:
    def done(s) -> bool:
        u = untag(s)
        return (isinstance(u, U) and u.pend is None and u.k == m.n and u.carry == 0
                and u.loc == "base" and not u.air)
    return done


def not_depleted(s) -> bool:
    return untag(s) != DEPLETED


def goal_registry(m: Mission) -> dict[str, GoalPart]:
    done = mission_done(m)
    return {
        "collect_at_base": GoalPart("target", done),
        "analyse_insitu": GoalPart("target", done),
        "battery_safe": GoalPart("invariant", not_depleted),
        # capability-only leaves; met by the configuration, not by behaviour
        "positioning": GoalPart("none"),
        "flight": GoalPart("none"),
        "consumption_bound": GoalPart("none"),
    }


def assemble_goal(labels: Iterable[str], registry: dict[str, GoalPart], label: str = "goal") -> BehaviourGoal:
    parts = []
    for l in sorted(labels):
        if l not in registry:
            raise UnknownAssertion(l)
        parts.append(registry[l])
    targets = [p.predicate for p in parts if p.kind == "target"]
    accepts = [p.predicate for p in parts if p.kind == "accept"]
    invs = [p.predicate for p in parts if p.kind == "invariant"]

    def conj(ps):
        return (lambda s: all(p(s) for p in ps)) if ps else None

    inv = conj(invs)
    if accepts:
        return BehaviourGoal(label, "buchi", conj(accepts + targets), inv)
    if targets:
        return BehaviourGoal(label, "reach", conj(targets), inv)
    bad = (lambda s: not inv(s)) if inv else (lambda s: False)
    return BehaviourGoal(label, "safety", bad)


def handling_of(labels: Iterable[str]) -> str:
    return "insitu" if "analyse_insitu" in set(labels) else "pickup"


# -- snapshot abstraction ----------------------------------------------------

def abstract(m: Mission, snap) -> tuple | None:
    """World snapshot -> observable mission state, or None when outside the abstraction."""
    states = [p.split(":") for p in str(snap.get("samples", "")).split(",") if p]
    order = [s for s, _ in m.samples]
    if [s for s, _ in states] != order:
        return None
    handled = [st != "pending" for _, st in states]
    k = sum(handled)
    if handled != [True] * k + [False] * (len(handled) - k):
        return None
    carry = sum(st == "carried" for _, st in states)
    return (snap.get("pos", "base"), k, carry, bool(snap.get("airborne")), snap.get("arm", "extended"))


def battery_bound(m: Mission, snap) -> int:
    return min(m.capacity, math.floor(Fraction(str(snap.get("battery", m.capacity)))))


@dataclass
class UavDomain:
    """Builds behaviour problems for resolutions of the UAV goal model."""
    mission: Mission
    registry: dict[str, GoalPart] = field(default_factory=dict)

    def __post_init__(self):
        if not self.registry:
            self.registry = goal_registry(self.mission)

    def goal(self, labels: Iterable[str], label: str = "goal") -> BehaviourGoal:
        return assemble_goal(labels, self.registry, label)

    def arena(self, labels: Iterable[str], snap, rate, pre_caps: frozenset[str],
              post_caps: frozenset[str] | None = None) -> Lts:
        """Plain arena over ``pre_caps``, or a mode-switch arena when ``post_caps`` is given."""
        m = self.mission
        rate = Fraction(str(rate))
        handling = handling_of(labels)
        start = abstract(m, snap)
        seeds = [("base", 0, 0, False, "extended")] + ([start] if start else [])
        if post_caps is None:
            arena = mission_model(m, ModelSpec(frozenset(pre_caps), handling, rate), seeds)
            init = self._initial(arena, start, snap)
            return _with_initial(arena, init)
        pre = mission_model(m, ModelSpec(frozenset(pre_caps), handling, rate, allow_fold=True), seeds)
        entries = sorted({observable(u)[:5] for u in pre.states if guard(u)}, key=repr)
        post = mission_model(m, ModelSpec(frozenset(post_caps), handling, rate), [], reconf_entries=entries)
        arena = mode_switch_compose(ModeSwitchSpec(pre, post, guard, post_entry=lambda u: u._replace(pend="reconf")))
        arena = _add_label(arena, RECONF_FAIL)
        init = self._initial(pre, start, snap)
        return _with_initial(arena, ("pre", init))

    def _initial(self, arena: Lts, start, snap):
        if start is None:
            return DEPLETED
        u = U(*start, battery_bound(self.mission, snap))
        return u if u in arena.states else DEPLETED

    def entry(self, strategy, snap, profile: frozenset[str]) -> list:
        """Strategy states matching the snapshot (entry predicate = equality after abstraction)."""
        o = abstract(self.mission, snap)
        if o is None or snap.get("moving"):
            return []
        u = U(*o, battery_bound(self.mission, snap))
        post_caps = strategy.meta.get("post_caps")
        if post_caps is not None:
            u = ("post" if post_caps <= profile else "pre", u)
        return strategy.entry_states(u)


def _with_initial(arena: Lts, init) -> Lts:
    if init == arena.initial:
        return arena
    return Lts(arena.states, init, arena.alphabet, arena.controllable, arena.transitions())


def _add_label(arena: Lts, label: str) -> Lts:
    return Lts(arena.states, arena.initial, set(arena.alphabet) | {label}, arena.controllable,
               arena.transitions())


def project_strategy_state(q):
    """Projection used for the degradation check: mission state without the battery bound."""
    return observable(q)


def command_cap(cmd: str) -> str | None:
    from .sim import COMMAND_CAPS, split_command
    if cmd == RECONFIGURE:
        return None
    return COMMAND_CAPS[split_command(cmd)[0]]
