"""Goal Model Manager: resolve OR-refinements, decompose each resolution into a
behaviour problem plus reconfiguration targets, solve both and assemble a
portfolio with its consistency relation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable

from .goals import EmptyResolutionSet, GoalModel, Resolution, rank_resolutions, viable_resolutions
from .lts import RECONFIGURE
from .reconfig import (ComponentType, Configuration, Infeasible, ReconfigStrategy, StructuralConstraint,
                       TargetSpec, capability_profile, plan_reconfiguration)
from .synthesis import (GameProblem, StrategyAutomaton, Unrealizable, check_simulation, solve,
                        verify_closed_loop)
from .uav import UavDomain, UnknownAssertion, command_cap, project_strategy_state

log = logging.getLogger(__name__)

CURRENT = "current"


class EmptyPortfolio(Exception):
    pass


@dataclass(frozen=True)
class Variant:
    """Assumption variant: the behaviour strategy assumes consumption_rate <= bound."""
    name: str
    bound: Fraction


@dataclass
class ModelRegistry:
    """Everything the manager needs besides the goal model and the snapshot."""
    domain: UavDomain
    types: dict[str, ComponentType]
    constraints: list[StructuralConstraint] = field(default_factory=list)
    variants: list[Variant] = field(default_factory=lambda: [Variant("nominal", Fraction(1))])
    contingencies: list[str] = field(default_factory=list)  # instances whose loss gets a stored remedy
    _plans: dict = field(default_factory=dict, repr=False)

    def plan(self, current: Configuration, target: TargetSpec, sid: str) -> ReconfigStrategy | Infeasible:
        key = (current, target)
        if key not in self._plans:
            self._plans[key] = plan_reconfiguration(current, target, self.constraints,
                                                    list(self.types.values()), sid="plan")
        res = self._plans[key]
        if isinstance(res, Infeasible):
            return res
        return replace(res, id=sid, automaton=replace(res.automaton, id=sid))


@dataclass
class AdaptationProblem:
    behaviour: GameProblem
    reconfig_targets: list[TargetSpec]
    resolution: Resolution
    post_caps: frozenset[str] | None = None


@dataclass
class BehaviourEntry:
    id: str
    strategy: StrategyAutomaton
    resolution: Resolution
    variant: str
    bound: Fraction  # assumption descriptor: consumption_rate <= bound
    required: frozenset[str]
    post_caps: frozenset[str] | None = None  # set for mode-switch strategies

    @property
    def in_strategy_reconfig(self) -> bool:
        return self.post_caps is not None

    def admits(self, rate) -> bool:
        return rate is None or Fraction(str(rate)) <= self.bound


@dataclass
class Portfolio:
    behaviours: dict[str, BehaviourEntry] = field(default_factory=dict)
    reconfigs: dict[str, ReconfigStrategy] = field(default_factory=dict)
    consistency: set[tuple[str, str]] = field(default_factory=set)
    tags: dict[tuple[str, str], str] = field(default_factory=dict)  # pair -> resolution key
    ranking: list[str] = field(default_factory=list)  # resolution keys, best first
    hierarchy: list[list[str]] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    base_profile: frozenset[str] = frozenset()

    def related(self, bid: str) -> list[str]:
        rs = [r for b, r in self.consistency if b == bid]
        return sorted(rs, key=lambda r: (r != CURRENT, r))

    def consistent(self, bid: str, rid: str) -> bool:
        return (bid, rid) in self.consistency

    def relation_text(self) -> str:
        return ";".join(f"{b}|{r}" for b, r in sorted(self.consistency))

    def dump(self) -> str:
        out = [f"ranking {' '.join(self.ranking)}"]
        for bid, b in sorted(self.behaviours.items()):
            out.append(f"behaviour {bid} variant={b.variant} bound={b.bound} "
                       f"required={','.join(sorted(b.required))} states={len(b.strategy.delta)}")
        for rid, r in sorted(self.reconfigs.items()):
            out.append(f"reconfig {rid} {' '.join(r.commands)}")
        for b, r in sorted(self.consistency):
            out.append(f"relate {b} {r} {self.tags[(b, r)]}")
        for chain in self.hierarchy:
            out.append("hierarchy " + " > ".join(chain))
        for what, why in self.skipped:
            out.append(f"skipped {what}: {why}")
        return "\n".join(out) + "\n"


def achievable_profile(current: Configuration, types: dict[str, ComponentType],
                       unavailable: frozenset[str] = frozenset()) -> frozenset[str]:
    """Tags the current configuration provides or could provide from spares and idle instances."""
    tags = set(capability_profile(current))
    for tname, n in current.pool:
        if n > 0 and tname in types:
            tags |= types[tname].provides
    for inst in current.instances:
        if inst.status != "killed":
            tags |= inst.type.provides
    return frozenset(tags) - unavailable


def decompose(res: Resolution, snapshot, models: ModelRegistry, current: Configuration,
              rate=None, unavailable: frozenset[str] = frozenset()) -> AdaptationProblem:
    profile = capability_profile(current) - unavailable
    gap = res.capabilities - profile
    goal = models.domain.goal(res.labels, label=res.key)
    rate = models.variants[0].bound if rate is None else rate
    if not gap:
        arena = models.domain.arena(res.labels, snapshot, rate, profile)
        return AdaptationProblem(GameProblem(arena, goal), [], res)
    post = profile | gap
    arena = models.domain.arena(res.labels, snapshot, rate, profile, post_caps=post)
    return AdaptationProblem(GameProblem(arena, goal), [TargetSpec(required=frozenset(gap))], res, post)


def required_profile(s: StrategyAutomaton) -> frozenset[str]:
    used = set()
    for q, d in s.delta.items():
        for l in d:
            if l in s.controllable:
                cap = command_cap(l)
                if cap:
                    used.add(cap)
    return frozenset(used)


def precompute_portfolio(model: GoalModel, snapshot, k: int, models: ModelRegistry,
                         current: Configuration, unavailable: Iterable[str] = ()) -> Portfolio:
    if k < 1:
        raise ValueError("k must be at least 1")
    unavailable = frozenset(unavailable)
    profile = capability_profile(current) - unavailable
    pf = Portfolio(base_profile=profile)
    try:
        viable = viable_resolutions(model, [achievable_profile(current, models.types, unavailable)])
    except EmptyResolutionSet as exc:
        raise EmptyPortfolio(str(exc)) from exc
    ranked = rank_resolutions(viable, model.soft)[:k]

    for iid in models.contingencies:
        inst = current.get(iid)
        if inst is None or inst.status == "killed":
            continue
        lost = _kill(current, iid)
        plan = models.plan(lost, TargetSpec(required=profile), f"r_{iid}_loss")
        if isinstance(plan, Infeasible):
            pf.skipped.append((f"r_{iid}_loss", plan.reason))
        else:
            pf.reconfigs[plan.id] = plan

    for res in ranked:
        rid = None
        chain = []
        for v in sorted(models.variants, key=lambda v: (v.bound, v.name)):
            bid = f"{res.key}/{v.name}"
            try:
                prob = decompose(res, snapshot, models, current, v.bound, unavailable)
            except UnknownAssertion:
                raise
            if prob.reconfig_targets and rid is None:
                plan = models.plan(current, prob.reconfig_targets[0], f"r_{res.key}")
                if isinstance(plan, Infeasible):
                    pf.skipped.append((res.key, f"reconfiguration infeasible: {plan.reason}"))
                    break
                rid = plan.id
                pf.reconfigs[rid] = plan
            s = solve(prob.behaviour, bid)
            if isinstance(s, Unrealizable):
                pf.skipped.append((bid, f"unrealizable: {s.reason}"))
                continue
            report = verify_closed_loop(prob.behaviour.arena, s, prob.behaviour.goal)
            if not report:
                pf.skipped.append((bid, f"verification failed: {report.reason}"))
                continue
            if chain and not check_simulation(pf.behaviours[chain[-1]].strategy, s, project_strategy_state):
                pf.skipped.append((bid, f"not simulating {chain[-1]}"))
                continue
            s.meta["post_caps"] = prob.post_caps
            req = required_profile(s)
            pf.behaviours[bid] = BehaviourEntry(bid, s, res, v.name, v.bound, req, prob.post_caps)
            chain.append(bid)
            _relate(pf, bid, res, profile, rid)
        if chain:
            pf.ranking.append(res.key)
            if len(chain) > 1:
                pf.hierarchy.append(chain)
    if not pf.behaviours:
        raise EmptyPortfolio("; ".join(f"{w}: {r}" for w, r in pf.skipped) or "no viable resolution")
    return pf


def _relate(pf: Portfolio, bid: str, res: Resolution, profile: frozenset[str], rid: str | None) -> None:
    b = pf.behaviours[bid]
    if rid is not None:
        pairs = [rid]
    else:
        pairs = [CURRENT] if b.required <= profile else []
        pairs += [r for r, plan in sorted(pf.reconfigs.items())
                  if r.endswith("_loss") and b.required <= plan.target_profile]
    for r in pairs:
        pf.consistency.add((bid, r))
        pf.tags[(bid, r)] = res.key


def _kill(c: Configuration, iid: str) -> Configuration:
    inst = c.get(iid)
    c = c.with_instance(replace(inst, status="killed"))
    return replace(c, bindings=frozenset(b for b in c.bindings if iid not in (b[0], b[2])))


def check_portfolio(pf: Portfolio) -> list[str]:
    """Well-formedness problems; empty when the portfolio is sound."""
    out = []
    for bid, b in pf.behaviours.items():
        rel = pf.related(bid)
        if not rel:
            out.append(f"{bid} relates to nothing")
        for r in rel:
            prof = pf.base_profile if r == CURRENT else pf.reconfigs[r].target_profile
            if not b.required <= prof:
                out.append(f"{bid} needs {sorted(b.required - prof)} beyond {r}")
        if any(RECONFIGURE in d for d in b.strategy.delta.values()) != b.in_strategy_reconfig:
            out.append(f"{bid} reconfigure usage disagrees with its arena")
    return out


@dataclass
class Escalation:
    tick: int
    reason: str
    unavailable: frozenset[str]
    due: int


class GoalManager:
    """Top layer: owns the goal model view and recomputes on escalation after a delay."""

    def __init__(self, models: ModelRegistry, k: int = 1, delay: int = 3):
        self.models = models
        self.k = k
        self.delay = delay
        self.unavailable: set[str] = set()
        self.pending: list[tuple[Escalation, Portfolio | EmptyPortfolio]] = []

    def precompute(self, model: GoalModel, snapshot, current: Configuration) -> Portfolio:
        return precompute_portfolio(model, snapshot, self.k, self.models, current, self.unavailable)

    def handle_escalation(self, exc, repo, current: Configuration, tick: int) -> Escalation:
        """Recompute now with the offending capability marked unavailable; deliver after the delay."""
        cap = _failed_capability(getattr(exc, "observation", ""))
        if cap:
            self.unavailable.add(cap)
        esc = Escalation(tick, getattr(exc, "kind", str(exc)), frozenset(self.unavailable), tick + self.delay)
        try:
            result = self.precompute(repo.model, repo.snapshot(), current)
        except EmptyPortfolio as e:
            result = e
        self.pending.append((esc, result))
        return esc

    def due(self, tick: int) -> list[tuple[Escalation, Portfolio | EmptyPortfolio]]:
        ready = [p for p in self.pending if p[0].due <= tick]
        self.pending = [p for p in self.pending if p[0].due > tick]
        return ready


def _failed_capability(obs: str) -> str | None:
    if obs and obs.endswith("_fail") and not obs.startswith("cfg."):
        try:
            return command_cap(obs[: -len("_fail")])
        except Exception:
            return None
    return None
