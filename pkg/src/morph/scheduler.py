"""Deterministic executive: one tick runs the target, the repository, the
enactors, the strategy managers and the goal manager, in that order.

Commands chosen in tick t are dispatched to the target in phase 1 of tick
t+1. Messages between layers are plain lists drained in phase order, so a
run is a pure function of (scenario, seed, max_ticks).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from .enactment import (RECONF_FAIL, RECONF_OK, EnactorHandle, ExceptionRecord, dispatch, drain_buffer,
                        load_plan, start_reconfig, step_behaviour, step_reconfig, swap_point)
from .goal_manager import CURRENT, EmptyPortfolio, GoalManager, ModelRegistry, Portfolio, Variant
from .knowledge import InsufficientSamples, KnowledgeRepo, LogRecord
from .lts import RECONFIGURE
from .managers import ManagerState, SwapFailure, hot_swap, negotiate
from .reconfig import capability_profile
from .scenario import Scenario
from .sim import Translator, tick as sim_tick
from .trace import TraceRecord, dump_trace
from .uav import Mission, UavDomain

log = logging.getLogger(__name__)

EXIT_COMPLETE, EXIT_USAGE, EXIT_ABORTED, EXIT_TIMEOUT, EXIT_UNREALIZABLE = 0, 1, 2, 3, 4
EXIT_CODES = {"complete": EXIT_COMPLETE, "aborted": EXIT_ABORTED, "timeout": EXIT_TIMEOUT}
INFO_EVENTS = ("sample_detected(", "component_fault(")


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    status: str = "timeout"
    ticks: int = 0
    battery: list[float] = field(default_factory=list)  # level at the end of each tick

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def text(self) -> str:
        return dump_trace(self.records)


class Run:
    def __init__(self, sc: Scenario, seed: int = 0):
        self.sc = sc
        self.world = sc.world(seed)
        self.translator = Translator(self.world.capacity)
        mission = Mission(sc.base, tuple(zip(sc.sample_names, sc.samples)), sc.battery, sc.threshold)
        self.domain = UavDomain(mission)
        self.models = ModelRegistry(self.domain, dict(sc.types), list(sc.constraints), list(sc.variants),
                                    list(sc.contingencies))
        self.repo = KnowledgeRepo(sc.goal_model(), bounds=[v.bound for v in sc.variants], window=sc.window,
                                  initial_rate=sc.initial_rate)
        self.gm = GoalManager(self.models, sc.k, sc.delay)
        self.mgr = ManagerState()
        self.be = EnactorHandle("behaviour")
        self.re = EnactorHandle("reconfig")
        self.trace = Trace()
        self.t = 0
        self.pending_swap: str | None = None
        self.pending_stage: str | None = None
        self.exceptions: list[ExceptionRecord] = []
        self.knowledge: list = []
        self.escalations: list[tuple[str, ExceptionRecord | None]] = []
        self.deliveries: list[Portfolio] = []
        self.inject: list[str] = []

    # -- helpers -------------------------------------------------------------
    def emit(self, layer: str, kind: str, **detail) -> None:
        self.trace.records.append(TraceRecord.make(self.t, layer, kind, **detail))

    def profile(self) -> frozenset[str]:
        return capability_profile(self.world.config)

    def matcher(self, strategy, snap):
        return self.domain.entry(strategy, snap, self.profile())

    def _ingest(self, res=None) -> None:
        w, t = self.world, self.t
        if res is None:
            for i in w.config.instances:
                self.repo.append_log(LogRecord(t, "target", "status",
                                               {"instance": i.id, "status": w.config.reported_status(i.id)}))
            self.repo.append_log(LogRecord(t, "target", "metric", {**w.observables(), "load": 0.0,
                                                                   "flying": False}))
            return
        for ev in res.events:
            self.repo.append_log(LogRecord(t, "target", "event", {"event": ev}))
        for iid, st in res.statuses:
            self.repo.append_log(LogRecord(t, "target", "status", {"instance": iid, "status": st}))
        self.repo.append_log(LogRecord(t, "target", "metric", dict(res.telemetry)))

    # -- layers --------------------------------------------------------------
    def install(self, pf: Portfolio) -> None:
        self.mgr.portfolio = pf
        self.repo.set_bounds(b.bound for b in pf.behaviours.values())
        self.emit("mgr", "notify", msg="installed", relation=pf.relation_text(),
                  behaviours=sorted(pf.behaviours), reconfigs=sorted(pf.reconfigs))

    def negotiate(self, trigger: str) -> bool:
        tr = negotiate(self.mgr, self.repo.snapshot(), self.world.config, trigger, self.models.constraints,
                       self.models.types, frozenset(self.gm.unavailable))
        for name, d in tr.messages:
            self.emit("mgr", "negotiate", msg=name, trigger=trigger,
                      **{k: (v.replace(" ", "_") if isinstance(v, str) else v) for k, v in d.items()})
        if not tr.committed:
            return False
        sel = tr.selection
        pf = self.mgr.portfolio
        b = pf.behaviours[sel.behaviour]
        if sel.reconfig != CURRENT:
            plan = pf.reconfigs[sel.reconfig]
            if b.in_strategy_reconfig:
                load_plan(self.re, plan, staged=False)
                self.emit("mgr", "notify", msg="plan_loaded", r=plan.id)
            elif self.re.plan is None or self.re.plan.id != plan.id or self.re.mode != "running":
                self.pending_stage = plan.id
        if self.be.strategy is None or self.be.strategy.id != b.id or self.be.mode == "faulted":
            self.pending_swap = b.id
        return True

    def try_stage_and_swap(self) -> None:
        pf = self.mgr.portfolio
        if self.pending_stage and self.re.mode != "running" and self.be.mode != "awaiting_reconfig" \
                and not self.be.buffer:
            plan = pf.reconfigs[self.pending_stage]
            self.pending_stage = None
            load_plan(self.re, plan, staged=True)
            start_reconfig(self.re)
            self.be.held = True
            self.emit("mgr", "notify", msg="stage_start", r=plan.id)
        staging = self.re.staged and self.re.mode == "running"
        snap = self.repo.snapshot()
        if self.pending_swap and not staging and swap_point(self.be) and not snap.get("moving"):
            new = pf.behaviours[self.pending_swap].strategy
            self.pending_swap = None
            try:
                res = hot_swap(self.be, new, snap, self.matcher)
            except SwapFailure as exc:
                rec = ExceptionRecord("SwapFailure", self.t, str(exc).replace(" ", "_"), new.id, "-")
                self.emit("mgr", "exception", exc=rec.kind, obs=rec.observation, strategy=new.id)
                self.escalations.append(("swap_failure", rec))
                return
            self.emit("mgr", "swap", old=res.old, new=res.new, entry=res.entry)

    def phase_target(self):
        cmds = dispatch(self.be) if self.be.strategy is not None else []
        for c in cmds:
            self.emit("enact_b", "command", cmd=c)
        if RECONFIGURE in cmds:
            cmds = [c for c in cmds if c != RECONFIGURE]
            if self.re.plan is not None and self.re.mode == "idle" and not self.re.staged:
                start_reconfig(self.re)
            else:
                self.inject.append(RECONF_FAIL)
        rcmds = dispatch(self.re) if self.re.mode == "running" else []
        for c in rcmds:
            self.emit("enact_r", "command", cmd=c)
        res = sim_tick(self.world, cmds, rcmds, self.sc.faults, self.translator)
        for ev in res.events:
            self.emit("target", "event", ev=ev)
        for rep in res.reports:
            self.emit("target", "status", report=rep)
        for iid, st in res.statuses:
            self.emit("target", "status", inst=iid, status=st)
        self.emit("target", "status", battery=_num(self.world.battery), pos=self.world.location(),
                  airborne=self.world.airborne)
        return res

    def phase_repo(self, res) -> None:
        self._ingest(res)
        try:
            self.repo.infer_consumption_rate()
        except InsufficientSamples:
            pass
        for note in self.repo.drain_notifications():
            self.emit("repo", "notify", note=note.kind, subject=note.subject, old=_num(note.old),
                      new=_num(note.new))
            self.knowledge.append(note)

    def _raise(self, layer: str, rec: ExceptionRecord) -> None:
        self.emit(layer, "exception", exc=rec.kind, obs=rec.observation, strategy=rec.strategy,
                  state=rec.state.replace(" ", ""))
        self.exceptions.append(rec)

    def phase_enact(self, res) -> None:
        events = list(self.inject)
        self.inject = []
        for rep in res.reports:
            r = step_reconfig(self.re, rep, self.t)
            if isinstance(r, ExceptionRecord):
                self._raise("enact_r", r)
                if self.re.staged:
                    self.be.held = False
                    self.re.staged = False
                else:
                    events.append(RECONF_FAIL)
                continue
            _, signal = r
            if signal:
                self.emit("enact_r", "event", ev=signal)
                if self.re.staged:
                    self.re.staged = False
                    self.be.held = False
                    self.emit("mgr", "notify", msg="stage_done", r=self.re.plan.id)
                else:
                    events.append(signal)
        events += [e for e in res.events if not e.startswith(INFO_EVENTS)]
        if self.be.strategy is None:
            return
        if not self.be.held and self.be.buffer and self.be.mode == "running":
            r = drain_buffer(self.be, self.t)
            if isinstance(r, ExceptionRecord):
                self._raise("enact_b", r)
        for ev in events:
            r = step_behaviour(self.be, ev, self.t)
            if isinstance(r, ExceptionRecord):
                self.be.inflight = None
                self._raise("enact_b", r)
                break
            if ev == RECONF_OK:
                r = drain_buffer(self.be, self.t)
                if isinstance(r, ExceptionRecord):
                    self._raise("enact_b", r)
                    break

    def phase_managers(self) -> None:
        for pf in self.deliveries:
            self.install(pf)
            if not self.negotiate("portfolio"):
                self.escalations.append(("no_viable", None))
        self.deliveries = []
        if self.exceptions:
            for rec in self.exceptions:
                if not self.negotiate("exception"):
                    self.emit("mgr", "exception", exc="NoViableStrategy", obs=rec.observation, strategy=rec.strategy)
                    self.escalations.append(("no_viable", rec))
            self.exceptions = []
        elif self.sc.swaps:
            notes, self.knowledge = self.knowledge, []
            for note in notes:
                if note.kind == "goal_model_edited":
                    self.escalations.append(("goal_model_edited", None))
                elif not self.negotiate("knowledge"):
                    if note.kind == "capability_availability_changed":
                        # no stored remedy; the fault surfaces through the enactor if it matters
                        self.emit("mgr", "notify", msg="deferred", subject=note.subject)
                    else:
                        self.emit("mgr", "exception", exc="NoViableStrategy", obs=note.kind, strategy=self.be.strategy_id)
                        self.escalations.append((note.kind, None))
        else:
            self.knowledge = []
        self.try_stage_and_swap()

    def phase_goal(self) -> None:
        for why, rec in self.escalations:
            if why == "assumption_updated":
                self._revise_variants()
            esc = self.gm.handle_escalation(rec or _Reason(why), self.repo, self.world.config, self.t)
            self.emit("goal", "notify", msg="recompute", reason=why, due=esc.due,
                      unavailable=sorted(esc.unavailable))
        self.escalations = []
        for esc, result in self.gm.due(self.t):
            if isinstance(result, EmptyPortfolio):
                self.emit("goal", "notify", msg="empty_portfolio", reason=str(result).replace(" ", "_"))
                self.trace.status = "aborted"
                return
            self.emit("goal", "notify", msg="portfolio", behaviours=sorted(result.behaviours),
                      relation=result.relation_text())
            self.deliveries.append(result)

    def _revise_variants(self) -> None:
        rate = self.repo.snapshot().get("consumption_rate")
        if rate is None:
            return
        bound = Fraction(str(rate)).limit_denominator(10)
        if all(v.bound < bound for v in self.models.variants):
            self.models.variants.append(Variant(f"revised{len(self.models.variants)}", bound))

    # -- driver --------------------------------------------------------------
    def run(self, max_ticks: int) -> Trace:
        if max_ticks <= 0:
            return self.trace
        self._ingest()
        try:
            pf = self.gm.precompute(self.repo.model, self.repo.snapshot(), self.world.config)
        except EmptyPortfolio as exc:
            self.emit("goal", "notify", msg="empty_portfolio", reason=str(exc).replace(" ", "_"))
            self.trace.status = "aborted"
            return self.trace
        self.emit("goal", "notify", msg="portfolio", behaviours=sorted(pf.behaviours),
                  relation=pf.relation_text())
        self.install(pf)
        if not self.negotiate("init"):
            self.trace.status = "aborted"
            return self.trace
        self.try_stage_and_swap()
        while self.t < max_ticks:
            self.t += 1
            res = self.phase_target()
            self.phase_repo(res)
            self.phase_enact(res)
            self.phase_managers()
            self.phase_goal()
            self.trace.battery.append(self.world.battery)
            self.trace.ticks = self.t
            if self.trace.status == "aborted":
                break
            if self.world.mission_complete():
                self.emit("target", "event", ev="mission_complete")
                self.trace.status = "complete"
                break
        return self.trace


@dataclass(frozen=True)
class _Reason:
    kind: str
    observation: str = ""


def _num(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        x = float(x)
    if isinstance(x, float):
        return str(round(x, 6))
    return str(x)


def run(sc: Scenario, seed: int = 0, max_ticks: int = 500) -> Trace:
    return Run(sc, seed).run(max_ticks)
