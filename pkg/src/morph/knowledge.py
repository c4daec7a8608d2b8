"""Common knowledge repository: append-only log, world snapshot, consumption
inference and the goal-model store."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable

from .goals import GoalModel, dump_goal_model, parse_goal_model, validate_goal_graph, ValidationReport

DEFAULT_WINDOW = 10
HYSTERESIS = 0.05


class KnowledgeError(Exception):
    pass


class TickRegression(KnowledgeError):
    pass


class InsufficientSamples(KnowledgeError):
    pass


class InvalidEdit(KnowledgeError):
    def __init__(self, msg: str, report: ValidationReport | None = None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class LogRecord:
    tick: int
    source: str
    kind: str  # event | status | command | metric
    payload: dict = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class WorldSnapshot:
    tick: int
    vars: dict = field(default_factory=dict, hash=False)
    aggregates: dict = field(default_factory=dict, hash=False)

    def get(self, key: str, default: Any = None) -> Any:
        if key in self.vars:
            return self.vars[key]
        return self.aggregates.get(key, default)


@dataclass(frozen=True)
class ChangeNotification:
    kind: str  # assumption_updated | goal_model_edited | capability_availability_changed
    subject: str
    old: Any = None
    new: Any = None


@dataclass
class GoalEdit:
    """Record-level delta on the goal-model text format."""
    add: list[str] = field(default_factory=list)
    remove: list[str] = field(default_factory=list)


def mean_decrement(samples: list[tuple[int, float, float, bool]]) -> float:
    """Mean per-tick drain net of command surcharges over consecutive airborne ticks.

    A sample is (tick, level, load, flying) where ``load`` is the command
    surcharge paid that tick and ``flying`` says the base rate applied.
    """
    rates = []
    for (t0, b0, _, _), (t1, b1, load, flying) in zip(samples, samples[1:]):
        if t1 == t0 + 1 and flying:
            rates.append(b0 - b1 - load)
    if not rates:
        raise InsufficientSamples("need two consecutive airborne battery samples")
    return sum(rates) / len(rates)


def _normalize_record(line: str) -> str:
    out = []
    for tok in line.split():
        try:
            tok = str(Fraction(tok))
        except (ValueError, ZeroDivisionError):
            pass
        out.append(tok)
    return " ".join(out)


class KnowledgeRepo:
    def __init__(self, model: GoalModel, bounds: Iterable[float] = (), window: int = DEFAULT_WINDOW,
                 initial_rate: float | None = None, hysteresis: float = HYSTERESIS):
        self.model = model
        self.window = window
        self.hysteresis = hysteresis
        self.log: list[LogRecord] = []
        self._vars: dict[str, Any] = {}
        self._agg: dict[str, Any] = {}
        self._tick = 0
        self._samples: list[tuple[int, float, float, bool]] = []
        self._pending: list[ChangeNotification] = []
        if initial_rate is not None:
            self._agg["consumption_rate"] = initial_rate
        # per-bound side of the band; start on the side of the initial rate
        r0 = initial_rate if initial_rate is not None else 0.0
        self._side = {b: ("above" if r0 > b else "below") for b in sorted(set(bounds))}

    # -- log ---------------------------------------------------------------
    def append_log(self, r: LogRecord) -> None:
        if r.tick < self._tick:
            raise TickRegression(f"record at tick {r.tick} after tick {self._tick}")
        self._tick = r.tick
        self.log.append(r)
        if r.kind == "metric":
            self._vars.update(r.payload)
            if "battery" in r.payload:
                self._samples.append((r.tick, float(r.payload["battery"]), float(r.payload.get("load", 0)),
                                      bool(r.payload.get("flying", False))))
                del self._samples[:-max(self.window, 2)]
        elif r.kind == "status":
            iid, new = r.payload["instance"], r.payload["status"]
            old = self._vars.get(f"status.{iid}")
            self._vars[f"status.{iid}"] = new
            if old is not None and old != new and "killed" in (old, new):
                self._pending.append(ChangeNotification("capability_availability_changed", iid, old, new))

    def snapshot(self) -> WorldSnapshot:
        return WorldSnapshot(self._tick, dict(self._vars), dict(self._agg))

    # -- inference -----------------------------------------------------------
    def infer_consumption_rate(self, window: int | None = None) -> tuple[float, ChangeNotification | None]:
        w = window or self.window
        rate = mean_decrement(self._samples[-w:])
        old = self._agg.get("consumption_rate")
        self._agg["consumption_rate"] = rate
        note = None
        for bound in sorted(self._side):
            side = self._side[bound]
            if side == "below" and rate >= bound * (1 + self.hysteresis):
                self._side[bound] = "above"
            elif side == "above" and rate <= bound * (1 - self.hysteresis):
                self._side[bound] = "below"
            else:
                continue
            if note is None:
                note = ChangeNotification("assumption_updated", "consumption_rate", old, rate)
        if note is not None:
            self._pending.append(note)
        return rate, note

    def set_bounds(self, bounds: Iterable[float]) -> None:
        rate = self._agg.get("consumption_rate", 0.0)
        for b in sorted(set(bounds)):
            self._side.setdefault(b, "above" if rate > b else "below")

    # -- goal model ----------------------------------------------------------
    def apply_goal_edit(self, edit: GoalEdit) -> ChangeNotification:
        lines = dump_goal_model(self.model).splitlines()
        norm = _normalize_record
        drop = {norm(l) for l in edit.remove}
        missing = drop - {norm(l) for l in lines}
        if missing:
            raise InvalidEdit(f"records not in model: {sorted(missing)}")
        kept = [l for l in lines if norm(l) not in drop] + list(edit.add)
        try:
            model = parse_goal_model(kept)
        except Exception as exc:
            raise InvalidEdit(str(exc)) from exc
        report = validate_goal_graph(model)
        if report:
            raise InvalidEdit("edited model is malformed", report)
        old = dump_goal_model(self.model)
        self.model = model
        note = ChangeNotification("goal_model_edited", "goal_model", old, dump_goal_model(model))
        self._pending.append(note)
        return note

    def drain_notifications(self) -> list[ChangeNotification]:
        out, self._pending = self._pending, []
        return out
