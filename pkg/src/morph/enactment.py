"""Strategy enactment: behaviour and reconfiguration interpreters.

Both enactors are table-driven. A step looks up the current strategy state's
transition for one label and nothing else. Commands chosen on entering a
state sit in an outbox until the scheduler dispatches them, at which point
the enactor advances over its own command and records it as in flight.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .lts import RECONFIGURE
from .reconfig import CMD_FAIL, ReconfigStrategy
from .synthesis import StrategyAutomaton

RECONF_OK = "cfg.reconf_ok"
RECONF_FAIL = "cfg.reconf_fail"
BUFFER_LIMIT = 64

MODES = ("idle", "running", "awaiting_reconfig", "faulted")
EXCEPTION_KINDS = ("BehaviourAssumptionViolated", "ReconfigCommandFailed", "SwapFailure",
                   "NoViableStrategy")


@dataclass(frozen=True)
class ExceptionRecord:
    kind: str
    tick: int
    observation: str
    strategy: str
    state: str

    def __post_init__(self):
        if self.kind not in EXCEPTION_KINDS:
            raise ValueError(f"unknown exception kind {self.kind}")


@dataclass
class EnactorHandle:
    role: str  # "behaviour" | "reconfig"
    strategy: StrategyAutomaton | None = None
    state: object = None
    mode: str = "idle"
    inflight: str | None = None
    outbox: list[str] = field(default_factory=list)
    buffer: deque = field(default_factory=deque)
    held: bool = False  # behaviour only: a manager-staged reconfiguration is running
    steps: int = 0  # lookups performed, for the latency check
    plan: ReconfigStrategy | None = None  # reconfig only
    staged: bool = False  # reconfig only: started by the manager rather than by the strategy

    @property
    def strategy_id(self) -> str:
        return self.strategy.id if self.strategy else "-"


def load(h: EnactorHandle, strategy: StrategyAutomaton, state=None) -> EnactorHandle:
    h.strategy = strategy
    h.state = strategy.initial if state is None else state
    h.mode = "running"
    h.inflight = None
    h.outbox = strategy.commands_at(h.state)
    return h


def load_plan(h: EnactorHandle, plan: ReconfigStrategy, staged: bool) -> EnactorHandle:
    """Reconfig enactor: store a plan; it starts on ``cfg.reconfigure`` or immediately when staged."""
    h.plan = plan
    h.staged = staged
    h.strategy = plan.automaton
    h.state = plan.automaton.initial
    h.inflight = None
    h.outbox = []
    h.mode = "idle"
    return h


def start_reconfig(h: EnactorHandle) -> None:
    h.mode = "running"
    h.outbox = h.strategy.commands_at(h.state)


def swap_point(h: EnactorHandle) -> bool:
    return h.inflight is None and h.mode in ("idle", "running", "faulted")


def _exc(h: EnactorHandle, kind: str, tick: int, obs: str) -> ExceptionRecord:
    h.mode = "faulted"
    h.inflight = None  # the failed command is answered; swapping is the recovery
    return ExceptionRecord(kind, tick, obs, h.strategy_id, repr(h.state))


def dispatch(h: EnactorHandle) -> list[str]:
    """Release outbox commands; the enactor steps over each one it sends."""
    if h.mode != "running" or h.held or not h.outbox or h.inflight is not None:
        return []
    out = []
    while h.outbox:
        cmd = h.outbox.pop(0)
        h.steps += 1
        h.state = h.strategy.delta[h.state][cmd]
        h.inflight = cmd
        out.append(cmd)
        if cmd == RECONFIGURE:
            h.mode = "awaiting_reconfig"
    return out


def step_behaviour(h: EnactorHandle, observed: str, tick: int) -> list[str] | ExceptionRecord:
    """Advance on a domain event. Returns the commands queued for dispatch."""
    if h.mode == "faulted":
        return []
    if h.mode == "awaiting_reconfig" and observed not in (RECONF_OK, RECONF_FAIL):
        return _buffer(h, observed, tick)
    if h.held:
        return _buffer(h, observed, tick)
    if h.mode != "running" and h.mode != "awaiting_reconfig":
        return _exc(h, "BehaviourAssumptionViolated", tick, observed)
    h.steps += 1
    if observed not in h.strategy.expected.get(h.state, ()):
        return _exc(h, "BehaviourAssumptionViolated", tick, observed)
    h.state, cmds = h.strategy.step(h.state, observed)
    h.inflight = None
    h.mode = "running"
    h.outbox = list(cmds)
    return cmds


def _buffer(h: EnactorHandle, observed: str, tick: int) -> list[str] | ExceptionRecord:
    if len(h.buffer) >= BUFFER_LIMIT:
        return _exc(h, "BehaviourAssumptionViolated", tick, f"buffer_overflow:{observed}")
    h.buffer.append(observed)
    return []


def drain_buffer(h: EnactorHandle, tick: int) -> list[str] | ExceptionRecord:
    """Replay events held back while the enactor was blocked."""
    out: list[str] = []
    while h.buffer and not h.held and h.mode == "running":
        r = step_behaviour(h, h.buffer.popleft(), tick)
        if isinstance(r, ExceptionRecord):
            return r
        out = r
    return out


def step_reconfig(h: EnactorHandle, status: str, tick: int) -> tuple[list[str], str | None] | ExceptionRecord:
    """Advance on a status report. Returns (next commands, completion signal or None)."""
    if h.mode != "running":
        return _exc(h, "ReconfigCommandFailed", tick, status)
    h.steps += 1
    if status == CMD_FAIL or status not in h.strategy.expected.get(h.state, ()):
        return _exc(h, "ReconfigCommandFailed", tick, status)
    h.state, cmds = h.strategy.step(h.state, status)
    h.inflight = None
    if h.state == "done":
        h.mode = "idle"
        return [], RECONF_OK
    h.outbox = list(cmds)
    return cmds, None
