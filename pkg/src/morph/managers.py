"""Strategy management: portfolio storage, master-slave negotiation between the
behaviour and reconfiguration strategy managers, and hot-swap."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .enactment import EnactorHandle, ExceptionRecord, load, swap_point
from .goal_manager import CURRENT, Portfolio
from .reconfig import Configuration, capability_profile, replay

TRIGGERS = ("init", "exception", "knowledge", "portfolio")


class SwapFailure(Exception):
    def __init__(self, msg: str, matches: int):
        super().__init__(msg)
        self.matches = matches


@dataclass(frozen=True)
class ProfileOffer:
    profiles: tuple[tuple[str, frozenset[str]], ...]  # (reconfig id or "current", profile)

    def text(self) -> str:
        return ";".join(f"{tag}:{','.join(sorted(p)) or '-'}" for tag, p in self.profiles)


@dataclass(frozen=True)
class Selection:
    behaviour: str
    required: frozenset[str]
    reconfig: str


@dataclass(frozen=True)
class NoViable:
    reason: str

    def __bool__(self) -> bool:
        return False


@dataclass
class NegotiationTranscript:
    trigger: str
    messages: list[tuple[str, dict]] = field(default_factory=list)

    @property
    def committed(self) -> bool:
        return bool(self.messages) and self.messages[-1][0] == "Commit"

    @property
    def selection(self) -> Selection | None:
        for m, d in self.messages:
            if m == "Selection":
                return Selection(d["b"], frozenset(d["required"]), d["r"])
        return None

    def names(self) -> list[str]:
        return [m for m, _ in self.messages]


@dataclass
class ManagerState:
    portfolio: Portfolio | None = None
    behaviour: str | None = None  # deployed behaviour strategy id
    reconfig: str | None = None  # deployed reconfig id or "current"
    pending: NegotiationTranscript | None = None
    transcripts: list[NegotiationTranscript] = field(default_factory=list)


def offer_achievable_profiles(state: ManagerState, current: Configuration, cs=(), types=None,
                              unavailable: frozenset[str] = frozenset()) -> ProfileOffer:
    """Current profile plus each stored plan whose happy path replays from ``current``."""
    out = [(CURRENT, capability_profile(current) - unavailable)]
    for rid, plan in sorted(state.portfolio.reconfigs.items()):
        trail = replay(plan, current, cs, types)
        if trail is not None:
            out.append((rid, capability_profile(trail[-1]) - unavailable))
    return ProfileOffer(tuple(out))


def select_behaviour_strategy(state: ManagerState, snapshot, offer: ProfileOffer,
                              trigger: str) -> Selection | NoViable:
    pf = state.portfolio
    rate = snapshot.get("consumption_rate")
    rank = {key: i for i, key in enumerate(pf.ranking)}
    offered = dict(offer.profiles)
    cands = []
    for bid, b in pf.behaviours.items():
        if not b.admits(rate):
            continue
        via = [r for r in pf.related(bid) if r in offered and b.required <= offered[r]]
        if via:
            # best resolution first, then the strongest assumption that still holds
            cands.append(((rank.get(b.resolution.key, len(rank)), b.bound, bid), b, via[0]))
    if not cands:
        if rate is not None and all(not b.admits(rate) for b in pf.behaviours.values()):
            return NoViable(f"consumption rate {rate} exceeds every stored bound")
        return NoViable("no behaviour strategy fits an offered profile")
    _, b, via = min(cands, key=lambda c: c[0])
    return Selection(b.id, b.required, via)


def negotiate(state: ManagerState, snapshot, current: Configuration, trigger: str, cs=(), types=None,
              unavailable: frozenset[str] = frozenset()) -> NegotiationTranscript:
    """Behaviour manager is master, reconfiguration manager the slave."""
    tr = NegotiationTranscript(trigger)
    tr.messages.append(("OfferRequest", {}))
    offer = offer_achievable_profiles(state, current, cs, types, unavailable)
    tr.messages.append(("ProfileOffer", {"offer": offer.text()}))
    sel = select_behaviour_strategy(state, snapshot, offer, trigger)
    if isinstance(sel, NoViable):
        tr.messages.append(("Abort", {"reason": "NoViable", "why": sel.reason}))
        state.transcripts.append(tr)
        return tr
    tr.messages.append(("Selection", {"b": sel.behaviour, "required": sorted(sel.required), "r": sel.reconfig}))
    tr.messages.append(("Stage", {"r": sel.reconfig}))
    if not state.portfolio.consistent(sel.behaviour, sel.reconfig):
        tr.messages.append(("Abort", {"reason": "Inconsistent"}))
    else:
        tr.messages.append(("Commit", {"b": sel.behaviour, "r": sel.reconfig}))
        state.behaviour, state.reconfig = sel.behaviour, sel.reconfig
    state.transcripts.append(tr)
    return tr


@dataclass(frozen=True)
class SwapResult:
    old: str
    new: str
    entry: str


def hot_swap(live: EnactorHandle, new, snapshot, matcher: Callable) -> SwapResult:
    """Enter ``new`` at the unique state matching the snapshot; pending outbox is dropped."""
    if not swap_point(live):
        raise SwapFailure("enactor is not at a swap point", 0)
    matches = matcher(new, snapshot)
    if len(matches) != 1:
        raise SwapFailure(f"{len(matches)} entry states match the snapshot", len(matches))
    old = live.strategy_id
    live.buffer.clear()
    load(live, new, matches[0])
    return SwapResult(old, new.id, repr(matches[0]))


def escalation_record(tick: int, tr: NegotiationTranscript, strategy: str, obs: str) -> ExceptionRecord:
    return ExceptionRecord("NoViableStrategy", tick, obs, strategy, tr.trigger)
