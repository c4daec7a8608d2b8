"""Deterministic labelled transition systems with a controllability partition."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable

State = Hashable
CFG_PREFIX = "cfg."
RECONFIGURE = "cfg.reconfigure"
RECONF_OK = "cfg.reconf_ok"
RECONF_FAIL = "cfg.reconf_fail"


class LtsError(Exception):
    pass


class PartitionClash(LtsError):
    pass


class EmptyGuard(LtsError):
    pass


class LtsParseError(LtsError):
    pass


class Lts:
    """Finite LTS, deterministic on labels. ``controllable`` holds the commands."""

    def __init__(self, states: Iterable[State], initial: State, alphabet: Iterable[str],
                 controllable: Iterable[str], transitions: Iterable[tuple[State, str, State]]):
        self.states = frozenset(states)
        self.initial = initial
        self.alphabet = frozenset(alphabet)
        self.controllable = frozenset(controllable)
        self.succ: dict[State, dict[str, State]] = {s: {} for s in self.states}
        if initial not in self.states:
            raise LtsError(f"initial state {initial!r} unknown")
        if not self.controllable <= self.alphabet:
            raise LtsError("controllable labels must belong to the alphabet")
        for src, label, dst in transitions:
            if src not in self.states or dst not in self.states:
                raise LtsError(f"transition ({src!r}, {label}, {dst!r}) references unknown state")
            if label not in self.alphabet:
                raise LtsError(f"label {label} not in alphabet")
            prev = self.succ[src].setdefault(label, dst)
            if prev != dst:
                raise LtsError(f"nondeterministic on {label} from {src!r}")

    @property
    def uncontrollable(self) -> frozenset[str]:
        return self.alphabet - self.controllable

    def transitions(self) -> Iterable[tuple[State, str, State]]:
        for s, out in self.succ.items():
            for label, t in out.items():
                yield s, label, t

    def enabled(self, s: State) -> dict[str, State]:
        return self.succ[s]

    def ctrl_moves(self, s: State) -> list[tuple[str, State]]:
        return sorted((l, t) for l, t in self.succ[s].items() if l in self.controllable)

    def unctrl_moves(self, s: State) -> list[tuple[str, State]]:
        return sorted((l, t) for l, t in self.succ[s].items() if l not in self.controllable)

    def reachable(self, start: State | None = None) -> set[State]:
        start = self.initial if start is None else start
        seen = {start}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for t in self.succ[s].values():
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
        return seen

    def __len__(self) -> int:
        return len(self.states)

    def __repr__(self) -> str:
        return f"Lts(states={len(self.states)}, alphabet={len(self.alphabet)})"


def compose(a: Lts, b: Lts) -> Lts:
    """Synchronous product, reachable part. Shared labels synchronise."""
    shared = a.alphabet & b.alphabet
    clash = sorted(l for l in shared if (l in a.controllable) != (l in b.controllable))
    if clash:
        raise PartitionClash(f"labels with conflicting controllability: {', '.join(clash)}")
    init = (a.initial, b.initial)
    seen = {init}
    queue = deque([init])
    trans = []
    while queue:
        sa, sb = queue.popleft()
        moves = []
        for label, ta in a.succ[sa].items():
            if label in shared:
                tb = b.succ[sb].get(label)
                if tb is not None:
                    moves.append((label, (ta, tb)))
            else:
                moves.append((label, (ta, sb)))
        for label, tb in b.succ[sb].items():
            if label not in shared:
                moves.append((label, (sa, tb)))
        for label, dst in moves:
            trans.append(((sa, sb), label, dst))
            if dst not in seen:
                seen.add(dst)
                queue.append(dst)
    return Lts(seen, init, a.alphabet | b.alphabet, a.controllable | b.controllable, trans)


@dataclass
class ModeSwitchSpec:
    pre_model: Lts
    post_model: Lts
    guard: Callable[[State], bool]
    switch_label: str = RECONFIGURE
    # where a switch from pre-state s lands; default post_model.initial
    post_entry: Callable[[State], State] | None = None


def mode_switch_compose(spec: ModeSwitchSpec) -> Lts:
    """Disjoint union of pre and post models bridged by the guarded switch command.

    States are tagged ``("pre", s)`` and ``("post", s)``. The switch leads to
    ``post_model.initial`` unless ``post_entry`` maps each source to its own
    post state.
    """
    pre, post, label = spec.pre_model, spec.post_model, spec.switch_label
    if label in pre.alphabet or label in post.alphabet:
        raise LtsError(f"switch label {label} already used by a component model")
    sources = sorted((s for s in pre.states if spec.guard(s)), key=repr)
    if not sources:
        raise EmptyGuard("no pre-switch state satisfies the guard")
    states = [("pre", s) for s in pre.states] + [("post", s) for s in post.states]
    trans = [(("pre", s), l, ("pre", t)) for s, l, t in pre.transitions()]
    trans += [(("post", s), l, ("post", t)) for s, l, t in post.transitions()]
    entry = spec.post_entry or (lambda s: post.initial)
    for s in sources:
        t = entry(s)
        if t not in post.states:
            raise LtsError(f"switch from {s!r} lands on unknown post state {t!r}")
        trans.append((("pre", s), label, ("post", t)))
    return Lts(states, ("pre", pre.initial), pre.alphabet | post.alphabet | {label},
               pre.controllable | post.controllable | {label}, trans)


def untag(state: State) -> Any:
    """Strip mode-switch tags: ``("post", ("pre", s))`` -> ``s``."""
    while isinstance(state, tuple) and len(state) == 2 and state[0] in ("pre", "post"):
        state = state[1]
    return state


def canonical(lts: Lts) -> frozenset[tuple[int, str, int]]:
    """Reachable transition structure renumbered by BFS order with sorted labels.

    Equal for two LTSs iff they are isomorphic on their reachable parts
    (determinism makes the BFS numbering unique).
    """
    index = {lts.initial: 0}
    queue = deque([lts.initial])
    edges = set()
    while queue:
        s = queue.popleft()
        for label in sorted(lts.succ[s]):
            t = lts.succ[s][label]
            if t not in index:
                index[t] = len(index)
                queue.append(t)
            edges.add((index[s], label, index[t]))
    return frozenset(edges) | frozenset([(len(index), "", -1)])


# -- text format -----------------------------------------------------------

def parse_lts(text: str) -> Lts:
    states, trans = [], []
    ctrl, unctrl = set(), set()
    init = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "state" and len(tok) >= 2:
            states.extend(tok[1:])
        elif tok[0] == "init" and len(tok) == 2:
            init = tok[1]
        elif tok[0] == "ctrl":
            ctrl.update(tok[1:])
        elif tok[0] == "unctrl":
            unctrl.update(tok[1:])
        elif tok[0] == "t" and len(tok) == 4:
            trans.append((tok[1], tok[2], tok[3]))
        else:
            raise LtsParseError(f"line {lineno}: cannot parse {raw.strip()!r}")
    if init is None:
        raise LtsParseError("missing init record")
    if ctrl & unctrl:
        raise LtsParseError(f"labels declared both ctrl and unctrl: {sorted(ctrl & unctrl)}")
    try:
        return Lts(states, init, ctrl | unctrl, ctrl, trans)
    except LtsError as exc:
        raise LtsParseError(str(exc)) from exc


def dump_lts(lts: Lts) -> str:
    out = [f"state {s}" for s in sorted(map(str, lts.states))]
    out.append(f"init {lts.initial}")
    if lts.controllable:
        out.append("ctrl " + " ".join(sorted(lts.controllable)))
    if lts.uncontrollable:
        out.append("unctrl " + " ".join(sorted(lts.uncontrollable)))
    out += [f"t {s} {l} {t}" for s, l, t in sorted((str(s), l, str(t)) for s, l, t in lts.transitions())]
    return "\n".join(out) + "\n"
