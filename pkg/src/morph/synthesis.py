"""Behaviour problem solving: safety, reachability and Büchi games over an Lts.

Game semantics: in every state the controller either issues one enabled
controllable label or waits; the environment then picks any enabled
uncontrollable label or lets the issued command happen. A controller that
waits in a state with no uncontrollable label blocks, which is losing
unless the arena itself is deadlocked there (safety only).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

from .lts import Lts, State

Predicate = Callable[[State], bool]


@dataclass(frozen=True)
class BehaviourGoal:
    label: str
    kind: str  # "safety" (predicate = bad) | "reach" (target) | "buchi" (accepting)
    predicate: Predicate
    invariant: Predicate | None = None  # optional side condition for reach/buchi

    def bad(self, s: State) -> bool:
        if self.kind == "safety":
            return self.predicate(s)
        return self.invariant is not None and not self.invariant(s)


@dataclass
class GameProblem:
    arena: Lts
    goal: BehaviourGoal
    fairness: Predicate | None = None


@dataclass(frozen=True)
class Unrealizable:
    reason: str = ""

    def __bool__(self) -> bool:
        return False


@dataclass
class StrategyAutomaton:
    """Finite reactive strategy over arena states (memoryless, optionally ranked).

    ``choice`` is the command emitted on entering a state, ``allowed`` the
    permissive envelope of commands that keep the play winning, and
    ``expected`` the uncontrollable labels the strategy is prepared for.
    """

    id: str
    kind: str
    initial: State
    alphabet: frozenset[str]
    controllable: frozenset[str]
    delta: dict[State, dict[str, State]]
    choice: dict[State, str | None]
    allowed: dict[State, frozenset[str]]
    expected: dict[State, frozenset[str]]
    memory_rank: dict[State, int] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def states(self) -> frozenset[State]:
        return frozenset(self.delta)

    def step(self, q: State, label: str) -> tuple[State, list[str]]:
        """Advance on an observed or dispatched label; return the next state and its commands."""
        nxt = self.delta[q][label]
        c = self.choice.get(nxt)
        return nxt, ([c] if c else [])

    def commands_at(self, q: State) -> list[str]:
        c = self.choice.get(q)
        return [c] if c else []

    def entry_states(self, arena_state: State) -> list[State]:
        # entry predicate of q: projected world state equals q
        return [arena_state] if arena_state in self.delta else []

    def closed_loop_moves(self, q: State) -> list[tuple[str, State]]:
        out = [(l, t) for l, t in self.delta[q].items() if l in self.expected.get(q, ())]
        c = self.choice.get(q)
        if c is not None:
            out.append((c, self.delta[q][c]))
        return sorted(out, key=lambda p: p[0])

    def out_degree(self, q: State) -> int:
        return len(self.delta.get(q, ()))


# -- fixpoint helpers ------------------------------------------------------

def _predecessors(arena: Lts) -> dict[State, list[tuple[State, str]]]:
    pred: dict[State, list[tuple[State, str]]] = {s: [] for s in arena.states}
    for s, l, t in arena.transitions():
        pred[t].append((s, l))
    return pred


def _cpre(arena: Lts, target: set[State], domain: Iterable[State]) -> set[State]:
    ctrl = arena.controllable
    out = set()
    for s in domain:
        moves = arena.succ[s]
        unc = [t for l, t in moves.items() if l not in ctrl]
        if any(t not in target for t in unc):
            continue
        if unc or any(t in target for l, t in moves.items() if l in ctrl):
            out.add(s)
    return out


def _attractor(arena: Lts, base: set[State], domain: set[State],
               pred: dict[State, list[tuple[State, str]]]) -> dict[State, int]:
    """Controllable attractor of ``base`` inside ``domain`` with BFS ranks."""
    ctrl = arena.controllable
    rank = {s: 0 for s in base}
    missing = {s: sum(1 for l in arena.succ[s] if l not in ctrl) for s in domain}
    has_unc = {s: missing[s] > 0 for s in domain}
    ctrl_hit: set[State] = set()
    queue = deque(sorted(base, key=repr))
    while queue:
        t = queue.popleft()
        for s, l in pred[t]:
            if s in rank or s not in domain:
                continue
            if l in ctrl:
                ctrl_hit.add(s)
            else:
                missing[s] -= 1
            if missing[s] == 0 and (has_unc[s] or s in ctrl_hit):
                rank[s] = rank[t] + 1
                queue.append(s)
    return rank


def _pick(arena: Lts, s: State, target: dict[State, int] | set[State],
          bound: int | None = None) -> str | None:
    best = None
    for l, t in arena.ctrl_moves(s):
        if t not in target:
            continue
        r = target[t] if isinstance(target, dict) else 0
        if bound is not None and r >= bound:
            continue
        if best is None or (r, l) < best[:2]:
            best = (r, l)
    return best[1] if best else None


def _build(arena: Lts, goal: BehaviourGoal, win: set[State], choice: dict, sid: str,
           ranks: dict[State, int] | None = None) -> StrategyAutomaton:
    ctrl = arena.controllable
    delta, allowed, expected = {}, {}, {}
    for s in sorted(win, key=repr):
        moves = arena.succ[s]
        allowed[s] = frozenset(l for l, t in moves.items() if l in ctrl and t in win)
        expected[s] = frozenset(l for l, t in moves.items() if l not in ctrl and t in win)
        delta[s] = {l: t for l, t in moves.items() if l in allowed[s] or l in expected[s]}
    return StrategyAutomaton(sid, goal.kind, arena.initial, arena.alphabet, ctrl, delta,
                             {s: choice.get(s) for s in delta}, allowed, expected, ranks)


# -- solvers ---------------------------------------------------------------

def solve_safety(p: GameProblem, sid: str = "safety") -> StrategyAutomaton | Unrealizable:
    arena, goal = p.arena, p.goal
    if goal.kind != "safety":
        raise ValueError("solve_safety needs a safety goal")
    ctrl = arena.controllable
    pred = _predecessors(arena)
    win = {s for s in arena.states if not goal.predicate(s)}
    ctrl_in = {s: sum(1 for l, t in arena.succ[s].items() if l in ctrl and t in win) for s in win}
    has_unc = {s: any(l not in ctrl for l in arena.succ[s]) for s in win}
    has_ctrl = {s: any(l in ctrl for l in arena.succ[s]) for s in win}

    def failing(s):
        if any(t not in win for l, t in arena.succ[s].items() if l not in ctrl):
            return True
        return has_ctrl[s] and not has_unc[s] and ctrl_in[s] == 0

    queue = deque(s for s in win if failing(s))
    removed = set(queue)
    win -= removed
    while queue:
        t = queue.popleft()
        for s, l in pred[t]:
            if s not in win:
                continue
            if l in ctrl:
                ctrl_in[s] -= 1
            if l not in ctrl or (ctrl_in[s] == 0 and not has_unc[s]):
                win.discard(s)
                queue.append(s)
    if arena.initial not in win:
        return Unrealizable("initial state outside the controllable invariant")
    choice = {s: _pick(arena, s, win) for s in win}
    return _build(arena, goal, win, choice, sid)


def solve_reach(p: GameProblem, sid: str = "reach") -> StrategyAutomaton | Unrealizable:
    arena, goal = p.arena, p.goal
    if goal.kind != "reach":
        raise ValueError("solve_reach needs a reach goal")
    domain = {s for s in arena.states if not goal.bad(s)}
    base = {s for s in domain if goal.predicate(s)}
    rank = _attractor(arena, base, domain, _predecessors(arena))
    if arena.initial not in rank:
        return Unrealizable("environment can avoid the target forever")
    choice = {s: (None if r == 0 else _pick(arena, s, rank, bound=r)) for s, r in rank.items()}
    return _build(arena, goal, set(rank), choice, sid, rank)


def buchi_ranks(arena: Lts, goal: BehaviourGoal,
                fairness: Predicate | None = None) -> tuple[set[State], dict[State, int], dict]:
    """Nested fixpoint for GF accepting (or FG not-fair when a fairness predicate is given).

    Returns the winning region, per-state rank and the level sets used for
    strategy extraction.
    """
    domain = {s for s in arena.states if not goal.bad(s)}
    acc = {s for s in domain if goal.predicate(s)}
    if fairness is None:
        p1, p0 = domain - acc, set()
    else:
        p1 = {s for s in domain - acc if fairness(s)}
        p0 = domain - acc - p1
    pred = _predecessors(arena)

    z = set(domain)
    while True:
        b = acc & _cpre(arena, z, acc)
        levels = [set()]
        y: set[State] = set()
        while True:
            c = b | (p1 & _cpre(arena, y, p1))
            # gfp X. c | (p0 & CPre(X))
            x = c | p0
            while True:
                nx = c | (p0 & _cpre(arena, x, p0 & x))
                if nx == x:
                    break
                x = nx
            if x == y:
                break
            y = x
            levels.append(set(y))
        if y == z:
            break
        z = y
    rank = {}
    for i, lvl in enumerate(levels):
        for s in lvl:
            rank.setdefault(s, i)
    return z, rank, {"levels": levels, "acc": acc, "p1": p1, "p0": p0}


def solve_buchi(p: GameProblem, sid: str = "buchi") -> StrategyAutomaton | Unrealizable:
    arena, goal = p.arena, p.goal
    if goal.kind != "buchi":
        raise ValueError("solve_buchi needs a buchi goal")
    win, rank, info = buchi_ranks(arena, goal, p.fairness)
    if arena.initial not in win:
        return Unrealizable("accepting states cannot be forced infinitely often")
    levels = info["levels"]
    choice = {}
    for s in win:
        r = rank[s]
        if s in info["acc"]:
            target = {t: rank[t] for t in win}
        elif s in info["p1"]:
            target = {t: rank[t] for t in levels[r - 1]}
        else:
            target = {t: rank[t] for t in levels[r]}
        choice[s] = _pick(arena, s, target)
    return _build(arena, goal, win, choice, sid, rank)


def solve(p: GameProblem, sid: str | None = None) -> StrategyAutomaton | Unrealizable:
    solver = {"safety": solve_safety, "reach": solve_reach, "buchi": solve_buchi}[p.goal.kind]
    return solver(p, sid or p.goal.label)


# -- closed-loop verification ---------------------------------------------

@dataclass
class VerificationReport:
    ok: bool
    reason: str = ""
    trace: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def _closed_loop(arena: Lts, s: StrategyAutomaton, q: State) -> tuple[list[tuple[str, State]], bool]:
    moves = [(l, t) for l, t in arena.unctrl_moves(q)]
    c = s.choice.get(q)
    if c is not None:
        if c not in arena.succ[q]:
            return [], False
        moves.append((c, arena.succ[q][c]))
    return moves, True


def verify_closed_loop(arena: Lts, s: StrategyAutomaton, goal: BehaviourGoal,
                       fairness: Predicate | None = None) -> VerificationReport:
    """Exhaustively explore arena x strategy, independent of how ``s`` was built."""
    used = set(s.alphabet) | {c for c in s.choice.values() if c}
    if not used <= arena.alphabet or not s.alphabet & arena.alphabet:
        return VerificationReport(False, "precondition: strategy alphabet not within arena alphabet")
    if arena.initial not in s.delta:
        return VerificationReport(False, "strategy does not cover the initial state")

    parent: dict[State, tuple[State, str] | None] = {arena.initial: None}
    order = []
    queue = deque([arena.initial])
    done = goal.predicate if goal.kind == "reach" else (lambda q: False)

    def path_to(q):
        out = []
        while parent[q] is not None:
            q, l = parent[q]
            out.append(l)
        return out[::-1]

    while queue:
        q = queue.popleft()
        order.append(q)
        if goal.bad(q):
            return VerificationReport(False, f"bad state {q!r} reachable", path_to(q))
        if done(q):
            continue
        if q not in s.delta:
            return VerificationReport(False, f"strategy undefined at reachable state {q!r}", path_to(q))
        moves, ok = _closed_loop(arena, s, q)
        if not ok:
            return VerificationReport(False, f"strategy emits disabled command at {q!r}", path_to(q))
        if not moves and arena.succ[q]:
            return VerificationReport(False, f"closed loop blocks at {q!r}", path_to(q))
        if not moves and goal.kind != "safety":
            return VerificationReport(False, f"deadlock at {q!r}", path_to(q))
        for l, t in moves:
            if t not in parent:
                parent[t] = (q, l)
                queue.append(t)

    if goal.kind == "safety":
        return VerificationReport(True)

    # lasso search on the closed-loop graph minus target/accepting states
    if goal.kind == "reach":
        keep = [q for q in order if not goal.predicate(q)]
        flagged = set(keep)
    else:
        keep = [q for q in order if not goal.predicate(q)]
        flagged = {q for q in keep if fairness is None or fairness(q)}
    keep_set = set(keep)
    graph = {q: [t for _, t in _closed_loop(arena, s, q)[0] if t in keep_set] for q in keep}
    for comp in _sccs(keep, graph):
        cyclic = len(comp) > 1 or comp[0] in graph[comp[0]]
        if cyclic and flagged & set(comp):
            q = min(comp, key=repr)
            return VerificationReport(False, f"reachable cycle through {q!r} avoids the goal", path_to(q))
    return VerificationReport(True)


def _sccs(nodes: list[State], graph: dict[State, list[State]]) -> list[list[State]]:
    """Tarjan, iterative."""
    index, low, on, stack, out = {}, {}, set(), [], []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(graph[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on.add(root)
        while work:
            v, it = work[-1]
            w = next(it, None)
            if w is not None:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on.add(w)
                    work.append((w, iter(graph[w])))
                elif w in on:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


# -- simulation ------------------------------------------------------------

def check_simulation(high: StrategyAutomaton, low: StrategyAutomaton,
                     project: Callable[[State], Hashable] | None = None) -> bool:
    """True iff ``low`` simulates every move ``high`` can make.

    High moves are its emitted commands and expected events; low may answer
    with any command of its permissive envelope. With ``project``, both
    automata are first quotiented by the projection.
    """
    proj = project or (lambda q: q)

    def moves(a: StrategyAutomaton, permissive: bool) -> dict[Hashable, set[tuple[str, Hashable]]]:
        out: dict[Hashable, set] = {}
        for q, d in a.delta.items():
            labels = set(a.expected.get(q, ()))
            if permissive:
                labels |= a.allowed.get(q, frozenset())
            elif a.choice.get(q):
                labels.add(a.choice[q])
            out.setdefault(proj(q), set()).update((l, proj(d[l])) for l in labels)
        return out

    mh, ml = moves(high, False), moves(low, True)
    start = (proj(high.initial), proj(low.initial))
    if start[1] not in ml:
        return False
    pairs = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for a, x2 in mh.get(x, ()):
            for b, y2 in ml.get(y, ()):
                if a == b and (x2, y2) not in pairs:
                    pairs.add((x2, y2))
                    queue.append((x2, y2))
    rel = set(pairs)
    changed = True
    while changed:
        changed = False
        for x, y in list(rel):
            for a, x2 in mh.get(x, ()):
                if not any(b == a and (x2, y2) in rel for b, y2 in ml.get(y, ())):
                    rel.discard((x, y))
                    changed = True
                    break
    return start in rel


# -- text format -----------------------------------------------------------

def _name(s: State) -> str:
    return str(s).replace(" ", "")


def dump_strategy(s: StrategyAutomaton) -> str:
    out = [f"# strategy {s.id} kind={s.kind}"]
    out += [f"state {n}" for n in sorted(_name(q) for q in s.delta)]
    out.append(f"init {_name(s.initial)}")
    if s.controllable:
        out.append("ctrl " + " ".join(sorted(s.controllable)))
    if s.alphabet - s.controllable:
        out.append("unctrl " + " ".join(sorted(s.alphabet - s.controllable)))
    for q in sorted(s.delta, key=_name):
        for l in sorted(s.delta[q]):
            out.append(f"t {_name(q)} {l} {_name(s.delta[q][l])}")
    out.append(f"emit {_name(s.initial)} - {' '.join(s.commands_at(s.initial))}".rstrip())
    for q in sorted(s.delta, key=_name):
        for l in sorted(s.delta[q]):
            cmds = s.commands_at(s.delta[q][l])
            out.append(f"emit {_name(q)} {l} {' '.join(cmds)}".rstrip())
    if s.memory_rank is not None:
        for q in sorted(s.delta, key=_name):
            out.append(f"rank {_name(q)} {s.memory_rank[q]}")
    return "\n".join(out) + "\n"
