"""Goal model: AND/OR refinement graph, leaf assignments and soft goals."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

DEFAULT_RESOLUTION_CAP = 64


class GoalModelError(Exception):
    pass


class GoalParseError(GoalModelError):
    pass


class EmptyResolutionSet(GoalModelError):
    pass


class ResolutionCapExceeded(GoalModelError):
    pass


class MissingScore(GoalModelError):
    pass


@dataclass(frozen=True)
class Assignment:
    target: str  # "environment" | "component_capability"
    capability_tag: str | None = None
    assertion: str = ""

    @property
    def is_requirement(self) -> bool:
        return self.target == "component_capability"


@dataclass(frozen=True)
class Refinement:
    kind: str  # "AND" | "OR"
    children: tuple[str, ...]


@dataclass
class GoalNode:
    id: str
    kind: str = "goal"  # "goal" | "soft_goal"
    refinements: list[Refinement] = field(default_factory=list)
    assignment: Assignment | None = None

    @property
    def assertion(self) -> str | None:
        return self.assignment.assertion if self.assignment else None

    @property
    def is_leaf(self) -> bool:
        return not self.refinements


@dataclass
class SoftGoalWeights:
    weights: dict[str, Fraction] = field(default_factory=dict)
    scores: dict[str, dict[str, Fraction]] = field(default_factory=dict)

    def normalized(self) -> dict[str, Fraction]:
        total = sum(self.weights.values(), Fraction(0))
        if total == 0:
            return {k: Fraction(0) for k in self.weights}
        return {k: w / total for k, w in self.weights.items()}


@dataclass
class GoalModel:
    nodes: dict[str, GoalNode] = field(default_factory=dict)
    soft: SoftGoalWeights = field(default_factory=SoftGoalWeights)

    def goals(self) -> list[GoalNode]:
        return [n for n in self.nodes.values() if n.kind == "goal"]

    def roots(self) -> list[str]:
        children = {c for n in self.goals() for r in n.refinements for c in r.children}
        return sorted(n.id for n in self.goals() if n.id not in children)

    def copy(self) -> GoalModel:
        return parse_goal_model(dump_goal_model(self))


@dataclass(frozen=True)
class Resolution:
    choices: tuple[tuple[str, str], ...]  # (or-node, chosen child), sorted
    capabilities: frozenset[str]
    requirements: frozenset[str]  # assertion labels of requirement leaves
    assumptions: frozenset[str]

    @property
    def chosen(self) -> tuple[str, ...]:
        return tuple(sorted(child for _, child in self.choices))

    @property
    def key(self) -> str:
        return "+".join(self.chosen) or "unique"

    @property
    def labels(self) -> frozenset[str]:
        return self.requirements | self.assumptions


@dataclass(frozen=True)
class Issue:
    kind: str  # cycle | unassigned_leaf | dangling_child | assigned_inner
    subject: str
    detail: str = ""


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.issues)

    def of_kind(self, kind: str) -> list[Issue]:
        return [i for i in self.issues if i.kind == kind]


# -- parsing ---------------------------------------------------------------

def parse_goal_model(text: str | Iterable[str]) -> GoalModel:
    """Parse the line-oriented goal-model format. Record order does not matter."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    model = GoalModel()
    pending_refs: list[tuple[str, Refinement]] = []
    pending_assign: list[tuple[str, Assignment]] = []

    def node(nid: str, kind: str = "goal") -> GoalNode:
        if nid not in model.nodes:
            model.nodes[nid] = GoalNode(nid, kind)
        elif kind == "soft_goal":
            model.nodes[nid].kind = kind
        return model.nodes[nid]

    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            head = tok[0]
            if head == "goal" and len(tok) == 2:
                node(tok[1])
            elif head == "softgoal" and len(tok) == 4 and tok[2] == "weight":
                node(tok[1], "soft_goal")
                model.soft.weights[tok[1]] = Fraction(tok[3])
            elif head == "refine" and len(tok) >= 4 and tok[2] in ("AND", "OR"):
                pending_refs.append((tok[1], Refinement(tok[2], tuple(tok[3:]))))
            elif head == "assign" and len(tok) == 4 and tok[3].startswith("assert:"):
                who = tok[2]
                if who == "env":
                    a = Assignment("environment", None, tok[3][7:])
                elif who.startswith("cap:") and len(who) > 4:
                    a = Assignment("component_capability", who[4:], tok[3][7:])
                else:
                    raise ValueError(who)
                pending_assign.append((tok[1], a))
            elif head == "score" and len(tok) == 4:
                model.soft.scores.setdefault(tok[1], {})[tok[2]] = Fraction(tok[3])
            else:
                raise ValueError(head)
        except (ValueError, ZeroDivisionError) as exc:
            raise GoalParseError(f"line {lineno}: cannot parse {raw.strip()!r}") from exc

    for parent, ref in pending_refs:
        node(parent).refinements.append(ref)
    for leaf, a in pending_assign:
        node(leaf).assignment = a
    return model


def dump_goal_model(model: GoalModel) -> str:
    out = []
    for nid in sorted(model.nodes):
        n = model.nodes[nid]
        if n.kind == "soft_goal":
            out.append(f"softgoal {nid} weight {model.soft.weights.get(nid, 0)}")
        else:
            out.append(f"goal {nid}")
    for nid in sorted(model.nodes):
        for r in model.nodes[nid].refinements:
            out.append(f"refine {nid} {r.kind} {' '.join(r.children)}")
    for nid in sorted(model.nodes):
        a = model.nodes[nid].assignment
        if a:
            who = "env" if a.target == "environment" else f"cap:{a.capability_tag}"
            out.append(f"assign {nid} {who} assert:{a.assertion}")
    for child in sorted(model.soft.scores):
        for sg, s in sorted(model.soft.scores[child].items()):
            out.append(f"score {child} {sg} {s}")
    return "\n".join(out) + "\n"


# -- operations ------------------------------------------------------------

def validate_goal_graph(model: GoalModel) -> ValidationReport:
    report = ValidationReport()
    for n in sorted(model.goals(), key=lambda n: n.id):
        for r in n.refinements:
            for c in r.children:
                if c not in model.nodes or model.nodes[c].kind != "goal":
                    report.issues.append(Issue("dangling_child", n.id, c))
        if n.is_leaf and n.assignment is None:
            report.issues.append(Issue("unassigned_leaf", n.id))

    # iterative DFS, one entry per back edge
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {n.id: WHITE for n in model.goals()}
    for start in sorted(colour):
        if colour[start] != WHITE:
            continue
        stack = [(start, iter(_children(model, start)))]
        colour[start] = GREY
        while stack:
            nid, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[nid] = BLACK
                stack.pop()
            elif colour.get(nxt) == GREY:
                path = [s for s, _ in stack]
                cycle = path[path.index(nxt):] + [nxt]
                report.issues.append(Issue("cycle", nxt, "->".join(cycle)))
            elif colour.get(nxt) == WHITE:
                colour[nxt] = GREY
                stack.append((nxt, iter(_children(model, nxt))))
    return report


def _children(model: GoalModel, nid: str) -> list[str]:
    return [c for r in model.nodes[nid].refinements for c in r.children if c in model.nodes]


_Partial = tuple[dict[str, str], frozenset, frozenset, frozenset]


def _merge(a: _Partial, b: _Partial) -> _Partial | None:
    choices = dict(a[0])
    for k, v in b[0].items():
        if choices.setdefault(k, v) != v:
            return None
    return choices, a[1] | b[1], a[2] | b[2], a[3] | b[3]


def enumerate_resolutions(model: GoalModel, cap: int = DEFAULT_RESOLUTION_CAP) -> list[Resolution]:
    memo: dict[str, list[_Partial]] = {}

    def expand(nid: str) -> list[_Partial]:
        if nid in memo:
            return memo[nid]
        n = model.nodes[nid]
        if n.is_leaf:
            a = n.assignment
            if a is None:
                raise GoalModelError(f"leaf {nid} has no assignment")
            if a.is_requirement:
                res = [({}, frozenset([a.capability_tag]), frozenset([a.assertion]), frozenset())]
            else:
                res = [({}, frozenset(), frozenset(), frozenset([a.assertion]))]
        else:
            res = [({}, frozenset(), frozenset(), frozenset())]
            for r in n.refinements:
                if r.kind == "AND":
                    alts = [({}, frozenset(), frozenset(), frozenset())]
                    for c in r.children:
                        alts = [m for x in alts for y in expand(c) if (m := _merge(x, y)) is not None]
                        _check_cap(alts, cap)
                else:
                    alts = []
                    for c in r.children:
                        for ch, caps, reqs, ass in expand(c):
                            if ch.get(nid, c) != c:
                                continue
                            alts.append(({**ch, nid: c}, caps, reqs, ass))
                    _check_cap(alts, cap)
                res = [m for x in res for y in alts if (m := _merge(x, y)) is not None]
                _check_cap(res, cap)
        memo[nid] = res
        return res

    results: dict[Resolution, None] = {}
    combined: list[_Partial] = [({}, frozenset(), frozenset(), frozenset())]
    for root in model.roots():
        combined = [m for x in combined for y in expand(root) if (m := _merge(x, y)) is not None]
        _check_cap(combined, cap)
    for choices, caps, reqs, ass in combined:
        results[Resolution(tuple(sorted(choices.items())), caps, reqs, ass)] = None
    return sorted(results, key=lambda r: r.chosen)


def _check_cap(items: list, cap: int) -> None:
    if len(items) > cap:
        raise ResolutionCapExceeded(f"more than {cap} OR-resolutions")


def viable_resolutions(model: GoalModel, available: Iterable[frozenset[str]],
                       cap: int = DEFAULT_RESOLUTION_CAP) -> list[Resolution]:
    profiles = [frozenset(p) for p in available]
    viable = [r for r in enumerate_resolutions(model, cap)
              if any(r.capabilities <= p for p in profiles)]
    if not viable:
        raise EmptyResolutionSet("no OR-resolution is covered by the available profiles")
    return viable


def resolution_score(res: Resolution, weights: SoftGoalWeights) -> Fraction:
    norm = weights.normalized()
    total = Fraction(0)
    for child in res.chosen:
        row = weights.scores.get(child)
        if row is None:
            raise MissingScore(child)
        total += sum((norm[sg] * row.get(sg, Fraction(0)) for sg in norm), Fraction(0))
    return total


def rank_resolutions(resolutions: Iterable[Resolution], weights: SoftGoalWeights) -> list[Resolution]:
    """Highest weighted score first; equal scores fall back to chosen-child ids."""
    scored = [(resolution_score(r, weights), r) for r in resolutions]
    scored.sort(key=lambda p: p[1].chosen)
    scored.sort(key=lambda p: p[0], reverse=True)
    return [r for _, r in scored]


def leaf_sets(model: GoalModel, choices: dict[str, str]) -> tuple[frozenset, frozenset, frozenset]:
    """AND-closure of a fixed set of OR choices: (capabilities, requirements, assumptions)."""
    caps, reqs, ass = set(), set(), set()
    seen: set[str] = set()
    stack = list(model.roots())
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        n = model.nodes[nid]
        if n.is_leaf:
            a = n.assignment
            if a.is_requirement:
                caps.add(a.capability_tag)
                reqs.add(a.assertion)
            else:
                ass.add(a.assertion)
        for r in n.refinements:
            stack.extend(r.children if r.kind == "AND" else [choices[nid]])
    return frozenset(caps), frozenset(reqs), frozenset(ass)
