"""Configuration problem solving: component architectures, structural
constraints and quiescence-safe reconfiguration plans."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from .synthesis import StrategyAutomaton

STATUSES = ("active", "inactive", "connected", "killed")
CMD_FAIL = "cfg.cmd_fail"
DEFAULT_MAX_STATES = 200_000


class ReconfigError(Exception):
    pass


class ConfigParseError(ReconfigError):
    pass


class CommandRejected(ReconfigError):
    pass


@dataclass(frozen=True)
class ComponentType:
    name: str
    provides: frozenset[str] = frozenset()
    requires: frozenset[str] = frozenset()
    params: tuple[tuple[str, str], ...] = ()
    spares: int = 1


@dataclass(frozen=True)
class Instance:
    id: str
    type: ComponentType
    status: str = "inactive"  # active | inactive | killed ("connected" is derived)
    params: tuple[tuple[str, str], ...] = ()

    @property
    def passive(self) -> bool:
        return self.status != "active"


@dataclass(frozen=True)
class Configuration:
    instances: tuple[Instance, ...] = ()
    bindings: frozenset[tuple[str, str, str]] = frozenset()  # (from, required tag, to)
    pool: tuple[tuple[str, int], ...] = ()  # type name -> spares left

    def get(self, iid: str) -> Instance | None:
        for i in self.instances:
            if i.id == iid:
                return i
        return None

    @property
    def ids(self) -> list[str]:
        return [i.id for i in self.instances]

    def spares(self, tname: str) -> int:
        return dict(self.pool).get(tname, 0)

    def bindings_of(self, iid: str) -> list[tuple[str, str, str]]:
        return sorted(b for b in self.bindings if b[0] == iid or b[2] == iid)

    def reported_status(self, iid: str) -> str:
        inst = self.get(iid)
        if inst is None:
            return "absent"
        if inst.status == "inactive" and self.bindings_of(iid):
            return "connected"
        return inst.status

    def with_instance(self, inst: Instance) -> Configuration:
        others = [i for i in self.instances if i.id != inst.id]
        return replace(self, instances=tuple(sorted(others + [inst], key=lambda i: i.id)))

    def without(self, iid: str) -> Configuration:
        return replace(self, instances=tuple(i for i in self.instances if i.id != iid))

    def active_count(self) -> int:
        return sum(1 for i in self.instances if i.status == "active")


def make_configuration(instances: Iterable[Instance], bindings: Iterable[tuple[str, str, str]] = (),
                       pool: Iterable[ComponentType] = ()) -> Configuration:
    return Configuration(tuple(sorted(instances, key=lambda i: i.id)), frozenset(bindings),
                         tuple(sorted((t.name, t.spares) for t in pool)))


# -- constraints and targets ----------------------------------------------

@dataclass(frozen=True)
class StructuralConstraint:
    kind: str  # always_present | never_disabled | max_active | require_bound
    arg: str

    def __str__(self) -> str:
        return f"{self.kind}({self.arg})"


@dataclass(frozen=True)
class Violation:
    constraint: StructuralConstraint
    instances: tuple[str, ...]


@dataclass(frozen=True)
class TargetSpec:
    required: frozenset[str] = frozenset()
    forbidden: frozenset[str] = frozenset()
    params: tuple[tuple[str, str, str], ...] = ()  # (instance, key, value)

    def satisfied_by(self, c: Configuration) -> bool:
        if not self.required <= capability_profile(c):
            return False
        if any(c.get(f) is not None for f in self.forbidden):
            return False
        for iid, k, v in self.params:
            inst = c.get(iid)
            if inst is None or dict(inst.params).get(k) != v:
                return False
        return True


def check_invariants(c: Configuration, cs: Iterable[StructuralConstraint]) -> list[Violation]:
    out = []
    for con in cs:
        if con.kind == "always_present":
            if con.arg not in capability_profile(c):
                out.append(Violation(con, tuple(sorted(i.id for i in c.instances
                                                       if con.arg in i.type.provides))))
        elif con.kind == "never_disabled":
            match = [i for i in c.instances if con.arg in (i.id, i.type.name)]
            bad = [i.id for i in match if i.status != "active"]
            if bad or not match:
                out.append(Violation(con, tuple(sorted(bad))))
        elif con.kind == "max_active":
            if c.active_count() > int(con.arg):
                out.append(Violation(con, tuple(sorted(i.id for i in c.instances
                                                       if i.status == "active"))))
        elif con.kind == "require_bound":
            bad = [i.id for i in c.instances if i.type.name == con.arg and i.status == "active"
                   and not _fully_bound(c, i)]
            if bad:
                out.append(Violation(con, tuple(sorted(bad))))
        else:
            raise ReconfigError(f"unknown constraint kind {con.kind}")
    return out


def _fully_bound(c: Configuration, inst: Instance) -> bool:
    bound = {tag for src, tag, _ in c.bindings if src == inst.id}
    return inst.type.requires <= bound


def capability_profile(c: Configuration) -> frozenset[str]:
    """Tags provided by active instances whose requirements are, transitively, served."""
    working: set[str] = set()
    changed = True
    while changed:
        changed = False
        for inst in c.instances:
            if inst.id in working or inst.status != "active":
                continue
            ok = True
            for tag in inst.type.requires:
                if not any(src == inst.id and t == tag and dst in working
                           for src, t, dst in c.bindings):
                    ok = False
                    break
            if ok:
                working.add(inst.id)
                changed = True
    return frozenset(tag for inst in c.instances if inst.id in working for tag in inst.type.provides)


# -- commands --------------------------------------------------------------

_CMD = re.compile(r"^cfg\.(add|remove|bind|unbind|activate|passivate|setparam)\(([^()]*)\)$")


def parse_command(label: str) -> tuple[str, list[str]]:
    m = _CMD.match(label)
    if not m:
        raise ReconfigError(f"not a reconfiguration command: {label}")
    return m.group(1), m.group(2).split(",")


def new_instance_id(c: Configuration, tname: str) -> str:
    if c.get(tname) is None:
        return tname
    n = 2
    while c.get(f"{tname}{n}") is not None:
        n += 1
    return f"{tname}{n}"


def apply_command(c: Configuration, label: str, types: dict[str, ComponentType]) -> tuple[Configuration, list[str]]:
    """Execute one command. Returns the new configuration and the touched instance ids.

    Raises CommandRejected when a precondition fails (reported as ``cfg.cmd_fail``).
    """
    op, args = parse_command(label)
    if op == "add":
        (tname,) = args
        if tname not in types or c.spares(tname) <= 0:
            raise CommandRejected(f"no spare {tname} in pool")
        iid = new_instance_id(c, tname)
        t = types[tname]
        pool = tuple((n, k - 1 if n == tname else k) for n, k in c.pool)
        return replace(c.with_instance(Instance(iid, t, "inactive", t.params)), pool=pool), [iid]
    if op == "remove":
        (iid,) = args
        inst = c.get(iid)
        if inst is None or not inst.passive or c.bindings_of(iid):
            raise CommandRejected(f"{iid} not isolated and passive")
        return c.without(iid), [iid]
    if op in ("bind", "unbind"):
        src, tag, dst = args
        s, d = c.get(src), c.get(dst)
        if s is None or d is None:
            raise CommandRejected("unknown instance")
        if op == "bind":
            if (s.status == "killed" or d.status == "killed" or tag not in s.type.requires
                    or tag not in d.type.provides
                    or any(b[0] == src and b[1] == tag for b in c.bindings)):
                raise CommandRejected(f"cannot bind {src}.{tag} to {dst}")
            return replace(c, bindings=c.bindings | {(src, tag, dst)}), sorted({src, dst})
        if (src, tag, dst) not in c.bindings or not s.passive:
            raise CommandRejected(f"cannot unbind {src}.{tag} from {dst}")
        return replace(c, bindings=c.bindings - {(src, tag, dst)}), sorted({src, dst})
    if op == "activate":
        (iid,) = args
        inst = c.get(iid)
        if inst is None or inst.status != "inactive" or not _fully_bound(c, inst):
            raise CommandRejected(f"cannot activate {iid}")
        return c.with_instance(replace(inst, status="active")), [iid]
    if op == "passivate":
        (iid,) = args
        inst = c.get(iid)
        if inst is None or inst.status != "active":
            raise CommandRejected(f"cannot passivate {iid}")
        return c.with_instance(replace(inst, status="inactive")), [iid]
    iid, key, value = args
    inst = c.get(iid)
    if inst is None or inst.status == "killed":
        raise CommandRejected(f"cannot set {key} on {iid}")
    params = dict(inst.params)
    params[key] = value
    return c.with_instance(replace(inst, params=tuple(sorted(params.items())))), [iid]


def status_label(c: Configuration, touched: Iterable[str]) -> str:
    parts = [f"{i}:{c.reported_status(i)}:{len(c.bindings_of(i))}" for i in sorted(touched)]
    return f"cfg.st({','.join(parts)})"


def candidate_commands(c: Configuration, types: dict[str, ComponentType], target: TargetSpec) -> list[str]:
    cmds = []
    for tname, left in c.pool:
        if left > 0 and tname in types:
            cmds.append(f"cfg.add({tname})")
    for inst in c.instances:
        i = inst.id
        if inst.status == "active":
            cmds.append(f"cfg.passivate({i})")
        elif inst.status == "inactive":
            if _fully_bound(c, inst):
                cmds.append(f"cfg.activate({i})")
            if not c.bindings_of(i):
                cmds.append(f"cfg.remove({i})")
        elif not c.bindings_of(i):
            cmds.append(f"cfg.remove({i})")
        if inst.status != "killed":
            for tag in sorted(inst.type.requires):
                if any(b[0] == i and b[1] == tag for b in c.bindings):
                    continue
                for d in c.instances:
                    if d.status != "killed" and tag in d.type.provides and d.id != i:
                        cmds.append(f"cfg.bind({i},{tag},{d.id})")
    for src, tag, dst in c.bindings:
        if c.get(src).passive:
            cmds.append(f"cfg.unbind({src},{tag},{dst})")
    for iid, key, value in target.params:
        inst = c.get(iid)
        if inst is not None and inst.status != "killed" and dict(inst.params).get(key) != value:
            cmds.append(f"cfg.setparam({iid},{key},{value})")
    return sorted(cmds)


# -- plans -----------------------------------------------------------------

@dataclass(frozen=True)
class Infeasible:
    reason: str = ""

    def __bool__(self) -> bool:
        return False


@dataclass
class ReconfigStrategy:
    id: str
    source: Configuration
    target: TargetSpec
    commands: list[str]
    reports: list[str]
    automaton: StrategyAutomaton
    target_profile: frozenset[str]
    final: Configuration

    @property
    def length(self) -> int:
        return len(self.commands)


def _strategy(sid: str, source: Configuration, target: TargetSpec, commands: list[str],
              reports: list[str], final: Configuration) -> ReconfigStrategy:
    """Happy path plus a ``cfg.cmd_fail`` branch after every command."""
    n = len(commands)
    delta, choice, allowed, expected = {}, {}, {}, {}
    for i in range(n):
        step, wait = ("step", i), ("await", i)
        delta[step] = {commands[i]: wait}
        choice[step] = commands[i]
        allowed[step] = frozenset([commands[i]])
        expected[step] = frozenset()
        nxt = ("step", i + 1) if i + 1 < n else "done"
        delta[wait] = {reports[i]: nxt, CMD_FAIL: "failed"}
        choice[wait] = None
        allowed[wait] = frozenset()
        expected[wait] = frozenset([reports[i], CMD_FAIL])
    for sink in ("done", "failed"):
        delta[sink], choice[sink], allowed[sink], expected[sink] = {}, None, frozenset(), frozenset()
    init = ("step", 0) if n else "done"
    alphabet = frozenset(commands) | frozenset(reports) | {CMD_FAIL}
    auto = StrategyAutomaton(sid, "reach", init, alphabet, frozenset(commands), delta, choice,
                             allowed, expected, None, {"reports": list(reports)})
    return ReconfigStrategy(sid, source, target, list(commands), list(reports), auto,
                            capability_profile(final), final)


def plan_reconfiguration(current: Configuration, target: TargetSpec, cs: list[StructuralConstraint],
                         pool: Iterable[ComponentType], sid: str = "plan",
                         max_states: int = DEFAULT_MAX_STATES) -> ReconfigStrategy | Infeasible:
    """Shortest constraint-respecting command sequence; ties go to the
    lexicographically smallest sequence (BFS expanding sorted commands)."""
    types = {t.name: t for t in pool}
    types.update({i.type.name: i.type for i in current.instances if i.type.name not in types})
    if check_invariants(current, cs):
        return Infeasible("current configuration violates the structural constraints")
    parent: dict[Configuration, tuple[Configuration, str, str] | None] = {current: None}
    queue = deque([current])
    goal = None
    while queue:
        c = queue.popleft()
        if target.satisfied_by(c):
            goal = c
            break
        for cmd in candidate_commands(c, types, target):
            try:
                nxt, touched = apply_command(c, cmd, types)
            except CommandRejected:
                continue
            if nxt in parent or check_invariants(nxt, cs):
                continue
            parent[nxt] = (c, cmd, status_label(nxt, touched))
            if len(parent) > max_states:
                return Infeasible(f"search exceeded {max_states} configurations")
            queue.append(nxt)
    if goal is None:
        return Infeasible("no constraint-respecting path reaches the target")
    cmds, reports = [], []
    c = goal
    while parent[c] is not None:
        c, cmd, rep = parent[c]
        cmds.append(cmd)
        reports.append(rep)
    return _strategy(sid, current, target, cmds[::-1], reports[::-1], goal)


def replay(plan: ReconfigStrategy, start: Configuration, cs: Iterable[StructuralConstraint] = (),
           types: dict[str, ComponentType] | None = None) -> list[Configuration] | None:
    """Dry-run the happy path; None if any command is rejected, a report
    differs, or a constraint breaks on the way."""
    cs = list(cs)
    types = dict(types or {})
    types.update({i.type.name: i.type for i in plan.source.instances})
    types.update({i.type.name: i.type for i in plan.final.instances})
    trail = [start]
    c = start
    for cmd, rep in zip(plan.commands, plan.reports):
        try:
            c, touched = apply_command(c, cmd, types)
        except CommandRejected:
            return None
        if status_label(c, touched) != rep or check_invariants(c, cs):
            return None
        trail.append(c)
    return trail if plan.target.satisfied_by(c) else None


def quiescent_removals(plan: ReconfigStrategy) -> bool:
    """Every remove(c) follows an observation of c passive with zero bindings.

    Observations are the initial status snapshot and the per-command reports.
    """
    known = {i.id: (plan.source.reported_status(i.id), len(plan.source.bindings_of(i.id)))
             for i in plan.source.instances}
    for cmd, rep in zip(plan.commands, plan.reports):
        op, args = parse_command(cmd)
        if op == "remove":
            st, nb = known.get(args[0], ("absent", -1))
            if st == "active" or st == "absent" or nb != 0:
                return False
        for part in rep[len("cfg.st("):-1].split(","):
            iid, st, nb = part.split(":")
            known[iid] = (st, int(nb))
    return True


# -- text formats ----------------------------------------------------------

def _tags(tokens: list[str]) -> frozenset[str]:
    return frozenset(t for tok in tokens for t in tok.split(",") if t and t != "-")


def parse_component_type(tok: list[str]) -> ComponentType:
    """``type <name> provides <tags> requires <tags> param <k>=<v>... [spares <n>]``"""
    if len(tok) < 2 or tok[0] != "type":
        raise ConfigParseError(" ".join(tok))
    sections: dict[str, list[str]] = {"provides": [], "requires": [], "param": [], "spares": []}
    current = None
    for t in tok[2:]:
        if t in sections:
            current = t
        elif current is None:
            raise ConfigParseError(f"unexpected token {t!r}")
        else:
            sections[current].append(t)
    try:
        params = tuple(sorted(tuple(p.split("=", 1)) for p in sections["param"]))
        spares = int(sections["spares"][0]) if sections["spares"] else 1
    except (ValueError, IndexError) as exc:
        raise ConfigParseError(" ".join(tok)) from exc
    if any(len(p) != 2 for p in params):
        raise ConfigParseError(" ".join(tok))
    return ComponentType(tok[1], _tags(sections["provides"]), _tags(sections["requires"]), params, spares)


def parse_pool(text: str) -> list[ComponentType]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            try:
                out.append(parse_component_type(line.split()))
            except ConfigParseError as exc:
                raise ConfigParseError(f"line {lineno}: {exc}") from exc
    return out


def parse_constraint(tok: list[str]) -> StructuralConstraint:
    if len(tok) != 3 or tok[0] != "constraint" or tok[1] not in (
            "always_present", "never_disabled", "max_active", "require_bound"):
        raise ConfigParseError(" ".join(tok))
    if tok[1] == "max_active" and not tok[2].isdigit():
        raise ConfigParseError(" ".join(tok))
    return StructuralConstraint(tok[1], tok[2])


def parse_configuration(text: str, pool: list[ComponentType]) -> tuple[Configuration, list[StructuralConstraint], TargetSpec]:
    """Standalone planner input: ``component``, ``bind``, ``constraint``,
    ``require``, ``forbid`` and ``param`` records."""
    types = {t.name: t for t in pool}
    instances, bindings, cs = [], [], []
    req, forbid, params = set(), set(), []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "component" and len(tok) == 3 and tok[2] in STATUSES:
                if tok[1] not in types:
                    raise ConfigParseError(f"unknown type {tok[1]}")
                t = types[tok[1]]
                status = "inactive" if tok[2] == "connected" else tok[2]
                instances.append(Instance(tok[1], t, status, t.params))
            elif tok[0] == "bind" and len(tok) == 4:
                bindings.append((tok[1], tok[2], tok[3]))
            elif tok[0] == "constraint":
                cs.append(parse_constraint(tok))
            elif tok[0] == "require":
                req.update(tok[1:])
            elif tok[0] == "forbid":
                forbid.update(tok[1:])
            elif tok[0] == "param" and len(tok) == 3 and "=" in tok[2]:
                k, v = tok[2].split("=", 1)
                params.append((tok[1], k, v))
            else:
                raise ConfigParseError(raw.strip())
        except ConfigParseError as exc:
            raise ConfigParseError(f"line {lineno}: {exc}") from exc
    used = {i.type.name for i in instances}
    spare_types = [t for t in pool if t.name not in used]
    config = make_configuration(instances, bindings, spare_types)
    return config, cs, TargetSpec(frozenset(req), frozenset(forbid), tuple(sorted(params)))
