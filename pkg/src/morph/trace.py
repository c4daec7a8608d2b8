"""Trace records and the property verifier used by ``morph verify``.

One record per line: ``t=<tick> layer=<layer> kind=<kind>`` followed by the
detail fields with keys sorted. Values never contain spaces.

Property files hold one pattern per line. A pattern over records is a list of
``key=value`` conditions joined by ``&``; values are shell-style globs::

    precedes kind=command&cmd=land kind=command&cmd=fold_arm
    never layer=enact_b&kind=exception
    eventually kind=event&ev=cfg.reconf_ok
    projection-equal other.trace layer=enact_b&kind=command
    consistent-commits
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path

LAYERS = ("target", "repo", "enact_b", "enact_r", "mgr", "goal")
KINDS = ("event", "command", "status", "exception", "swap", "negotiate", "notify")


class TraceParseError(Exception):
    pass


@dataclass(frozen=True)
class TraceRecord:
    t: int
    layer: str
    kind: str
    detail: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.layer not in LAYERS or self.kind not in KINDS:
            raise TraceParseError(f"bad layer/kind {self.layer}/{self.kind}")
        for k, v in self.detail:
            if not k or " " in k or "=" in k or " " in v or k in ("t", "layer", "kind"):
                raise TraceParseError(f"bad detail field {k!r}={v!r}")

    @classmethod
    def make(cls, t: int, layer: str, kind: str, **detail) -> TraceRecord:
        return cls(t, layer, kind, tuple(sorted((k, _fmt(v)) for k, v in detail.items())))

    def get(self, key: str, default: str | None = None) -> str | None:
        if key == "t":
            return str(self.t)
        if key in ("layer", "kind"):
            return getattr(self, key)
        return dict(self.detail).get(key, default)

    def __str__(self) -> str:
        tail = "".join(f" {k}={v}" for k, v in self.detail)
        return f"t={self.t} layer={self.layer} kind={self.kind}{tail}"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (set, frozenset)):
        return ",".join(sorted(map(str, v))) or "-"
    if isinstance(v, (list, tuple)):
        return ",".join(map(str, v)) or "-"
    s = str(v)
    return s.replace(" ", "_") if s else "-"


def parse_record(line: str) -> TraceRecord:
    fields = []
    for tok in line.split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise TraceParseError(f"field without '=': {tok!r}")
        fields.append((k, v))
    if len(fields) < 3 or [k for k, _ in fields[:3]] != ["t", "layer", "kind"]:
        raise TraceParseError(f"record must start with t, layer, kind: {line!r}")
    try:
        t = int(fields[0][1])
    except ValueError as exc:
        raise TraceParseError(f"bad tick in {line!r}") from exc
    detail = tuple(fields[3:])
    if list(detail) != sorted(detail, key=lambda p: p[0]):
        raise TraceParseError(f"detail keys not sorted: {line!r}")
    return TraceRecord(t, fields[1][1], fields[2][1], detail)


def parse_trace(text: str) -> list[TraceRecord]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = parse_record(line)
        except TraceParseError as exc:
            raise TraceParseError(f"line {n}: {exc}") from exc
        if out and r.t < out[-1].t:
            raise TraceParseError(f"line {n}: tick goes backwards")
        out.append(r)
    return out


def dump_trace(records) -> str:
    return "".join(f"{r}\n" for r in records)


# -- patterns ----------------------------------------------------------------

@dataclass(frozen=True)
class Pattern:
    conds: tuple[tuple[str, str], ...]

    @classmethod
    def parse(cls, text: str) -> Pattern:
        conds = []
        for part in text.split("&"):
            k, sep, v = part.partition("=")
            if not sep or not k:
                raise TraceParseError(f"bad condition {part!r}")
            conds.append((k, v))
        return cls(tuple(conds))

    def matches(self, r: TraceRecord) -> bool:
        for k, v in self.conds:
            got = r.get(k)
            if got is None or not fnmatchcase(got, v):
                return False
        return True

    def __str__(self) -> str:
        return "&".join(f"{k}={v}" for k, v in self.conds)


@dataclass
class CheckResult:
    prop: str
    ok: bool
    detail: str = ""
    lines: list[int] = field(default_factory=list)

    def __str__(self) -> str:
        where = f" (lines {','.join(map(str, self.lines))})" if self.lines else ""
        return f"{'PASS' if self.ok else 'FAIL'} {self.prop}{(': ' + self.detail) if self.detail else ''}{where}"


def _index(trace, p: Pattern) -> list[int]:
    return [i for i, r in enumerate(trace) if p.matches(r)]


def check_precedes(trace, a: Pattern, b: Pattern) -> CheckResult:
    """Every B is preceded by some A."""
    name = f"precedes {a} {b}"
    first_a = next(iter(_index(trace, a)), None)
    bad = [i + 1 for i in _index(trace, b) if first_a is None or i < first_a]
    return CheckResult(name, not bad, "B before any A" if bad else "", bad)


def check_never(trace, a: Pattern) -> CheckResult:
    hits = [i + 1 for i in _index(trace, a)]
    return CheckResult(f"never {a}", not hits, "matched" if hits else "", hits)


def check_eventually(trace, a: Pattern) -> CheckResult:
    ok = bool(_index(trace, a))
    return CheckResult(f"eventually {a}", ok, "" if ok else "no match")


def projection(trace, p: Pattern) -> list[str]:
    """Matching records with the tick dropped."""
    return [str(r).split(" ", 1)[1] for r in trace if p.matches(r)]


def check_projection_equal(trace, other, p: Pattern, name: str = "") -> CheckResult:
    x, y = projection(trace, p), projection(other, p)
    label = f"projection-equal {name} {p}".replace("  ", " ")
    if x == y:
        return CheckResult(label, True)
    i = next((i for i, (u, v) in enumerate(zip(x, y)) if u != v), min(len(x), len(y)))
    got = x[i] if i < len(x) else "<end>"
    want = y[i] if i < len(y) else "<end>"
    return CheckResult(label, False, f"item {i + 1}: {got!r} vs {want!r}")


def check_consistent_commits(trace) -> CheckResult:
    """Each Commit names a pair from the latest installed portfolio's relation."""
    relation: set[tuple[str, str]] | None = None
    bad = []
    for i, r in enumerate(trace):
        if r.layer == "mgr" and r.kind == "notify" and r.get("msg") == "installed":
            rel = r.get("relation", "")
            relation = {tuple(p.split("|", 1)) for p in rel.split(";") if "|" in p}
        elif r.layer == "mgr" and r.kind == "negotiate" and r.get("msg") == "Commit":
            if relation is None or (r.get("b"), r.get("r")) not in relation:
                bad.append(i + 1)
    return CheckResult("consistent-commits", not bad, "commit outside relation" if bad else "", bad)


def verify(trace, spec_text: str, base_dir: Path | None = None) -> list[CheckResult]:
    out = []
    for n, raw in enumerate(spec_text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "precedes" and len(tok) == 3:
                out.append(check_precedes(trace, Pattern.parse(tok[1]), Pattern.parse(tok[2])))
            elif tok[0] == "never" and len(tok) == 2:
                out.append(check_never(trace, Pattern.parse(tok[1])))
            elif tok[0] == "eventually" and len(tok) == 2:
                out.append(check_eventually(trace, Pattern.parse(tok[1])))
            elif tok[0] == "projection-equal" and len(tok) == 3:
                path = Path(tok[1])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                other = parse_trace(path.read_text())
                out.append(check_projection_equal(trace, other, Pattern.parse(tok[2]), tok[1]))
            elif tok[0] == "consistent-commits" and len(tok) == 1:
                out.append(check_consistent_commits(trace))
            else:
                raise TraceParseError(f"unknown property {line!r}")
        except TraceParseError as exc:
            raise TraceParseError(f"property line {n}: {exc}") from exc
    return out
