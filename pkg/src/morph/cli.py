"""Command-line front end.

    morph run SCENARIO [--seed N] [--max-ticks N] [--trace FILE]
    morph verify TRACE PROPERTIES
    morph solve LTS... --kind safety|reach|buchi --states S,S [--fair S,S] [--out FILE]
    morph plan POOL CONFIG [--out FILE]

Exit codes: 0 success or mission complete, 1 usage or parse error,
2 aborted (empty portfolio), 3 timeout, 4 unrealizable or infeasible,
5 verification failed.
"""

from __future__ import annotations

import argparse
import sys
from functools import reduce
from pathlib import Path

from .lts import Lts, LtsError, compose, parse_lts
from .reconfig import ConfigParseError, Infeasible, parse_configuration, parse_pool, plan_reconfiguration
from .scenario import ScenarioParseError, load_scenario
from .scheduler import EXIT_UNREALIZABLE, EXIT_USAGE, run
from .synthesis import BehaviourGoal, GameProblem, Unrealizable, dump_strategy, solve
from .trace import TraceParseError, parse_trace, verify

EXIT_VERIFY_FAILED = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="morph", description="Self-adaptation kernel with a simulated UAV target.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario and write its trace")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-ticks", type=int, default=500)
    r.add_argument("--trace", help="trace output file (default: stdout)")

    v = sub.add_parser("verify", help="check trace properties")
    v.add_argument("trace")
    v.add_argument("properties")

    s = sub.add_parser("solve", help="synthesize a behaviour strategy for composed LTS files")
    s.add_argument("models", nargs="+")
    s.add_argument("--kind", choices=["safety", "reach", "buchi"], required=True)
    s.add_argument("--states", required=True,
                   help="comma-separated state names: bad (safety), target (reach) or accepting (buchi)")
    s.add_argument("--fair", help="comma-separated fairness states (buchi)")
    s.add_argument("--out")

    pl = sub.add_parser("plan", help="plan a reconfiguration")
    pl.add_argument("pool")
    pl.add_argument("config")
    pl.add_argument("--out")
    return p


def state_name(s) -> str:
    """Composed states are named by their components joined with '|'."""
    if isinstance(s, tuple):
        return "|".join(state_name(x) for x in s)
    return str(s)


def _flatten(arena: Lts) -> Lts:
    """Rename product states to their '|'-joined names."""
    return Lts({state_name(q) for q in arena.states}, state_name(arena.initial), arena.alphabet,
               arena.controllable, [(state_name(x), l, state_name(y)) for x, l, y in arena.transitions()])


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(a) -> int:
    sc = load_scenario(a.scenario)
    trace = run(sc, a.seed, a.max_ticks)
    _write(trace.text(), a.trace)
    print(f"status={trace.status} ticks={trace.ticks}", file=sys.stderr)
    return trace.exit_code


def cmd_verify(a) -> int:
    path = Path(a.trace)
    trace = parse_trace(path.read_text())
    results = verify(trace, Path(a.properties).read_text(), base_dir=Path(a.properties).parent)
    for r in results:
        print(r)
    return 0 if all(r.ok for r in results) else EXIT_VERIFY_FAILED


def cmd_solve(a) -> int:
    models = [parse_lts(Path(m).read_text()) for m in a.models]
    arena = _flatten(reduce(compose, models))
    names = set(a.states.split(","))
    fair = set(a.fair.split(",")) if a.fair else None
    goal = BehaviourGoal(a.kind, a.kind, lambda s: s in names)
    fairness = fair.__contains__ if fair is not None else None
    res = solve(GameProblem(arena, goal, fairness), a.kind)
    if isinstance(res, Unrealizable):
        print("unrealizable")
        return EXIT_UNREALIZABLE
    _write(dump_strategy(res), a.out)
    return 0


def cmd_plan(a) -> int:
    pool = parse_pool(Path(a.pool).read_text())
    config, cs, target = parse_configuration(Path(a.config).read_text(), pool)
    res = plan_reconfiguration(config, target, cs, pool)
    if isinstance(res, Infeasible):
        print(f"infeasible: {res.reason}")
        return EXIT_UNREALIZABLE
    lines = [f"{c} -> {r}" for c, r in zip(res.commands, res.reports)]
    _write("\n".join(lines) + ("\n" if lines else ""), a.out)
    return 0


def main(argv=None) -> int:
    try:
        a = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"morph: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handler = {"run": cmd_run, "verify": cmd_verify, "solve": cmd_solve, "plan": cmd_plan}[a.cmd]
    try:
        return handler(a)
    except (OSError, ScenarioParseError, TraceParseError, LtsError, ConfigParseError) as exc:
        print(f"morph: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
