import sys
from functools import lru_cache
from pathlib import Path

import pytest


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 9):
        if n in mod.RESULTS:
            ok, detail = mod.RESULTS[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}{(' ' + detail) if detail else ''}")
        elif any(f"criterion_{n}_" in name for name in mod.__dict__):
            terminalreporter.write_line(f"criterion {n}: FAIL (test errored or was not run)")


SCN = Path(__file__).resolve().parent.parent / "scenarios"


def fresh_run(name: str = "nominal", **overrides):
    from morph.scenario import load_scenario
    from morph.scheduler import Run
    sc = load_scenario(SCN / f"{name}.scn")
    for k, v in overrides.items():
        setattr(sc, k, v)
    r = Run(sc, 0)
    r._ingest()
    return r


@lru_cache(maxsize=None)
def cached_run(name: str, seed: int = 0, max_ticks: int = 500):
    """(Run, Trace) for a scenario, shared across test modules."""
    from morph.scenario import load_scenario
    from morph.scheduler import Run
    r = Run(load_scenario(SCN / f"{name}.scn"), seed)
    return r, r.run(max_ticks)


@pytest.fixture(scope="session")
def nominal_portfolio():
    r = fresh_run()
    return r, r.gm.precompute(r.repo.model, r.repo.snapshot(), r.world.config)


@pytest.fixture(scope="session")
def wide_portfolio():
    r = fresh_run(k=2)
    return r, r.gm.precompute(r.repo.model, r.repo.snapshot(), r.world.config)
