from __future__ import annotations

import pytest

from valuesim.backend import BackendConfig
from valuesim.config import RunConfig, Stage1Config, Stage2Config
from valuesim.engine import run_experiment
from valuesim.persona import Complexity, PopulationCondition, PopulationSpec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = str(getattr(report, "nodeid", ""))
            if "test_acceptance.py" not in nodeid:
                continue
            if outcome == "passed" and getattr(report, "when", "call") != "call":
                continue
            rows.append((nodeid.split("::")[-1], outcome == "passed"))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok in sorted(set(rows)):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


def make_config(
    n: int = 4,
    condition: PopulationCondition = PopulationCondition.DIVERSE_BALANCED,
    complexity: Complexity = Complexity.SINGLE,
    category=None,
    seed: int = 7,
    **stage1_overrides,
) -> RunConfig:
    return RunConfig(
        seed=seed,
        population=PopulationSpec(
            n=n, condition=condition, complexity=complexity, homogeneous_category=category
        ),
        stage1=Stage1Config(**stage1_overrides) if stage1_overrides else Stage1Config(),
        stage2=Stage2Config(),
        backend=BackendConfig(kind="mock", seed=seed),
    )


@pytest.fixture(scope="session")
def smoke_run(tmp_path_factory):
    """One shared 4-agent mock run; read-only for every test that needs a
    realistic event log."""
    out = tmp_path_factory.mktemp("smoke") / "run"
    run_dir, summary = run_experiment(make_config(), out)
    return run_dir


@pytest.fixture(scope="session")
def novalue_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("novalue") / "run"
    config = make_config(
        n=4, condition=PopulationCondition.NO_VALUE, complexity=Complexity.NONE, seed=3
    )
    run_dir, _ = run_experiment(config, out)
    return run_dir
