from __future__ import annotations

import functools

import pytest

from umnicrl.harness import ExperimentConfig, run_batch

MASTER_SEED = 0

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def _full_batch(kind: str, d: int, n_samples: int):
    config = ExperimentConfig(
        n=4, d=d, n_samples=n_samples, n_graphs=200, density=0.5,
        intervention_kind=kind, score_mode="estimated", seed=MASTER_SEED,
    )
    return run_batch(config)


@pytest.fixture(scope="session")
def full_batch():
    """``full_batch(kind, d, n_samples) -> (rows, summary)``, computed once per session."""
    return _full_batch
