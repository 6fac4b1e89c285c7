import numpy as np
import pytest

from nserrors import Problem, SamplerConfig, TerminationRule, repeat_runs

GAUSS3 = Problem("gaussian", 3, prior_sigma=10.0)
GAUSS3_LOGZ = -1.5 * np.log(2 * np.pi * 101.0)

# criterion -> list of (check name, passed, detail)
ACCEPTANCE = {}


def record(criterion, name, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[criterion]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {criterion}: {status}")
        for name, ok, detail in checks:
            tr.write_line(f"    [{'pass' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="session")
def small_gauss_runs():
    """Forty short gaussian runs for fast unit tests."""
    return repeat_runs(GAUSS3, SamplerConfig(50), 40, base_seed=11)


@pytest.fixture(scope="session")
def gauss_run():
    return repeat_runs(GAUSS3, SamplerConfig(200), 1, base_seed=5)[0]


@pytest.fixture(scope="session")
def gauss_runs_2000():
    """Desk-scale gaussian d=3, n=200 repeats shared by several criteria."""
    config = SamplerConfig(200, TerminationRule("evidence_fraction", eps=1e-4))
    return repeat_runs(GAUSS3, config, 2000, base_seed=20240101)
