import math

import numpy as np
import pytest

from robustoc.hessian import build_hessian
from robustoc.models import (HarmonicTransportProblem, LandauZenerModel, harmonic_reference_optimal_pulse,
                             lz_linear_ramp, lz_problem)
from robustoc.optimizer import KrotovConfig, krotov_optimize
from robustoc.pulse import TimeGrid

# criterion number -> list of (ok, detail, seconds); filled by test_acceptance.py
ACCEPTANCE = {}

TIGHT = KrotovConfig(step_weight=0.5, max_iters=3000, target_infidelity=1e-20, stall_tolerance=1e-26)


def record(criterion, ok, detail, seconds):
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail, seconds))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        secs = sum(p[2] for p in parts)
        tr.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  ({secs:.1f} s)  {detail}")


@pytest.fixture(scope="session")
def lz_model():
    return LandauZenerModel()


@pytest.fixture(scope="session")
def lz64(lz_model):
    grid = TimeGrid(10.0, 64)
    problem = lz_problem(lz_model, grid)
    trace = krotov_optimize(problem, lz_linear_ramp(lz_model, grid), TIGHT)
    return problem, trace.pulse


@pytest.fixture(scope="session")
def lz64_hessian(lz64):
    problem, pulse = lz64
    return build_hessian(problem, pulse)


@pytest.fixture(scope="session")
def harmonic():
    grid = TimeGrid(4 * math.pi, 128)
    problem = HarmonicTransportProblem(grid, 5.0)
    pulse = harmonic_reference_optimal_pulse(5.0, grid.T, grid.N)
    return problem, pulse


@pytest.fixture(scope="session")
def harmonic_hessian(harmonic):
    problem, pulse = harmonic
    return build_hessian(problem, pulse)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
