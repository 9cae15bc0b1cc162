import math

import numpy as np
import pytest

from robustoc.errors import InvalidParameterError, MonotonicityViolationError
from robustoc.models import (HarmonicTransportModel, HarmonicTransportProblem, LandauZenerModel,
                             harmonic_quantum_problem, harmonic_reference_optimal_pulse, lz_linear_ramp, lz_problem)
from robustoc.optimizer import KrotovConfig, gradient_norm, krotov_optimize
from robustoc.pulse import TimeGrid


def lz_setup(N=128, objective="phase_sensitive"):
    lz = LandauZenerModel()
    grid = TimeGrid(10.0, N)
    return lz_problem(lz, grid, objective), lz_linear_ramp(lz, grid)


def test_config_validation():
    for bad in ({"step_weight": 0}, {"max_iters": 0}, {"target_infidelity": -1}, {"stall_tolerance": 0}):
        with pytest.raises(InvalidParameterError):
            KrotovConfig(**bad)


def test_lz_reaches_target_monotonically():
    problem, ramp = lz_setup()
    tr = krotov_optimize(problem, ramp)
    assert tr.converged and tr.iterations <= 500
    assert tr.costs[-1] <= 1e-4
    assert np.all(np.diff(tr.costs) <= 0)
    assert tr.pulse.values[0] == ramp.values[0] and tr.pulse.values[-1] == ramp.values[-1]
    lines = tr.to_csv().splitlines()
    assert lines[0] == "iteration,cost" and len(lines) == len(tr.costs) + 1


def test_overlap_objective_converges():
    problem, ramp = lz_setup(64, "overlap")
    tr = krotov_optimize(problem, ramp, KrotovConfig(1.0, 500, 1e-8))
    assert tr.converged
    assert np.all(np.diff(tr.costs) <= 0)


def test_already_optimal_pulse_is_left_alone():
    grid = TimeGrid(4 * math.pi, 128)
    problem = harmonic_quantum_problem(HarmonicTransportModel(fock_dim=60), grid)
    p = harmonic_reference_optimal_pulse(5.0, grid.T, grid.N)
    tr = krotov_optimize(problem, p)
    assert tr.converged and tr.iterations == 0
    assert np.max(np.abs(tr.pulse.values - p.values)) <= 1e-10


def test_doubling_step_weight_halves_first_update():
    problem, ramp = lz_setup(64)
    a = krotov_optimize(problem, ramp, KrotovConfig(1.0, 1))
    b = krotov_optimize(problem, ramp, KrotovConfig(2.0, 1))
    ratio = np.max(np.abs(b.first_update)) / np.max(np.abs(a.first_update))
    assert ratio == pytest.approx(0.5, rel=0.05)


def test_too_small_step_weight_is_reported():
    problem, ramp = lz_setup(64)
    with pytest.raises(MonotonicityViolationError):
        krotov_optimize(problem, ramp, KrotovConfig(1e-3, 50))


def test_max_iters_reached_returns_unconverged_trace():
    problem, ramp = lz_setup(64)
    tr = krotov_optimize(problem, ramp, KrotovConfig(1.0, 2, 1e-12))
    assert not tr.converged and tr.iterations == 2 and len(tr.costs) == 3


def test_numba_and_numpy_sweeps_agree():
    problem, ramp = lz_setup(64)
    cfg = KrotovConfig(1.0, 5, 1e-12)
    a = krotov_optimize(problem, ramp, cfg, use_numba=True)
    b = krotov_optimize(problem, ramp, cfg, use_numba=False)
    np.testing.assert_allclose(a.pulse.values, b.pulse.values, atol=1e-12)
    np.testing.assert_allclose(a.costs, b.costs, atol=1e-14)


def test_gradient_norm():
    g = TimeGrid(4 * math.pi, 128)
    prob = HarmonicTransportProblem(g, 5.0)
    assert gradient_norm(prob, harmonic_reference_optimal_pulse(5.0, g.T, g.N)) <= 1e-8
    problem, ramp = lz_setup(64)
    assert gradient_norm(problem, ramp) > 0
