import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustoc.errors import InvalidParameterError, NotAtOptimumError, ShapeError
from robustoc.hessian import (HessianMatrix, build_hessian, eigen_spectrum, quadratic_form, rank_one_summary)
from robustoc.pulse import TimeGrid


class QuadraticToy:
    """``J'(u) = 1/2 sum_n c_n (u_n - u0_n)**2`` over the interior samples."""

    def __init__(self, c, u0):
        self.c = np.asarray(c, dtype=float)
        self.u0 = np.asarray(u0, dtype=float)
        self.grid = TimeGrid(1.0, self.u0.size)

    def cost_batch(self, u):
        d = np.atleast_2d(u)[:, 1:-1] - self.u0[1:-1]
        return 0.5 * np.sum(self.c * d * d, axis=1)

    def gradient(self, u):
        return self.c * (np.asarray(u)[1:-1] - self.u0[1:-1])

    def hessian(self, u):
        return np.diag(self.c)


@pytest.fixture
def toy():
    rng = np.random.default_rng(5)
    return QuadraticToy(rng.uniform(0.5, 3.0, 8), rng.normal(0, 2, 10))


def test_fd_backend_recovers_quadratic(toy):
    H = build_hessian(toy, toy.u0, "finite_difference")
    np.testing.assert_allclose(H.entries, np.diag(toy.c), atol=1e-8)
    assert H.backend == "finite_difference"
    assert build_hessian(toy, toy.u0, "fd").backend == "finite_difference"


def test_bfgs_backend_approximates_quadratic(toy):
    H = build_hessian(toy, toy.u0, "bfgs")
    np.testing.assert_allclose(H.entries, np.diag(toy.c), atol=0.05 * toy.c.max())


def test_precondition_and_backend_checks(toy):
    off = toy.u0 + 0.1
    with pytest.raises(NotAtOptimumError):
        build_hessian(toy, off)
    assert build_hessian(toy, off, check_optimum=False).size == 8
    with pytest.raises(InvalidParameterError):
        build_hessian(toy, toy.u0, "newton")


def test_indefinite_hessian_carries_warning():
    toy = QuadraticToy([1.0, -0.5, 2.0], np.zeros(5))
    H = build_hessian(toy, toy.u0)
    assert H.warnings and "semidefinite" in H.warnings[0]


def test_serialization(toy):
    H = build_hessian(toy, toy.u0)
    back = HessianMatrix.from_dict(json.loads(H.to_json()))
    assert np.array_equal(back.entries, H.entries) and back.N == H.N and back.backend == H.backend
    lines = H.to_csv().splitlines()
    assert lines[0].startswith("# N=10")
    assert len(lines) == 1 + 8
    with pytest.raises(ShapeError):
        HessianMatrix(np.eye(3), "gateaux", 10, 0.1)


def test_quadratic_form_examples():
    assert quadratic_form(np.eye(2), np.zeros(2)) == 0.0
    assert quadratic_form(np.eye(2), [3.0, 4.0]) == 25.0
    with pytest.raises(ShapeError):
        quadratic_form(np.eye(2), [1.0, 2.0, 3.0])


def test_spectrum_examples():
    s = eigen_spectrum(np.diag([2.0, 1.0, 0.0]), 1e-6)
    assert s.M == 2 and np.array_equal(s.nonzero, [2.0, 1.0])
    v = np.array([1.0, 2.0, 1.0, 1.0])  # |v|^2 = 7
    s = eigen_spectrum(np.outer(v, v))
    assert s.M == 1 and s.nonzero[0] == pytest.approx(7.0)
    assert eigen_spectrum(np.zeros((3, 3))).M == 0


def test_rank_one_summary_examples():
    n, h = 6, 0.25
    r = rank_one_summary(np.full((n, n), h))
    assert r.lambda_rank_one == pytest.approx(n * h) and r.lambda_max == pytest.approx(n * h)
    assert r.valid
    r = rank_one_summary(np.eye(n))
    assert r.mean_entry == pytest.approx(1 / n) and r.lambda_rank_one == pytest.approx(1.0)
    assert r.M == n and not r.valid


@settings(max_examples=40)
@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1), st.floats(-5, 5))
def test_quadratic_form_is_homogeneous(n, seed, s):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A = A @ A.T
    du = rng.normal(size=n)
    q = quadratic_form(A, du)
    assert q >= 0
    assert quadratic_form(A, s * du) == pytest.approx(s * s * q, rel=1e-10, abs=1e-12)


# worked models

def test_lz_backends_agree(lz64, lz64_hessian):
    problem, pulse = lz64
    H = lz64_hessian
    assert H.raw_asymmetry <= 1e-8 and H.asymmetry() == 0.0
    fd = build_hessian(problem, pulse, "finite_difference")
    scale = np.abs(H.entries).max()
    assert np.abs(fd.entries - H.entries).max() <= 1e-4 * scale
    s = eigen_spectrum(H)
    assert s.eigenvalues[-1] >= 0 and np.linalg.eigvalsh(H.entries)[0] >= -1e-8 * s.eigenvalues[0]
    assert s.M == 3


def test_lz_bfgs_is_close(lz64, lz64_hessian):
    problem, pulse = lz64
    B = build_hessian(problem, pulse, "bfgs")
    err = np.linalg.norm(B.entries - lz64_hessian.entries) / np.linalg.norm(lz64_hessian.entries)
    assert err < 0.1


def test_harmonic_spectrum(harmonic_hessian):
    s = eigen_spectrum(harmonic_hessian)
    assert s.M <= 2
    r = rank_one_summary(harmonic_hessian)
    assert np.isfinite(r.discrepancy) and r.M == s.M
