"""The two worked systems: transport in a moving harmonic trap, and the Landau-Zener sweep.

Harmonic oscillator units throughout. The trap Hamiltonian is
``H(u) = (p**2 + (x - u)**2) / 2``; starting from the trap ground state the
wave packet stays a coherent state whose centre follows the classical driven
oscillator, so the transport fidelity only depends on the terminal
phase-space point. That fast path is cross-checked against a split-step
Fourier propagation on a spatial grid and against a truncated Fock-space
model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

from . import kernels
from .dynamics import OVERLAP, PHASE_SENSITIVE, HamiltonianModel, QuantumProblem
from .errors import InvalidParameterError, NoOptimumFoundError, ShapeError
from .pulse import ControlPulse, TimeGrid, time_derivative

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

RK4_MAX_STEP = 0.01


# ---------------------------------------------------------------------------
# harmonic transport


@dataclass(frozen=True)
class HarmonicTransportModel:
    """Transport of the trap ground state over ``dx`` oscillator lengths.

    ``grid_points`` and ``x_range`` only configure the spatial-grid oracle;
    ``x_range`` defaults to ``|dx| + 10``. ``fock_dim`` sets the truncation of
    the Fock-space Hamiltonian used by the generic state-vector machinery.
    """

    dx: float = 5.0
    grid_points: int = 512
    x_range: Optional[float] = None
    fock_dim: int = 72

    def __post_init__(self):
        if not np.isfinite(self.dx):
            raise InvalidParameterError("dx must be finite")
        if self.x_range is None:
            object.__setattr__(self, "x_range", abs(self.dx) + 10.0)
        if self.grid_points < 64:
            raise InvalidParameterError("grid oracle needs at least 64 points")


class CoherentPoint(NamedTuple):
    x_c: float
    p_c: float


def _substeps(dt):
    return max(1, math.ceil(dt / RK4_MAX_STEP))


def harmonic_classical_evolve(pulse: ControlPulse):
    """Centre ``(x_c, p_c)`` of the driven coherent state at every sample.

    Integrates ``x' = p, p' = -(x - u)`` from rest at the origin with RK4, the
    pulse linearly interpolated between samples. Each pulse interval is split
    into equal sub-steps no longer than ``RK4_MAX_STEP`` so that the
    integration error stays far below the tolerances used downstream.
    """
    x, p = kernels.rk4_oscillator(pulse.values, pulse.grid.dt, _substeps(pulse.grid.dt))
    return x[0], p[0]


def harmonic_terminal_point(pulse: ControlPulse) -> CoherentPoint:
    x, p = harmonic_classical_evolve(pulse)
    return CoherentPoint(float(x[-1]), float(p[-1]))


def _fidelity_from_point(x, p, dx):
    return np.exp(-0.5 * ((x - dx) ** 2 + p ** 2))


def harmonic_fidelity(pulse: ControlPulse, dx: float) -> float:
    """Overlap fidelity of the transported state with the displaced ground state."""
    x, p = harmonic_terminal_point(pulse)
    return float(_fidelity_from_point(x, p, dx))


def _quintic(s):
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def reference_pulse_family(grid: TimeGrid, dx: float, beta1: float, beta2: float) -> ControlPulse:
    """``dx*s(t/T) + beta1*b1(t) + beta2*b2(t)`` with a quintic ramp ``s``.

    ``b1 = sin(pi t/T)**2`` and ``b2 = sin(2 pi t/T) sin(pi t/T)`` vanish with
    their first derivative at both ends, so the whole family has pinned
    endpoint values and zero endpoint slope.
    """
    tau = grid.times / grid.T
    b1 = np.sin(np.pi * tau) ** 2
    b2 = np.sin(2.0 * np.pi * tau) * np.sin(np.pi * tau)
    v = dx * _quintic(tau) + beta1 * b1 + beta2 * b2
    v[0], v[-1] = 0.0, dx
    return ControlPulse(grid, v)


def harmonic_reference_optimal_pulse(dx: float, T: float, N: int, max_iter: int = 100) -> ControlPulse:
    """A transport pulse with unit fidelity, found by root finding on the terminal point.

    Newton iteration on ``(x_c(T) - dx, p_c(T))`` over the two amplitudes of
    :func:`reference_pulse_family`; the terminal point is affine in the
    amplitudes, so this converges in one or two steps when the 2x2 Jacobian is
    regular.
    """
    grid = TimeGrid(T, N)
    if dx == 0.0:
        return ControlPulse(grid, np.zeros(N))

    def residual(beta):
        x, p = harmonic_terminal_point(reference_pulse_family(grid, dx, *beta))
        return np.array([x - dx, p])

    beta = np.zeros(2)
    r = residual(beta)
    for _ in range(max_iter):
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1.0
            J[:, j] = residual(beta + e) - r
        try:
            beta = beta - np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise NoOptimumFoundError(f"singular terminal Jacobian for T={T}") from exc
        r = residual(beta)
        if np.hypot(*r) < 1e-12 * max(1.0, abs(dx)):
            return reference_pulse_family(grid, dx, *beta)
    raise NoOptimumFoundError(f"no transport optimum after {max_iter} iterations (residual {r})")


def optimal_family_shift(pulse_opt: ControlPulse, alpha: float) -> ControlPulse:
    """``u + alpha * du/dt``; endpoints move unless the slope vanishes there."""
    return ControlPulse(pulse_opt.grid, pulse_opt.values + alpha * time_derivative(pulse_opt))


@dataclass(frozen=True)
class HarmonicTransportProblem:
    """Reduced cost ``1 - F`` of the transport problem through the coherent-state path.

    The terminal point is linear in the pulse, ``(x_T, p_T) = G u``, so the
    first and second variations of the cost follow in closed form from the
    Jacobian ``G`` of the discrete classical map.
    """

    grid: TimeGrid
    dx: float = 5.0
    objective: str = OVERLAP

    def _values(self, u):
        v = u.values if isinstance(u, ControlPulse) else np.asarray(u, dtype=np.float64)
        if v.shape[-1] != self.grid.N:
            raise ShapeError(f"pulse length {v.shape[-1]} does not match grid N={self.grid.N}")
        return v

    def pulse(self, values) -> ControlPulse:
        return ControlPulse(self.grid, values)

    def terminal_points(self, u):
        v = np.atleast_2d(self._values(u))
        x, p = kernels.rk4_oscillator(v, self.grid.dt, _substeps(self.grid.dt))
        return x[:, -1], p[:, -1]

    def cost_batch(self, u) -> np.ndarray:
        x, p = self.terminal_points(u)
        return -np.expm1(-0.5 * ((x - self.dx) ** 2 + p ** 2))

    def cost(self, u) -> float:
        return float(self.cost_batch(u)[0])

    def jacobian(self) -> np.ndarray:
        """``(2, N-2)`` derivative of the terminal point with respect to interior samples."""
        basis = np.eye(self.grid.N)[1:-1]
        x, p = kernels.rk4_oscillator(basis, self.grid.dt, _substeps(self.grid.dt))
        return np.vstack([x[:, -1], p[:, -1]])

    def _residual(self, v):
        x, p = self.terminal_points(v)
        return np.array([x[0] - self.dx, p[0]])

    def gradient(self, u) -> np.ndarray:
        r = self._residual(self._values(u))
        G = self.jacobian()
        return math.exp(-0.5 * r @ r) * (G.T @ r)

    def kernel(self, u) -> np.ndarray:
        return self.gradient(u) / self.grid.dt

    def hessian(self, u) -> np.ndarray:
        r = self._residual(self._values(u))
        G = self.jacobian()
        Gr = G.T @ r
        return math.exp(-0.5 * r @ r) * (G.T @ G - np.outer(Gr, Gr))

    def second_variation(self, u, du) -> float:
        du = np.asarray(du, dtype=np.float64)[1:-1]
        return float(du @ self.hessian(u) @ du)


# ---------------------------------------------------------------------------
# Fock-space version of the trap, for the generic state-vector machinery


def harmonic_fock_hamiltonian(fock_dim: int) -> HamiltonianModel:
    """``(n + 1/2) - u*x + u**2/2`` with ``x = (a + a^dagger)/sqrt(2)``, truncated."""
    n = np.arange(fock_dim)
    a = np.diag(np.sqrt(n[1:]), 1)
    x = (a + a.T) / math.sqrt(2.0)
    return HamiltonianModel(np.diag(n + 0.5), -x, 0.5 * np.eye(fock_dim))


def coherent_state(x0: float, p0: float, fock_dim: int) -> np.ndarray:
    """Fock amplitudes of the ground state displaced to ``(x0, p0)``."""
    alpha = (x0 + 1j * p0) / math.sqrt(2.0)
    n = np.arange(fock_dim)
    logmag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha) if alpha != 0 else 1.0) - 0.5 * gammaln(n + 1)
    if alpha == 0:
        psi = np.zeros(fock_dim, dtype=np.complex128)
        psi[0] = 1.0
        return psi
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def harmonic_quantum_problem(model: HarmonicTransportModel, grid: TimeGrid) -> QuantumProblem:
    """Overlap-infidelity transport problem in a truncated Fock basis."""
    d = model.fock_dim
    psi0 = np.zeros(d, dtype=np.complex128)
    psi0[0] = 1.0
    return QuantumProblem(harmonic_fock_hamiltonian(d), grid, psi0, coherent_state(model.dx, 0.0, d), OVERLAP)


def fock_truncation_weight(states) -> float:
    """Largest population found in the top two Fock levels along a trajectory."""
    s = np.atleast_2d(states)
    return float(np.max(np.abs(s[:, -2:]) ** 2))


# ---------------------------------------------------------------------------
# spatial-grid oracle


_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = -(2.0 ** (1.0 / 3.0)) * _YOSHIDA_W1


class GridResult(NamedTuple):
    fidelity: float
    x_mean: float
    p_mean: float
    boundary_density: float


def split_step_oracle(pulse: ControlPulse, model: HarmonicTransportModel, substeps: int = 8) -> GridResult:
    """Propagate the ground-state wave packet on a spatial grid.

    Fourth-order (Yoshida) composition of Strang split-step Fourier steps,
    with ``substeps`` sub-intervals per pulse interval and the pulse linearly
    interpolated in time. Raises if the packet density at the box edge exceeds
    ``1e-12`` at the final time.
    """
    M = model.grid_points
    L = model.x_range
    x = np.linspace(-L, L, M, endpoint=False)
    hx = x[1] - x[0]
    k = 2.0 * np.pi * np.fft.fftfreq(M, hx)
    psi = np.pi ** -0.25 * np.exp(-0.5 * x ** 2) + 0j
    u = pulse.values
    dt = pulse.grid.dt
    h = dt / substeps
    weights = (_YOSHIDA_W1, _YOSHIDA_W0, _YOSHIDA_W1)
    kin = {w: np.exp(-0.25j * w * h * k ** 2) for w in set(weights)}
    for n in range(pulse.grid.N - 1):
        slope = (u[n + 1] - u[n]) / dt
        for m in range(substeps):
            tau = m * h
            for w in weights:
                ut = u[n] + slope * (tau + 0.5 * w * h)
                psi = np.fft.ifft(kin[w] * np.fft.fft(psi))
                psi = psi * np.exp(-0.5j * w * h * (x - ut) ** 2)
                psi = np.fft.ifft(kin[w] * np.fft.fft(psi))
                tau += w * h
    dens = np.abs(psi) ** 2
    edge = max(dens[: M // 32].max(), dens[-M // 32:].max())
    if edge > 1e-12:
        raise InvalidParameterError(f"x_range too small: boundary density {edge:.2e}")
    target = np.pi ** -0.25 * np.exp(-0.5 * (x - model.dx) ** 2)
    fid = abs(np.sum(target * psi) * hx) ** 2
    xm = float(np.sum(x * dens) * hx)
    pk = np.abs(np.fft.fft(psi)) ** 2
    pm = float(np.sum(k * pk) / np.sum(pk))
    return GridResult(float(fid), xm, pm, float(edge))


# ---------------------------------------------------------------------------
# Landau-Zener


@dataclass(frozen=True)
class LandauZenerModel:
    """``H(u) = u*sigma_z + omega*sigma_x`` swept from ``u_start < 0`` to ``u_end > 0``."""

    omega: float = 1.0
    u_start: float = -10.0
    u_end: float = 10.0

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidParameterError("coupling omega must be positive")
        if not self.u_start < 0 < self.u_end:
            raise InvalidParameterError("sweep must go from u_start < 0 to u_end > 0")
        if min(-self.u_start, self.u_end) < 5.0 * self.omega:
            warnings.warn("sweep endpoints are not far from the avoided crossing; "
                          "boundary ground states are poorly polarized", stacklevel=2)

    @property
    def hamiltonian(self) -> HamiltonianModel:
        return HamiltonianModel(self.omega * SIGMA_X, SIGMA_Z, np.zeros((2, 2)))


def lz_ground_state(u: float, omega: float) -> np.ndarray:
    """Ground state of ``u*sigma_z + omega*sigma_x``, first component real and positive."""
    r = math.hypot(u, omega)
    # u + r without cancellation for u < 0
    s = u + r if u >= 0 else omega ** 2 / (r - u)
    v = np.array([omega, -s], dtype=np.complex128)
    return v / np.linalg.norm(v)


def lz_boundary_states(model: LandauZenerModel):
    return lz_ground_state(model.u_start, model.omega), lz_ground_state(model.u_end, model.omega)


def lz_problem(model: LandauZenerModel, grid: TimeGrid, objective: str = PHASE_SENSITIVE) -> QuantumProblem:
    psi0, psig = lz_boundary_states(model)
    return QuantumProblem(model.hamiltonian, grid, psi0, psig, objective)


def lz_linear_ramp(model: LandauZenerModel, grid: TimeGrid) -> ControlPulse:
    return ControlPulse(grid, np.linspace(model.u_start, model.u_end, grid.N))
