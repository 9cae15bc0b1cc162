"""State propagation, first/second variations of the state, and infidelity functionals.

Time stepping is midpoint-exponential: the step ``n -> n+1`` applies
``exp(-i H(ubar_n) dt)`` with ``ubar_n = (u_n + u_{n+1}) / 2``. The variational
equations are integrated as the exact first and second derivatives of that
discrete map, i.e. the inhomogeneous terms are integrated exactly over each
step with the Hamiltonian frozen at the midpoint and ``du`` linearly
interpolated to the midpoint. This keeps the variations consistent with finite
differences of :func:`propagate` down to round-off.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidDistortionError, InvalidInputError, InvalidParameterError, ShapeError
from .pulse import ControlPulse, TimeGrid

PHASE_SENSITIVE = "phase_sensitive"
OVERLAP = "overlap"
OBJECTIVES = (PHASE_SENSITIVE, OVERLAP)


@dataclass(frozen=True)
class HamiltonianModel:
    """``H(u) = H0 + u*H1 + u**2*H2`` on a ``d``-dimensional Hilbert space."""

    H0: np.ndarray = field(repr=False)
    H1: np.ndarray = field(repr=False)
    H2: np.ndarray = field(repr=False)

    def __post_init__(self):
        mats = [np.array(m, dtype=np.complex128) for m in (self.H0, self.H1, self.H2)]
        d = mats[0].shape[0]
        for m in mats:
            if m.shape != (d, d):
                raise ShapeError("Hamiltonian terms must be square and of equal size")
            if not np.allclose(m, m.conj().T, atol=1e-12):
                raise InvalidInputError("Hamiltonian terms must be Hermitian")
            m.setflags(write=False)
        if d < 2:
            raise ShapeError("Hilbert space dimension must be at least 2")
        object.__setattr__(self, "H0", mats[0])
        object.__setattr__(self, "H1", mats[1])
        object.__setattr__(self, "H2", mats[2])

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    def matrix(self, u: float) -> np.ndarray:
        return self.H0 + u * self.H1 + u * u * self.H2

    def apply_H(self, u, psi):
        return self.matrix(u) @ psi

    def apply_dH(self, u, psi):
        """``dH/du`` applied to ``psi``."""
        return (self.H1 + 2.0 * u * self.H2) @ psi

    def apply_d2H(self, psi):
        """Coefficient of ``du**2`` in the second variation of ``H``."""
        return (2.0 * self.H2) @ psi


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray = field(repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.states.shape[1]
        w.writerow(["t"] + [f"{p}_{j}" for j in range(d) for p in ("re", "im")])
        for t, s in zip(self.grid.times, self.states):
            row = [repr(float(t))]
            for z in s:
                row += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class GateauxSolution:
    delta_psi: np.ndarray = field(repr=False)
    delta2_psi: np.ndarray = field(repr=False)


def normalized(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    return psi / np.linalg.norm(psi)


def midpoints(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return 0.5 * (v[..., :-1] + v[..., 1:])


# ---------------------------------------------------------------------------
# per-step unitaries and their derivatives


def _phi1(theta):
    """``(exp(i*theta) - 1) / (i*theta)``, elementwise and stable at 0."""
    theta = np.asarray(theta, dtype=np.float64)
    half = 0.5 * theta
    return np.exp(1j * half) * np.sinc(half / np.pi)


def _dd1(ta, tb):
    """First divided difference of exp at ``i*ta``, ``i*tb``."""
    return np.exp(1j * tb) * _phi1(ta - tb)


def _dd2(ta, tb, tc, tol=1e-5):
    """Second divided difference of exp at ``i*ta``, ``i*tb``, ``i*tc`` (symmetric)."""
    ta, tb, tc = np.broadcast_arrays(ta, tb, tc)
    # pick the most separated pair as (x, z), the remaining point as y
    dab, dac, dbc = np.abs(ta - tb), np.abs(ta - tc), np.abs(tb - tc)
    use_ac = (dac >= dab) & (dac >= dbc)
    use_ab = ~use_ac & (dab >= dbc)
    x = np.where(use_ac, ta, np.where(use_ab, ta, tb))
    z = np.where(use_ac, tc, np.where(use_ab, tb, tc))
    y = np.where(use_ac, tb, np.where(use_ab, tc, ta))
    sep = np.abs(x - z)
    safe = np.where(sep > tol, x - z, 1.0)
    far = (_dd1(x, y) - _dd1(y, z)) / (1j * safe)
    mean = (ta + tb + tc) / 3.0
    near = 0.5 * np.exp(1j * mean)
    return np.where(sep > tol, far, near)


def step_factors(model: HamiltonianModel, ubar, dt, order: int = 1):
    """Per-step ``U``, ``dU/dubar`` and (``order=2``) ``d2U/dubar2``, stacked over steps."""
    ubar = np.asarray(ubar, dtype=np.float64)
    H = model.H0 + ubar[:, None, None] * model.H1 + (ubar ** 2)[:, None, None] * model.H2
    E, V = np.linalg.eigh(H)
    Vh = np.conj(np.swapaxes(V, -1, -2))
    theta = -dt * E
    U = np.einsum("sij,sj,sjk->sik", V, np.exp(1j * theta), Vh)
    dH = model.H1 + 2.0 * ubar[:, None, None] * model.H2
    X = (-1j * dt) * (Vh @ dH @ V)
    Phi = _dd1(theta[:, :, None], theta[:, None, :])
    D = V @ (X * Phi) @ Vh
    if order == 1:
        return U, D
    Y = (-1j * dt) * (Vh @ (2.0 * model.H2) @ V)
    D2 = np.empty_like(D)
    for s in range(ubar.size):
        t = theta[s]
        f3 = _dd2(t[:, None, None], t[None, :, None], t[None, None, :])
        inner = 2.0 * np.einsum("jm,mk,jmk->jk", X[s], X[s], f3) + Y[s] * Phi[s]
        D2[s] = V[s] @ inner @ Vh[s]
    return U, D, D2


# ---------------------------------------------------------------------------
# propagation and variations


def _check_state(model, psi, name="initial state"):
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (model.dim,):
        raise ShapeError(f"{name} has shape {psi.shape}, model dimension is {model.dim}")
    return psi


def _states_from_unitaries(U, psi0):
    states = np.empty((U.shape[0] + 1, psi0.size), dtype=np.complex128)
    states[0] = psi0
    for n in range(U.shape[0]):
        states[n + 1] = U[n] @ states[n]
    return states


def propagate(model: HamiltonianModel, pulse: ControlPulse, psi0) -> Trajectory:
    psi0 = _check_state(model, psi0)
    if not np.all(np.isfinite(pulse.values)):
        raise InvalidInputError("pulse contains non-finite values")
    U, _ = step_factors(model, midpoints(pulse.values), pulse.grid.dt)
    return Trajectory(pulse.grid, _states_from_unitaries(U, psi0))


def solve_gateaux(model: HamiltonianModel, pulse_opt: ControlPulse, traj_opt: Trajectory, du) -> GateauxSolution:
    """First and second variations of the state trajectory along ``du``.

    ``psi[u + s*du] = psi + s*delta_psi + s**2/2 * delta2_psi + O(s**3)``.
    """
    du = np.asarray(du, dtype=np.float64)
    N = pulse_opt.grid.N
    if du.shape != (N,):
        raise ShapeError(f"distortion has shape {du.shape}, expected ({N},)")
    if du[0] != 0.0 or du[-1] != 0.0:
        raise InvalidDistortionError("distortions must vanish at both endpoints")
    if traj_opt.states.shape[0] != N:
        raise ShapeError("trajectory does not match the pulse grid")
    U, D, D2 = step_factors(model, midpoints(pulse_opt.values), pulse_opt.grid.dt, order=2)
    dub = midpoints(du)
    psi = traj_opt.states
    d1 = np.zeros_like(psi)
    d2 = np.zeros_like(psi)
    for n in range(N - 1):
        d1[n + 1] = U[n] @ d1[n] + dub[n] * (D[n] @ psi[n])
        d2[n + 1] = U[n] @ d2[n] + 2.0 * dub[n] * (D[n] @ d1[n]) + dub[n] ** 2 * (D2[n] @ psi[n])
    return GateauxSolution(d1, d2)


# ---------------------------------------------------------------------------
# infidelities


def _check_pair(psiT, psig):
    psiT = np.asarray(psiT, dtype=np.complex128)
    psig = np.asarray(psig, dtype=np.complex128)
    if psiT.shape != psig.shape:
        raise ShapeError(f"state dimensions differ: {psiT.shape} vs {psig.shape}")
    return psiT, psig


def infidelity_terminal(psiT, psig) -> float:
    """``1 - |<psig|psiT>|**2``, clamped at zero."""
    psiT, psig = _check_pair(psiT, psig)
    return max(0.0, 1.0 - abs(np.vdot(psig, psiT)) ** 2)


def infidelity_phase_sensitive(psiT, psig) -> float:
    """``1 - Re<psig|psiT>``, clamped at zero."""
    psiT, psig = _check_pair(psiT, psig)
    return max(0.0, 1.0 - np.vdot(psig, psiT).real)


def infidelity_integral(model: HamiltonianModel, pulse: ControlPulse, traj: Trajectory, psig) -> float:
    """Overlap infidelity written as initial infidelity plus the integrated fidelity rate.

    ``1 - F(psi_0) + 2 * int_0^T Im[<g|psi_t><psi_t|H(u_t)|g>] dt`` with the
    trapezoid rule on the pulse grid.
    """
    psig = _check_state(model, psig, "goal state")
    if traj.states.shape[1] != model.dim:
        raise ShapeError("trajectory dimension does not match the model")
    states = traj.states
    Hg = np.stack([model.apply_H(u, psig) for u in pulse.values])
    rate = np.imag(states @ psig.conj() * np.einsum("nj,nj->n", states.conj(), Hg))
    f0 = abs(np.vdot(psig, states[0])) ** 2
    return 1.0 - f0 + 2.0 * np.trapezoid(rate, dx=pulse.grid.dt)


# ---------------------------------------------------------------------------
# reduced cost for a state-transfer problem


def _cost_from_states(psiT, psig, objective):
    """Reduced cost of a batch of terminal states, free of cancellation near zero.

    For unit vectors ``1 - Re<g|psi> = |psi - g|**2 / 2`` and
    ``1 - |<g|psi>|**2 = |psi - <g|psi> g|**2``; the right-hand sides stay
    accurate when the cost is far below machine epsilon.
    """
    psiT = psiT / np.linalg.norm(psiT, axis=-1, keepdims=True)
    if objective == PHASE_SENSITIVE:
        return 0.5 * np.sum(np.abs(psiT - psig) ** 2, axis=-1)
    o = psiT @ psig.conj()
    return np.sum(np.abs(psiT - o[:, None] * psig) ** 2, axis=-1)


@dataclass(frozen=True)
class QuantumProblem:
    """Reduced cost ``J'[u]`` of steering ``psi0`` to ``psig`` under ``model``."""

    model: HamiltonianModel
    grid: TimeGrid
    psi0: np.ndarray = field(repr=False)
    psig: np.ndarray = field(repr=False)
    objective: str = PHASE_SENSITIVE

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvalidParameterError(f"objective must be one of {OBJECTIVES}")
        object.__setattr__(self, "psi0", _check_state(self.model, self.psi0))
        object.__setattr__(self, "psig", _check_state(self.model, self.psig, "goal state"))

    def _values(self, u):
        v = u.values if isinstance(u, ControlPulse) else np.asarray(u, dtype=np.float64)
        if v.shape[-1] != self.grid.N:
            raise ShapeError(f"pulse length {v.shape[-1]} does not match grid N={self.grid.N}")
        return v

    def pulse(self, values) -> ControlPulse:
        return ControlPulse(self.grid, values)

    def trajectory(self, u) -> Trajectory:
        return propagate(self.model, self.pulse(self._values(u)), self.psi0)

    def final_states(self, u) -> np.ndarray:
        v = np.atleast_2d(self._values(u))
        m = self.model
        return kernels.propagate_terminal(m.H0, m.H1, m.H2, midpoints(v), self.grid.dt, self.psi0)

    def cost_batch(self, u) -> np.ndarray:
        return _cost_from_states(self.final_states(u), self.psig, self.objective)

    def cost(self, u) -> float:
        return float(self.cost_batch(u)[0])

    def terminal_costate(self, psiT) -> np.ndarray:
        if self.objective == PHASE_SENSITIVE:
            return self.psig.copy()
        return np.vdot(self.psig, psiT) * self.psig

    def _midpoint_gradient(self, v):
        U, D = step_factors(self.model, midpoints(v), self.grid.dt)
        psi = _states_from_unitaries(U, self.psi0)
        chi = self.psig
        do = np.empty(U.shape[0], dtype=np.complex128)
        for m in range(U.shape[0] - 1, -1, -1):
            do[m] = np.vdot(chi, D[m] @ psi[m])
            chi = U[m].conj().T @ chi
        o = np.vdot(self.psig, psi[-1])
        if self.objective == PHASE_SENSITIVE:
            return -do.real
        return -2.0 * (np.conj(o) * do).real

    def gradient(self, u) -> np.ndarray:
        """Exact derivative of the discretized cost with respect to the interior samples."""
        g = self._midpoint_gradient(self._values(u))
        return 0.5 * (g[:-1] + g[1:])

    def kernel(self, u) -> np.ndarray:
        """First-variation kernel ``dJ'/du(t_n)`` at the interior samples (gradient / dt)."""
        return self.gradient(u) / self.grid.dt

    def hessian(self, u) -> np.ndarray:
        """Exact Hessian of the discretized cost over the interior samples.

        Assembled from the terminal first variations of every step and the
        second-variation inhomogeneity, using the interaction picture to turn
        the cross terms into inner products.
        """
        v = self._values(u)
        U, D, D2 = step_factors(self.model, midpoints(v), self.grid.dt, order=2)
        S = U.shape[0]
        d = self.model.dim
        psi = _states_from_unitaries(U, self.psi0)
        chi = np.empty_like(psi)
        chi[-1] = self.psig
        for m in range(S - 1, -1, -1):
            chi[m] = U[m].conj().T @ chi[m + 1]
        # cumulative propagators S_m = U_{m-1} ... U_0
        cum = np.empty((S + 1, d, d), dtype=np.complex128)
        cum[0] = np.eye(d)
        for m in range(S):
            cum[m + 1] = U[m] @ cum[m]
        Dpsi = np.einsum("mij,mj->mi", D, psi[:-1])
        alpha = np.einsum("mji,mj->mi", cum[1:].conj(), Dpsi)
        Dchi = np.einsum("mji,mj->mi", D.conj(), chi[1:])
        beta = np.einsum("mji,mj->mi", cum[:-1].conj(), Dchi)
        cross = beta.conj() @ alpha.T  # cross[l, m] = <beta_l|alpha_m>
        d2o = np.tril(cross, -1)
        d2o = d2o + d2o.T
        diag = np.einsum("mi,mij,mj->m", chi[1:].conj(), D2, psi[:-1])
        d2o[np.diag_indices(S)] = diag
        do = np.einsum("mi,mi->m", chi[1:].conj(), Dpsi)
        if self.objective == PHASE_SENSITIVE:
            Hb = -d2o.real
        else:
            o = np.vdot(self.psig, psi[-1])
            Hb = -2.0 * (np.outer(do.conj(), do) + np.conj(o) * d2o).real
        A = np.zeros((S, self.grid.N))
        idx = np.arange(S)
        A[idx, idx] = 0.5
        A[idx, idx + 1] = 0.5
        A = A[:, 1:-1]
        return A.T @ Hb @ A

    def second_variation(self, u, du) -> float:
        """``d^2/ds^2 J'[u + s*du]`` at ``s = 0`` from the variational equations."""
        pulse = self.pulse(self._values(u))
        traj = propagate(self.model, pulse, self.psi0)
        sol = solve_gateaux(self.model, pulse, traj, du)
        g = self.psig
        if self.objective == PHASE_SENSITIVE:
            return float(-np.vdot(g, sol.delta2_psi[-1]).real)
        o = np.vdot(g, traj.final)
        o1 = np.vdot(g, sol.delta_psi[-1])
        o2 = np.vdot(g, sol.delta2_psi[-1])
        return float(-2.0 * (abs(o1) ** 2 + (np.conj(o) * o2).real))
