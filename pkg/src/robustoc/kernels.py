"""Hot numeric loops.

Every kernel has a numba-compiled variant and a pure-numpy variant. The public
names at the bottom of the module dispatch to one or the other depending on
:data:`robustoc._jit.USE_NUMBA` (controlled by the ``ROBUSTOC_NUMBA`` env var).
Both variants stay importable under their private names so they can be
cross-checked and benchmarked against each other.

Hamiltonians enter the kernels in polynomial form ``H(u) = H0 + u*H1 + u**2*H2``
with ``H0, H1, H2`` Hermitian ``(d, d)`` complex arrays.
"""

import numpy as np

from ._jit import USE_NUMBA, njit

_CHUNK = 1024


# --------------------------------------------------------------------------
# single step: unitary and its derivative in the midpoint control


def _step(H0, H1, H2, ub, dt):
    """Return ``U = exp(-i H(ub) dt)`` and its derivative with respect to ``ub``."""
    H = H0 + ub * H1 + (ub * ub) * H2
    E, V = np.linalg.eigh(H)
    d = E.shape[0]
    ph = np.exp(-1j * dt * E)
    Vh = V.conj().T
    U = (V * ph) @ Vh
    B = Vh @ ((H1 + (2.0 * ub) * H2) @ V)
    W = np.empty((d, d), dtype=np.complex128)
    for j in range(d):
        for k in range(d):
            th = -dt * (E[j] - E[k])
            if abs(th) < 1e-8:
                phi = 1.0 + 0.5j * th
            else:
                phi = np.exp(0.5j * th) * (np.sin(0.5 * th) / (0.5 * th))
            W[j, k] = -1j * dt * B[j, k] * ph[k] * phi
    D = V @ W @ Vh
    return U, D


_step_nb = njit(_step)


# --------------------------------------------------------------------------
# terminal-state propagation for a batch of pulses


def _propagate_terminal_numpy(H0, H1, H2, ubar, dt, psi0):
    ubar = np.atleast_2d(np.asarray(ubar, dtype=np.float64))
    B, S = ubar.shape
    d = psi0.shape[0]
    out = np.empty((B, d), dtype=np.complex128)
    for lo in range(0, B, _CHUNK):
        ub = ubar[lo:lo + _CHUNK]
        H = H0 + ub[..., None, None] * H1 + (ub * ub)[..., None, None] * H2
        E, V = np.linalg.eigh(H)
        U = np.einsum("...ij,...j,...kj->...ik", V, np.exp(-1j * dt * E), V.conj())
        psi = np.broadcast_to(psi0, (ub.shape[0], d)).astype(np.complex128)
        for s in range(S):
            psi = np.einsum("bij,bj->bi", U[:, s], psi)
        out[lo:lo + _CHUNK] = psi
    return out


@njit
def _propagate_terminal_nb(H0, H1, H2, ubar, dt, psi0):
    B, S = ubar.shape
    d = psi0.shape[0]
    out = np.empty((B, d), dtype=np.complex128)
    for b in range(B):
        psi = psi0.copy()
        for s in range(S):
            ub = ubar[b, s]
            H = H0 + ub * H1 + (ub * ub) * H2
            E, V = np.linalg.eigh(H)
            c = V.conj().T @ psi
            c = c * np.exp(-1j * dt * E)
            psi = V @ c
        out[b] = psi
    return out


# --------------------------------------------------------------------------
# driven harmonic oscillator, x' = p, p' = -(x - u), RK4 on a sub-stepped grid


def _rk4_oscillator_numpy(u, dt, substeps):
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    B, N = u.shape
    h = dt / substeps
    xs = np.zeros((B, N))
    ps = np.zeros((B, N))
    x = np.zeros(B)
    p = np.zeros(B)
    for n in range(N - 1):
        ua = u[:, n]
        slope = (u[:, n + 1] - ua) / dt
        for m in range(substeps):
            t0 = m * h
            u0 = ua + slope * t0
            um = ua + slope * (t0 + 0.5 * h)
            u1 = ua + slope * (t0 + h)
            k1x, k1p = p, u0 - x
            k2x, k2p = p + 0.5 * h * k1p, um - (x + 0.5 * h * k1x)
            k3x, k3p = p + 0.5 * h * k2p, um - (x + 0.5 * h * k2x)
            k4x, k4p = p + h * k3p, u1 - (x + h * k3x)
            x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        xs[:, n + 1] = x
        ps[:, n + 1] = p
    return xs, ps


@njit
def _rk4_oscillator_nb(u, dt, substeps):
    B, N = u.shape
    h = dt / substeps
    xs = np.zeros((B, N))
    ps = np.zeros((B, N))
    for b in range(B):
        x = 0.0
        p = 0.0
        for n in range(N - 1):
            ua = u[b, n]
            slope = (u[b, n + 1] - ua) / dt
            for m in range(substeps):
                t0 = m * h
                u0 = ua + slope * t0
                um = ua + slope * (t0 + 0.5 * h)
                u1 = ua + slope * (t0 + h)
                k1x = p
                k1p = u0 - x
                k2x = p + 0.5 * h * k1p
                k2p = um - (x + 0.5 * h * k1x)
                k3x = p + 0.5 * h * k2p
                k3p = um - (x + 0.5 * h * k2x)
                k4x = p + h * k3p
                k4p = u1 - (x + h * k3x)
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            xs[b, n + 1] = x
            ps[b, n + 1] = p
    return xs, ps


# --------------------------------------------------------------------------
# one sequential (Krotov-style) sweep over the interior samples


def _krotov_sweep_py(H0, H1, H2, u, dt, psi0, chi, weight, inv_lambda, step):
    """Update interior samples of ``u`` in place, left to right.

    ``chi[n]`` is the costate at sample ``n`` propagated backward under the
    previous pulse. ``weight`` is 1 for the phase-sensitive cost and 2 for
    the overlap cost. Returns the terminal state under the updated pulse.
    """
    N = u.shape[0]
    psi = psi0.copy()
    for n in range(1, N - 1):
        ub_prev = 0.5 * (u[n - 1] + u[n])
        ub_next = 0.5 * (u[n] + u[n + 1])
        Up, Dp = step(H0, H1, H2, ub_prev, dt)
        Uq, Dq = step(H0, H1, H2, ub_next, dt)
        a = Up @ psi
        c = chi[n + 1].conj()
        g = 0.5 * (np.sum(c * (Dq @ a)).real + np.sum(c * (Uq @ (Dp @ psi))).real)
        u[n] += inv_lambda * weight * g / dt
        Up, _ = step(H0, H1, H2, 0.5 * (u[n - 1] + u[n]), dt)
        psi = Up @ psi
    Ul, _ = step(H0, H1, H2, 0.5 * (u[N - 2] + u[N - 1]), dt)
    return Ul @ psi


@njit
def _krotov_sweep_nb_impl(H0, H1, H2, u, dt, psi0, chi, weight, inv_lambda):
    N = u.shape[0]
    psi = psi0.copy()
    for n in range(1, N - 1):
        ub_prev = 0.5 * (u[n - 1] + u[n])
        ub_next = 0.5 * (u[n] + u[n + 1])
        Up, Dp = _step_nb(H0, H1, H2, ub_prev, dt)
        Uq, Dq = _step_nb(H0, H1, H2, ub_next, dt)
        a = Up @ psi
        c = chi[n + 1].conj()
        g = 0.5 * (np.sum(c * (Dq @ a)).real + np.sum(c * (Uq @ (Dp @ psi))).real)
        u[n] += inv_lambda * weight * g / dt
        Up, _ = _step_nb(H0, H1, H2, 0.5 * (u[n - 1] + u[n]), dt)
        psi = Up @ psi
    Ul, _ = _step_nb(H0, H1, H2, 0.5 * (u[N - 2] + u[N - 1]), dt)
    return Ul @ psi


def _krotov_sweep_numpy(H0, H1, H2, u, dt, psi0, chi, weight, inv_lambda):
    return _krotov_sweep_py(H0, H1, H2, u, dt, psi0, chi, weight, inv_lambda, _step)


def _krotov_sweep_nb(H0, H1, H2, u, dt, psi0, chi, weight, inv_lambda):
    return _krotov_sweep_nb_impl(H0, H1, H2, u, dt, psi0, chi, float(weight), float(inv_lambda))


# --------------------------------------------------------------------------
# dispatch


def _c(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def propagate_terminal(H0, H1, H2, ubar, dt, psi0, use_numba=None):
    """Terminal states for a batch of midpoint-control rows ``ubar`` (B, N-1)."""
    use_numba = USE_NUMBA if use_numba is None else use_numba
    ubar = np.ascontiguousarray(np.atleast_2d(ubar), dtype=np.float64)
    args = (_c(H0), _c(H1), _c(H2), ubar, float(dt), _c(psi0))
    if use_numba:
        return _propagate_terminal_nb(*args)
    return _propagate_terminal_numpy(*args)


def rk4_oscillator(u, dt, substeps, use_numba=None):
    """Phase-space path ``(x, p)`` of the driven oscillator for a batch of pulses."""
    use_numba = USE_NUMBA if use_numba is None else use_numba
    u = np.ascontiguousarray(np.atleast_2d(u), dtype=np.float64)
    if use_numba:
        return _rk4_oscillator_nb(u, float(dt), int(substeps))
    return _rk4_oscillator_numpy(u, float(dt), int(substeps))


def krotov_sweep(H0, H1, H2, u, dt, psi0, chi, weight, inv_lambda, use_numba=None):
    """In-place sequential update of ``u``; returns the new terminal state."""
    use_numba = USE_NUMBA if use_numba is None else use_numba
    args = (_c(H0), _c(H1), _c(H2), u, float(dt), _c(psi0), _c(chi), weight, inv_lambda)
    if use_numba:
        return _krotov_sweep_nb(*args)
    return _krotov_sweep_numpy(*args)


step_unitary = _step
