"""Time the numba kernels against their pure-numpy counterparts.

    python benchmarks/bench_kernels.py --repeats 5

Each row prints the best wall time of both variants and the speedup. The
numba variants are called once before timing so compilation is excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from robustoc import kernels
from robustoc._jit import HAVE_NUMBA
from robustoc.models import LandauZenerModel, harmonic_fock_hamiltonian, lz_boundary_states
from robustoc.pulse import TimeGrid


def _best(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(N, batch, fock_dim, rng):
    lz = LandauZenerModel()
    grid = TimeGrid(10.0, N)
    h = lz.hamiltonian
    psi0, psig = lz_boundary_states(lz)
    u = np.linspace(lz.u_start, lz.u_end, N)
    ubar = 0.5 * (u[1:] + u[:-1]) + 0.1 * rng.standard_normal((batch, N - 1))
    chi = np.tile(psig, (N, 1))

    fock = harmonic_fock_hamiltonian(fock_dim)
    psi_f = np.zeros(fock_dim, dtype=np.complex128)
    psi_f[0] = 1.0
    ubar_f = rng.uniform(0.0, 5.0, size=(max(1, batch // 8), N - 1))

    osc_u = rng.uniform(0.0, 5.0, size=(batch, N))
    return {
        "propagate_terminal LZ d=2": lambda nb: kernels.propagate_terminal(
            h.H0, h.H1, h.H2, ubar, grid.dt, psi0, use_numba=nb),
        f"propagate_terminal Fock d={fock_dim}": lambda nb: kernels.propagate_terminal(
            fock.H0, fock.H1, fock.H2, ubar_f, 4 * np.pi / (N - 1), psi_f, use_numba=nb),
        "rk4_oscillator": lambda nb: kernels.rk4_oscillator(osc_u, 4 * np.pi / (N - 1), 8, use_numba=nb),
        "krotov_sweep LZ": lambda nb: kernels.krotov_sweep(
            h.H0, h.H1, h.H2, u.copy(), grid.dt, psi0, chi, 1.0, 2.0, use_numba=nb),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description="numba vs numpy kernel timings")
    parser.add_argument("--N", type=int, default=256, help="time samples")
    parser.add_argument("--batch", type=int, default=64, help="pulses per batched call")
    parser.add_argument("--fock-dim", type=int, default=24)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not HAVE_NUMBA:
        print("numba unavailable; nothing to compare")
        return
    rng = np.random.default_rng(7)
    print(f"N={args.N} batch={args.batch} repeats={args.repeats}")
    print(f"{'kernel':<34}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, fn in _cases(args.N, args.batch, args.fock_dim, rng).items():
        fn(True)
        t_np = _best(lambda: fn(False), args.repeats)
        t_nb = _best(lambda: fn(True), args.repeats)
        print(f"{name:<34}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
