"""The robust-pulse recipe end to end, driven by a :class:`RunConfig`.

Each stage is a pure function of the configuration and the previous stage's
results, so the CLI can persist and reload them freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import FourierFamily, RunConfig, SingleFrequencyFamily
from .ensemble import PulseEnsemble, Sampler, exact_infidelities, generate_ensemble
from .hessian import HessianMatrix, build_hessian, quadratic_form
from .models import (HarmonicTransportProblem, LandauZenerModel,
                     harmonic_reference_optimal_pulse, lz_linear_ramp, lz_problem)
from .optimizer import KrotovConfig, OptimizationTrace, gradient_norm, krotov_optimize
from .pulse import ControlPulse, FourierSum, ScoreWeights, SingleFrequency, TimeGrid, single_frequency_distortion
from .tolerance import ToleranceFit, calibrate, calibration_samples, fit_tolerance, strengths_for_infidelity


def grid_of(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(cfg.T, cfg.grid.N)


def build_problem(cfg: RunConfig):
    grid = grid_of(cfg)
    m = cfg.model
    if m.kind == "harmonic":
        return HarmonicTransportProblem(grid, m.dx, cfg.resolved_objective)
    lz = LandauZenerModel(m.omega, m.u_start, m.u_end)
    return lz_problem(lz, grid, cfg.resolved_objective)


@dataclass(frozen=True)
class OptimumResult:
    pulse: ControlPulse
    infidelity: float
    gradient_norm: float
    converged: bool
    trace: OptimizationTrace = None


def find_optimum(cfg: RunConfig, problem=None) -> OptimumResult:
    """Reference optimum for the trap, Krotov from a linear ramp for the sweep."""
    problem = problem or build_problem(cfg)
    m = cfg.model
    if m.kind == "harmonic":
        pulse = harmonic_reference_optimal_pulse(m.dx, cfg.T, cfg.grid.N)
        cost = problem.cost(pulse)
        return OptimumResult(pulse, cost, gradient_norm(problem, pulse), cost <= 1e-10)
    o = cfg.optimizer
    kc = KrotovConfig(o.step_weight, o.max_iters, o.target_infidelity, o.stall_tolerance)
    lz = LandauZenerModel(m.omega, m.u_start, m.u_end)
    trace = krotov_optimize(problem, lz_linear_ramp(lz, problem.grid), kc)
    return OptimumResult(trace.pulse, trace.costs[-1], gradient_norm(problem, trace.pulse), trace.converged, trace)


def hessian_at(cfg: RunConfig, problem, pulse, backend=None) -> HessianMatrix:
    return build_hessian(problem, pulse, backend or cfg.hessian.backend, seed=cfg.seed)


def family_specs(cfg: RunConfig):
    specs = []
    for f in cfg.calibration.families:
        if isinstance(f, SingleFrequencyFamily):
            specs.append(SingleFrequency(1.0, f.kappa))
        elif isinstance(f, FourierFamily):
            specs.append(FourierSum.random(f.n_harmonics, 1.0, f.seed))
    return specs


def _strengths(cfg, H, pulse, spec):
    c = cfg.calibration
    if c.strengths is not None:
        return np.asarray(c.strengths, dtype=np.float64)
    lo, hi = c.infidelity_range
    return strengths_for_infidelity(H, pulse, spec, lo, hi, c.n_strengths)


def run_calibration(cfg: RunConfig, problem, pulse, H) -> ToleranceFit:
    """Pooled fit over all configured families, each scanned over its own strengths."""
    samples, lam = [], None
    for spec in family_specs(cfg):
        s, lam = calibration_samples(problem, pulse, H, [spec], _strengths(cfg, H, pulse, spec),
                                     cfg.hessian.rel_threshold)
        samples += s
    c = cfg.calibration
    used = [s for s in samples if 0 < s.exact_infidelity <= c.max_infidelity]
    return fit_tolerance([s.exact_infidelity for s in used], [s.implied_alpha for s in used],
                         free_exponent=(cfg.resolved_fit_c == "free"), M=int(lam.size), samples=tuple(samples))


def family_fits(cfg: RunConfig, problem, pulse, H) -> list:
    """One fit per configured family (for the uniqueness comparison)."""
    fits = []
    for spec in family_specs(cfg):
        fits.append(calibrate(problem, pulse, H, [spec], _strengths(cfg, H, pulse, spec), cfg.resolved_fit_c,
                              cfg.hessian.rel_threshold, cfg.calibration.max_infidelity))
    return fits


def sampler_of(cfg: RunConfig) -> Sampler:
    s = cfg.ensemble.sampler
    return Sampler(s.kind, s.strength_lo, s.strength_hi, s.n_harmonics, s.kappa)


def weights_of(cfg: RunConfig) -> ScoreWeights:
    w = cfg.ensemble.weights
    return ScoreWeights(w.bandwidth, w.slew, w.amplitude)


def run_ensemble(cfg: RunConfig, problem, pulse, H, fit, count=None) -> PulseEnsemble:
    e = cfg.ensemble
    ens = generate_ensemble(problem, pulse, H, fit, e.J_target, sampler_of(cfg),
                            e.count if count is None else count, cfg.seed, weights_of(cfg),
                            cfg.hessian.rel_threshold)
    return exact_infidelities(problem, ens, accepted_only=False)


# ---------------------------------------------------------------------------
# figure data


def fig2a_series(problem, pulse, H, amplitudes):
    """Rows ``(a, exact infidelity, du H du^T / 2)`` for the single-frequency distortion."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    dus = np.stack([single_frequency_distortion(pulse, a, 1) for a in amplitudes])
    exact = problem.cost_batch(pulse.values + dus)
    quad = np.array([0.5 * quadratic_form(H, du[1:-1]) for du in dus])
    return amplitudes, exact, quad


def fig3_series(cfg: RunConfig, problem, pulse, H, fit, realizations):
    ens = run_ensemble(cfg, problem, pulse, H, fit, count=realizations)
    idx = np.array([r.index for r in ens.records])
    exact = np.array([r.exact_infidelity for r in ens.records])
    crit = np.array([r.criterion for r in ens.records])
    return idx, exact, crit, ens
