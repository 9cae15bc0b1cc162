"""Infidelity tolerance: path-integral norm, its inversion, calibration and acceptance tests.

With ``M`` nonzero Hessian eigenvalues ``lam`` the average cost is

    <J'>(alpha) = sqrt(pi alpha**3 / 2) * sum_k N_k / sqrt(lam_k),
    N_k = prod_{j != k} sqrt(lam_j / (2 pi alpha)),

which is a pure power law ``C * alpha**((4 - M) / 2)``. Calibration maps
exact infidelities of distorted pulses to the tolerance implied by their
quadratic form and fits ``alpha(e) = a*e + b*e**c``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares

from .errors import (AmbiguousInversionError, DegenerateInversionError, InsufficientDataError,
                     InvalidParameterError, InvalidSpectrumError, ShapeError)
from .hessian import DEFAULT_REL_THRESHOLD, eigen_spectrum, quadratic_form
from .pulse import FourierSum, SingleFrequency, distortion

MAX_CALIBRATION_INFIDELITY = 0.2
MIN_SAMPLES = 5


def _spectrum(lam) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if lam.size == 0:
        raise InvalidSpectrumError("need at least one nonzero eigenvalue")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise InvalidSpectrumError("eigenvalues entering the norm must be positive")
    return lam


def _positive_alpha(alpha):
    if not (np.isfinite(alpha) and alpha > 0):
        raise InvalidParameterError(f"tolerance must be positive, got {alpha}")


def normalization_factors(lam, alpha: float) -> np.ndarray:
    """``N_k``, with each Fresnel modulus ``|int exp(i lam xi**2 / (2 alpha)) dxi| = sqrt(2 pi alpha / lam)``."""
    lam = _spectrum(lam)
    _positive_alpha(alpha)
    logs = 0.5 * np.log(lam / (2.0 * np.pi * alpha))
    return np.exp(logs.sum() - logs)


def average_cost_norm(lam, alpha: float) -> float:
    lam = _spectrum(lam)
    if alpha == 0:
        return 0.0
    _positive_alpha(alpha)
    Nk = normalization_factors(lam, alpha)
    return float(math.sqrt(math.pi * alpha ** 3 / 2.0) * np.sum(Nk / np.sqrt(lam)))


def invert_alpha(lam, target_norm: float) -> float:
    """Tolerance ``alpha`` with ``average_cost_norm(lam, alpha) == target_norm``.

    Closed form from the power law. With four modes the norm does not depend
    on ``alpha``; with more, it decreases with ``alpha`` and larger costs would
    map to smaller tolerances, so both cases are refused.
    """
    lam = _spectrum(lam)
    if not (np.isfinite(target_norm) and target_norm >= 0):
        raise InvalidParameterError(f"target norm must be non-negative, got {target_norm}")
    if target_norm == 0:
        return 0.0
    M = lam.size
    if M == 4:
        raise DegenerateInversionError("with M = 4 curvature modes the norm is independent of the tolerance")
    if M > 4:
        raise AmbiguousInversionError(f"with M = {M} curvature modes the norm decreases with the tolerance")
    p = (4.0 - M) / 2.0
    C = average_cost_norm(lam, 1.0)
    return float((target_norm / C) ** (1.0 / p))


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationSample:
    family: str
    strength: float
    exact_infidelity: float
    quad_form: float
    implied_alpha: float


def _family_name(spec) -> str:
    if isinstance(spec, SingleFrequency):
        return f"single_frequency(kappa={spec.kappa})"
    if isinstance(spec, FourierSum):
        return f"fourier(K={len(spec.amplitudes)},seed={spec.seed})"
    raise InvalidParameterError(f"unknown distortion spec {spec!r}")


def _scaled(spec, s):
    if isinstance(spec, SingleFrequency):
        return SingleFrequency(s * spec.amplitude, spec.kappa)
    return spec.scaled(s)


def _fit_model(e, a, b, c):
    return a * e + b * np.power(e, c)


@dataclass(frozen=True)
class ToleranceFit:
    """``alpha(e) = a*e + b*e**c`` over infidelity ``e = 1 - F``."""

    a: float
    b: float
    c: float
    free_exponent: bool
    M: int
    samples: tuple = field(default=(), repr=False)
    rms_relative: float = 0.0
    rms_over_mean: float = 0.0

    def __call__(self, e):
        return _fit_model(np.asarray(e, dtype=np.float64), self.a, self.b, self.c)

    def alpha(self, e: float) -> float:
        return float(self(e))

    def infidelity(self, alpha: float) -> float:
        """Inverse of the fit; ``e`` with ``alpha(e) == alpha``."""
        if alpha <= 0:
            return 0.0
        hi = 1.0
        while self.alpha(hi) < alpha:
            hi *= 2.0
            if hi > 1e12:
                raise InvalidParameterError("tolerance beyond the range of the fit")
        return float(brentq(lambda e: self.alpha(e) - alpha, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps))

    def params(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "free_exponent": self.free_exponent, "M": self.M,
                "rms_relative": self.rms_relative, "rms_over_mean": self.rms_over_mean}

    def to_json(self) -> str:
        return json.dumps({"fit": self.params(), "samples": [asdict(s) for s in self.samples]})

    @classmethod
    def from_json(cls, text: str) -> "ToleranceFit":
        d = json.loads(text)
        f = d["fit"]
        samples = tuple(CalibrationSample(**s) for s in d.get("samples", ()))
        return cls(f["a"], f["b"], f["c"], f["free_exponent"], f["M"], samples, f["rms_relative"],
                   f["rms_over_mean"])

    def samples_csv(self) -> str:
        return samples_to_csv(self.samples)


def samples_to_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "strength", "exact_infidelity", "quad_form", "implied_alpha"])
    for s in samples:
        w.writerow([s.family, repr(s.strength), repr(s.exact_infidelity), repr(s.quad_form), repr(s.implied_alpha)])
    return buf.getvalue()


def fit_tolerance(e, alpha, free_exponent: bool = False, M: int = 1, samples=()) -> ToleranceFit:
    """Least-squares fit of ``alpha = a*e + b*e**c`` with ``a, b >= 0``.

    Residuals are relative, so every sample counts equally whatever its
    magnitude. ``c`` is fixed to 1/2 unless ``free_exponent``.
    """
    e = np.asarray(e, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    ok = (e > 0) & (alpha > 0)
    e, alpha = e[ok], alpha[ok]
    if e.size < MIN_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples with nonzero infidelity, got {e.size}")

    def resid(p):
        a, b = p[0], p[1]
        c = p[2] if free_exponent else 0.5
        return _fit_model(e, a, b, c) / alpha - 1.0

    # initial guesses: best pure power law, and the pure linear term
    slope, icpt = np.polyfit(np.log(e), np.log(alpha), 1)
    starts = [[float(np.median(alpha / e)), 0.0, 1.0]]
    if free_exponent:
        starts.append([0.0, float(np.exp(icpt)), max(float(slope), 0.05)])
    else:
        starts.append([0.0, float(np.median(alpha / np.sqrt(e))), 0.5])
    best = None
    for x0 in starts:
        x0 = x0 if free_exponent else x0[:2]
        lo = [0.0, 0.0, 1e-3][:len(x0)]
        hi = [np.inf, np.inf, 10.0][:len(x0)]
        x0 = np.clip(x0, lo, [h if np.isfinite(h) else np.inf for h in hi])
        r = least_squares(resid, x0, bounds=(lo, hi), x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or r.cost < best.cost:
            best = r
    a, b = float(best.x[0]), float(best.x[1])
    c = float(best.x[2]) if free_exponent else 0.5
    rel = resid(best.x)
    absr = _fit_model(e, a, b, c) - alpha
    return ToleranceFit(a, b, c, free_exponent, M, tuple(samples), float(np.sqrt(np.mean(rel ** 2))),
                        float(np.sqrt(np.mean(absr ** 2)) / np.mean(alpha)))


def calibration_samples(problem, pulse_opt, H, families, strengths, rel_threshold=DEFAULT_REL_THRESHOLD):
    """Exact infidelity, quadratic form and implied tolerance for every family and strength."""
    u = np.asarray(getattr(pulse_opt, "values", pulse_opt), dtype=np.float64)
    lam = eigen_spectrum(H, rel_threshold).nonzero
    strengths = np.asarray(strengths, dtype=np.float64)
    samples = []
    for spec in families:
        dus = np.stack([distortion(pulse_opt, _scaled(spec, s)) for s in strengths])
        exact = problem.cost_batch(u + dus)
        for s, du, e in zip(strengths, dus, exact):
            q2 = quadratic_form(H, du[1:-1])
            alpha = invert_alpha(lam, 0.5 * q2) if lam.size else 0.0
            samples.append(CalibrationSample(_family_name(spec), float(s), float(e), q2, alpha))
    return samples, lam


def calibrate(problem, pulse_opt, H, families, strengths, fit_c: str = "fixed_half",
              rel_threshold: float = DEFAULT_REL_THRESHOLD,
              max_infidelity: float = MAX_CALIBRATION_INFIDELITY) -> ToleranceFit:
    """Fit the tolerance curve from distortions of ``pulse_opt`` of increasing strength.

    Each family is scaled by every strength (the amplitude ``a`` for
    :class:`SingleFrequency`, an overall factor for :class:`FourierSum`).
    Samples with exact infidelity above ``max_infidelity`` are outside the
    quadratic regime and are dropped.
    """
    if fit_c not in ("fixed_half", "free"):
        raise InvalidParameterError("fit_c must be 'fixed_half' or 'free'")
    samples, lam = calibration_samples(problem, pulse_opt, H, families, strengths, rel_threshold)
    used = [s for s in samples if 0 < s.exact_infidelity <= max_infidelity]
    return fit_tolerance([s.exact_infidelity for s in used], [s.implied_alpha for s in used],
                         free_exponent=(fit_c == "free"), M=int(lam.size), samples=tuple(samples))


def strengths_for_infidelity(H, pulse_opt, spec, e_lo: float, e_hi: float, n: int) -> np.ndarray:
    """Log-spaced strengths whose quadratic-model infidelity spans ``[e_lo, e_hi]``."""
    du = distortion(pulse_opt, _scaled(spec, 1.0))
    q = 0.5 * quadratic_form(H, du[1:-1])
    if q <= 0:
        raise InvalidParameterError("distortion family has no curvature at this optimum")
    return np.sqrt(np.geomspace(e_lo, e_hi, n) / q)


# ---------------------------------------------------------------------------
# threshold and acceptance


def _check_target(J):
    if not (0 < J < 1):
        raise InvalidParameterError(f"target infidelity must lie in (0, 1), got {J}")


def threshold_ell(fit: ToleranceFit, lam, F_target: float) -> float:
    """Largest ``du H du^T`` allowed for fidelity ``F_target``: ``2 <J'>(alpha(1 - F))``."""
    if not (0 < F_target < 1):
        raise InvalidParameterError(f"target fidelity must lie in (0, 1), got {F_target}")
    return 2.0 * average_cost_norm(lam, fit.alpha(1.0 - F_target))


def criterion_I(H, du, lam, J_target: float, fit: ToleranceFit = None, alpha: float = None) -> float:
    """Acceptance measure for a distortion, comparable with ``J_target``.

    ``I = J * (du H du^T / l)**(2/3)`` with ``l = 2 <J'>(alpha)`` and
    ``alpha`` either given or read from the fit at ``J``; ``I <= J`` exactly
    when the quadratic form stays below the threshold.
    """
    _check_target(J_target)
    if alpha is None:
        if fit is None:
            raise InvalidParameterError("criterion_I needs a fit or an explicit alpha")
        alpha = fit.alpha(J_target)
    _positive_alpha(alpha)
    du = np.asarray(du, dtype=np.float64)
    A = H.entries if hasattr(H, "entries") else np.asarray(H)
    if du.shape == (A.shape[0] + 2,):
        du = du[1:-1]
    if du.shape != (A.shape[0],):
        raise ShapeError(f"distortion has shape {du.shape}, Hessian acts on ({A.shape[0]},)")
    q2 = max(quadratic_form(A, du), 0.0)
    ell = 2.0 * average_cost_norm(lam, alpha)
    return float(J_target * (q2 / ell) ** (2.0 / 3.0))


def infidelity_estimate(fit: ToleranceFit, lam, quad_form: float) -> float:
    """Infidelity predicted for a distortion with ``du H du^T = quad_form`` via the calibrated curve."""
    return fit.infidelity(invert_alpha(lam, 0.5 * max(quad_form, 0.0)))
