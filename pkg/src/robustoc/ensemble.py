"""Random distortions of an optimal pulse, filtered by the tolerance criterion and ranked."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import EmptyInputError, InvalidParameterError
from .hessian import DEFAULT_REL_THRESHOLD, eigen_spectrum, quadratic_form
from .pulse import ControlPulse, FourierSum, ScoreWeights, SingleFrequency, distortion, implementability_score
from .tolerance import ToleranceFit, criterion_I

SAMPLER_KINDS = ("fourier", "single_frequency")


@dataclass(frozen=True)
class Sampler:
    """Draws distortion specs with a strength uniform in ``[strength_lo, strength_hi]``.

    ``fourier``: ``n_harmonics`` amplitudes uniform in ``[-s, s]``.
    ``single_frequency``: amplitude ``+-s`` with random sign at rate ``kappa``.
    """

    kind: str = "fourier"
    strength_lo: float = 0.0
    strength_hi: float = 1.0
    n_harmonics: int = 5
    kappa: int = 1

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise InvalidParameterError(f"sampler kind must be one of {SAMPLER_KINDS}")
        if not (0 <= self.strength_lo <= self.strength_hi):
            raise InvalidParameterError("need 0 <= strength_lo <= strength_hi")
        if self.n_harmonics < 1 or self.kappa < 1:
            raise InvalidParameterError("n_harmonics and kappa must be positive")

    def draw(self, rng: np.random.Generator):
        s = rng.uniform(self.strength_lo, self.strength_hi)
        if self.kind == "fourier":
            c = rng.uniform(-1.0, 1.0, size=self.n_harmonics) * s
            return s, FourierSum(tuple(float(x) for x in c))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return s, SingleFrequency(sign * s, self.kappa)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "strength_lo": self.strength_lo, "strength_hi": self.strength_hi,
                "n_harmonics": self.n_harmonics, "kappa": self.kappa}


@dataclass(frozen=True)
class DrawRecord:
    index: int
    strength: float
    criterion: float
    quad_form: float
    score: float
    accepted: bool
    exact_infidelity: Optional[float] = None


@dataclass(frozen=True)
class PulseEnsemble:
    base: ControlPulse = field(repr=False)
    records: tuple = field(repr=False)
    candidates: tuple = field(repr=False)  # one pulse per draw, accepted or not
    J_target: float
    sampler: Sampler
    seed: int
    fit_params: dict = field(default_factory=dict, repr=False)

    @property
    def accepted(self) -> list:
        return [r for r in self.records if r.accepted]

    @property
    def pulses(self) -> dict:
        """Accepted pulses keyed by draw index."""
        return {r.index: self.candidates[r.index] for r in self.records if r.accepted}

    @property
    def n_rejected(self) -> int:
        return sum(not r.accepted for r in self.records)

    def __len__(self):
        return len(self.accepted)

    def manifest(self) -> dict:
        acc = len(self.accepted)
        return {"seed": self.seed, "sampler": self.sampler.to_dict(), "J_target": self.J_target,
                "fit": self.fit_params, "draws": len(self.records), "accepted": acc,
                "rejected": self.n_rejected,
                "acceptance_rate": acc / len(self.records) if self.records else 0.0}

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "strength", "criterion_I", "quad_form", "score", "accepted", "exact_infidelity"])
        for r in self.records:
            ex = "" if r.exact_infidelity is None else repr(r.exact_infidelity)
            w.writerow([r.index, repr(r.strength), repr(r.criterion), repr(r.quad_form), repr(r.score),
                        int(r.accepted), ex])
        return buf.getvalue()


def generate_ensemble(problem, pulse_opt: ControlPulse, H, fit: ToleranceFit, J_target: float, sampler: Sampler,
                      count: int, seed: int, weights: ScoreWeights = ScoreWeights(),
                      rel_threshold: float = DEFAULT_REL_THRESHOLD) -> PulseEnsemble:
    """Draw ``count`` distortions and keep those with criterion ``I <= J_target``.

    ``problem`` is unused by the filter itself; it is accepted so that callers
    can pass the same context to :func:`verify_ensemble`.
    """
    if not (0 < J_target <= 0.2):
        raise InvalidParameterError(f"J_target must lie in (0, 0.2], got {J_target}")
    if count < 0:
        raise InvalidParameterError("count must be non-negative")
    lam = eigen_spectrum(H, rel_threshold).nonzero
    alpha = fit.alpha(J_target)
    rng = np.random.default_rng(seed)
    records, candidates = [], []
    for i in range(count):
        s, spec = sampler.draw(rng)
        du = distortion(pulse_opt, spec)
        q2 = quadratic_form(H, du[1:-1])
        crit = criterion_I(H, du[1:-1], lam, J_target, alpha=alpha)
        ok = crit <= J_target
        p = pulse_opt + du
        records.append(DrawRecord(i, float(s), crit, q2, implementability_score(p, weights), ok))
        candidates.append(p)
    return PulseEnsemble(pulse_opt, tuple(records), tuple(candidates), J_target, sampler, seed, fit.params())


@dataclass(frozen=True)
class VerificationResult:
    pass_fraction: float
    indices: np.ndarray = field(repr=False)
    exact: np.ndarray = field(repr=False)
    criterion: np.ndarray = field(repr=False)
    J_target: float = 0.0
    slack: float = 0.0

    def to_csv(self) -> str:
        """Three series per sample: exact infidelity, criterion, threshold."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "exact_infidelity", "criterion_I", "threshold"])
        for i, e, c in zip(self.indices, self.exact, self.criterion):
            w.writerow([int(i), repr(float(e)), repr(float(c)), repr(float(self.J_target))])
        return buf.getvalue()


def exact_infidelities(problem, ensemble: PulseEnsemble, accepted_only: bool = True) -> PulseEnsemble:
    """Copy of ``ensemble`` whose records carry the propagated infidelity."""
    recs = [r for r in ensemble.records if r.accepted or not accepted_only]
    if not recs:
        return ensemble
    values = np.stack([ensemble.candidates[r.index].values for r in recs])
    exact = problem.cost_batch(values)
    by_index = {r.index: float(e) for r, e in zip(recs, exact)}
    new = tuple(replace(r, exact_infidelity=by_index.get(r.index, r.exact_infidelity)) for r in ensemble.records)
    return replace(ensemble, records=new)


def verify_ensemble(problem, ensemble: PulseEnsemble, J_target: float = None, slack: float = 0.25) -> VerificationResult:
    """Propagate every accepted pulse; pass when its infidelity is at most ``J_target * (1 + slack)``."""
    if len(ensemble) == 0:
        raise EmptyInputError("ensemble has no accepted pulses")
    if slack < 0:
        raise InvalidParameterError("slack must be non-negative")
    J = ensemble.J_target if J_target is None else J_target
    acc = ensemble.accepted
    values = np.stack([ensemble.candidates[r.index].values for r in acc])
    exact = problem.cost_batch(values)
    passed = exact <= J * (1.0 + slack)
    return VerificationResult(float(np.mean(passed)), np.array([r.index for r in acc]), exact,
                              np.array([r.criterion for r in acc]), J, slack)


def select_best(ensemble: PulseEnsemble, weights: ScoreWeights = None) -> list:
    """Accepted ``(record, pulse)`` pairs, easiest to implement first.

    Sorted by implementability score, then criterion, then draw index.
    ``weights`` re-scores the pulses; by default the stored scores are used.
    """
    acc = ensemble.accepted
    if not acc:
        raise EmptyInputError("ensemble has no accepted pulses")
    if weights is not None:
        acc = [replace(r, score=implementability_score(ensemble.candidates[r.index], weights)) for r in acc]
    order = sorted(acc, key=lambda r: (r.score, r.criterion, r.index))
    return [(r, ensemble.candidates[r.index]) for r in order]
