"""Time grids, sampled control pulses, distortion generators and implementability measures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.fft

from .errors import InvalidGridError, InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``N`` samples on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise InvalidGridError(f"final time must be positive, got T={self.T}")
        if int(self.N) != self.N or self.N < 4:
            raise InvalidGridError(f"need at least 4 samples, got N={self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / (self.N - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N)

    @property
    def n_interior(self) -> int:
        return self.N - 2


@dataclass(frozen=True)
class ControlPulse:
    """A real control sampled on a :class:`TimeGrid`; endpoint values are pinned."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.grid.N,):
            raise InvalidInputError(f"expected {self.grid.N} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("pulse contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TimeGrid, f) -> "ControlPulse":
        return cls(grid, np.asarray(f(grid.times), dtype=np.float64) * np.ones(grid.N))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def with_values(self, values) -> "ControlPulse":
        return ControlPulse(self.grid, values)

    def with_interior(self, interior) -> "ControlPulse":
        v = self.values.copy()
        v[1:-1] = interior
        return ControlPulse(self.grid, v)

    def __add__(self, delta) -> "ControlPulse":
        return ControlPulse(self.grid, self.values + np.asarray(delta, dtype=np.float64))

    def __sub__(self, delta) -> "ControlPulse":
        return ControlPulse(self.grid, self.values - np.asarray(delta, dtype=np.float64))

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {"T": self.grid.T, "N": self.grid.N, "values": [float(x) for x in self.values]}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlPulse":
        return cls(TimeGrid(d["T"], d["N"]), np.asarray(d["values"], dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ControlPulse":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "u"])
        for t, u in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(u))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ControlPulse":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "u"]:
            raise InvalidInputError("pulse CSV must start with the header 't,u'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(TimeGrid(data[-1, 0], len(data)), data[:, 1])


# ---------------------------------------------------------------------------
# distortions


@dataclass(frozen=True)
class SingleFrequency:
    """``a * sin(2*pi*kappa*t/T) * du/dt`` modulation of a base pulse."""

    amplitude: float
    kappa: int = 1


@dataclass(frozen=True)
class FourierSum:
    """``sum_k c_k sin(k*pi*t/T)``; the amplitudes may come from a seeded draw."""

    amplitudes: tuple
    seed: Union[int, None] = None

    @classmethod
    def random(cls, n_harmonics: int, max_amplitude: float, seed: int) -> "FourierSum":
        """Amplitudes drawn uniformly from ``[-max_amplitude, max_amplitude]``."""
        if n_harmonics < 1:
            raise InvalidParameterError("need at least one harmonic")
        rng = np.random.default_rng(seed)
        c = rng.uniform(-max_amplitude, max_amplitude, size=n_harmonics)
        return cls(tuple(float(x) for x in c), seed)

    def scaled(self, s: float) -> "FourierSum":
        return FourierSum(tuple(s * c for c in self.amplitudes), self.seed)


DistortionSpec = Union[SingleFrequency, FourierSum]


def time_derivative(pulse: ControlPulse) -> np.ndarray:
    """Second-order finite-difference derivative of the pulse samples.

    Central differences inside, one-sided three-point stencils at the ends, so
    the result is exact for polynomials up to degree two.
    """
    if pulse.grid.N < 4:
        raise InvalidGridError("time_derivative needs N >= 4")
    return np.gradient(pulse.values, pulse.grid.dt, edge_order=2)


def _pin(d: np.ndarray) -> np.ndarray:
    d[0] = 0.0
    d[-1] = 0.0
    return d


def single_frequency_distortion(base: ControlPulse, a: float, kappa: int) -> np.ndarray:
    if int(kappa) != kappa or kappa <= 0:
        raise InvalidParameterError(f"kappa must be a positive integer, got {kappa}")
    t = base.times
    d = a * np.sin(kappa * 2.0 * np.pi * t / base.grid.T) * time_derivative(base)
    return _pin(d)


def fourier_distortion(grid: TimeGrid, spec: FourierSum) -> np.ndarray:
    c = np.asarray(spec.amplitudes, dtype=np.float64)
    if c.size == 0:
        raise InvalidParameterError("FourierSum needs at least one amplitude")
    k = np.arange(1, c.size + 1)
    d = np.sin(np.outer(grid.times, k) * np.pi / grid.T) @ c
    return _pin(d)


def distortion(base: ControlPulse, spec: DistortionSpec) -> np.ndarray:
    """Distortion vector for either spec variant."""
    if isinstance(spec, SingleFrequency):
        return single_frequency_distortion(base, spec.amplitude, spec.kappa)
    if isinstance(spec, FourierSum):
        return fourier_distortion(base.grid, spec)
    raise InvalidParameterError(f"unknown distortion spec {spec!r}")


# ---------------------------------------------------------------------------
# implementability


@dataclass(frozen=True)
class ScoreWeights:
    bandwidth: float = 1.0
    slew: float = 0.0
    amplitude: float = 0.0

    def __post_init__(self):
        if min(self.bandwidth, self.slew, self.amplitude) < 0:
            raise InvalidParameterError("score weights must be non-negative")


def spectral_bandwidth(pulse: ControlPulse, fraction: float = 0.99) -> float:
    """Smallest frequency below which ``fraction`` of the detrended power lies.

    The straight line joining the two endpoint values is removed first; the
    residual vanishes at both ends, so it is expanded exactly in the
    ``sin(k*pi*t/T)`` basis (DST-I) and mode ``k`` is assigned frequency
    ``k / (2T)``.
    """
    v = pulse.values
    ramp = np.linspace(v[0], v[-1], v.size)
    r = (v - ramp)[1:-1]
    power = scipy.fft.dst(r, type=1) ** 2
    total = power.sum()
    if total <= 1e-300:
        return 0.0
    k = int(np.searchsorted(np.cumsum(power), fraction * total * (1 - 1e-12)))
    return (k + 1) / (2.0 * pulse.grid.T)


def implementability_score(pulse: ControlPulse, weights: ScoreWeights = ScoreWeights()) -> float:
    """Weighted sum of bandwidth, peak slew rate and peak amplitude; lower is easier."""
    if not isinstance(weights, ScoreWeights):
        weights = ScoreWeights(*weights)
    score = 0.0
    if weights.bandwidth:
        score += weights.bandwidth * spectral_bandwidth(pulse)
    if weights.slew:
        score += weights.slew * float(np.max(np.abs(time_derivative(pulse))))
    if weights.amplitude:
        score += weights.amplitude * float(np.max(np.abs(pulse.values)))
    return score
