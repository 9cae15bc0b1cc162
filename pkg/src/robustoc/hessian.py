"""Curvature of the reduced cost around an optimal pulse.

Three ways to get the ``(N-2) x (N-2)`` Hessian over interior samples:

``gateaux``
    exact second variation of the discretized dynamics (the problem's own
    ``hessian``), assembled from first and second state variations.
``finite_difference``
    four-point stencil on the cost, batched through ``cost_batch``.
``bfgs``
    quasi-Newton accumulation from gradient differences along random
    directions; cheap in memory, approximate.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NotAtOptimumError, ShapeError

logger = logging.getLogger(__name__)

BACKENDS = ("gateaux", "finite_difference", "bfgs")
_ALIASES = {"fd": "finite_difference", "exact": "gateaux"}

GRADIENT_TOLERANCE = 1e-6
PSD_WARN_TOLERANCE = 1e-6
DEFAULT_REL_THRESHOLD = 1e-8


@dataclass(frozen=True)
class HessianMatrix:
    entries: np.ndarray = field(repr=False)
    backend: str
    N: int
    dt: float
    warnings: tuple = ()
    raw_asymmetry: float = 0.0  # of the backend output, before symmetrization

    def __post_init__(self):
        H = np.array(self.entries, dtype=np.float64)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] != self.N - 2:
            raise ShapeError(f"Hessian must be ({self.N - 2}, {self.N - 2}), got {H.shape}")
        H.setflags(write=False)
        object.__setattr__(self, "entries", H)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def asymmetry(self) -> float:
        return _asymmetry(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# N={self.N},dt={self.dt!r},backend={self.backend}\n")
        w = csv.writer(buf, lineterminator="\n")
        for row in self.entries:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"N": self.N, "dt": self.dt, "backend": self.backend, "warnings": list(self.warnings),
                "raw_asymmetry": self.raw_asymmetry, "entries": self.entries.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "HessianMatrix":
        return cls(np.asarray(d["entries"], dtype=np.float64), d["backend"], int(d["N"]), float(d["dt"]),
                   tuple(d.get("warnings", ())), float(d.get("raw_asymmetry", 0.0)))


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    M: int
    rel_threshold: float = DEFAULT_REL_THRESHOLD

    @property
    def nonzero(self) -> np.ndarray:
        return self.eigenvalues[:self.M]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "counted"])
        for i, lam in enumerate(self.eigenvalues):
            w.writerow([i, repr(float(lam)), int(i < self.M)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"M": self.M, "rel_threshold": self.rel_threshold,
                "eigenvalues": [float(x) for x in self.eigenvalues]}


@dataclass(frozen=True)
class RankOneSummary:
    mean_entry: float
    lambda_rank_one: float
    lambda_max: float
    discrepancy: float
    M: int

    @property
    def valid(self) -> bool:
        """The constant-entry picture holds: one curvature mode, leading eigenvalue within 10%."""
        return self.M == 1 and self.discrepancy <= 0.1


def _asymmetry(H) -> float:
    scale = np.max(np.abs(H))
    return float(np.max(np.abs(H - H.T)) / scale) if scale > 0 else 0.0


def _matrix(H) -> np.ndarray:
    return H.entries if isinstance(H, HessianMatrix) else np.asarray(H, dtype=np.float64)


def _values(pulse) -> np.ndarray:
    return np.asarray(getattr(pulse, "values", pulse), dtype=np.float64)


# ---------------------------------------------------------------------------
# backends


def _fd_hessian(problem, u) -> np.ndarray:
    n = u.size - 2
    eps = 1e-3 * max(1.0, float(np.max(np.abs(u))))
    E = np.eye(u.size)[1:-1] * eps
    H = np.empty((n, n))
    for i in range(n):
        k = np.arange(i, n)
        plus = E[i] + E[k]
        minus = E[i] - E[k]
        batch = np.concatenate([u + plus, u + minus, u - minus, u - plus])
        c = problem.cost_batch(batch).reshape(4, -1)
        row = (c[0] - c[1] - c[2] + c[3]) / (4.0 * eps * eps)
        H[i, i:] = row
        H[i:, i] = row
    return H


def _bfgs_hessian(problem, u, seed=0, rtol=1e-2, max_sweeps=20, n_probes=8):
    """BFGS updates from central gradient differences along random directions.

    The target is shifted by ``shift * I`` so that it is positive definite even
    where the true curvature is singular; the shift is removed at the end.
    Stops once the quadratic form on a fixed set of probe directions changes
    by less than ``rtol`` (relative) over a full sweep of ``n`` updates.
    """
    rng = np.random.default_rng(seed)
    n = u.size - 2
    h = 1e-4 * max(1.0, float(np.max(np.abs(u))))
    # rough curvature scale from one probe
    s = rng.standard_normal(n)
    s *= h / np.linalg.norm(s)
    y = _grad_diff(problem, u, s)
    scale = max(abs(y @ s) / (s @ s), np.finfo(float).tiny)
    shift = 1e-3 * scale
    B = scale * np.eye(n)
    probes = rng.standard_normal((n_probes, n))
    last = None
    for sweep in range(max_sweeps):
        for _ in range(n):
            s = rng.standard_normal(n)
            s *= h / np.linalg.norm(s)
            y = _grad_diff(problem, u, s) + shift * s
            ys = y @ s
            Bs = B @ s
            sBs = s @ Bs
            if ys <= 0 or sBs <= 0:
                continue
            B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / ys
        q = np.einsum("pi,ij,pj->p", probes, B, probes)
        if last is not None and np.max(np.abs(q - last) / np.abs(q)) < rtol:
            break
        last = q
    else:
        logger.warning("BFGS curvature did not stabilise after %d sweeps", max_sweeps)
    return B - shift * np.eye(n)


def _grad_diff(problem, u, s):
    """``(g(u + s) - g(u - s)) / 2`` for an interior step ``s``; approximately ``H s``."""
    step = np.zeros_like(u)
    step[1:-1] = s
    return 0.5 * (problem.gradient(u + step) - problem.gradient(u - step))


def build_hessian(problem, pulse_opt, backend: str = "gateaux", *, gradient_tolerance: float = GRADIENT_TOLERANCE,
                  check_optimum: bool = True, seed: int = 0) -> HessianMatrix:
    """Hessian of ``problem.cost`` at ``pulse_opt`` over the interior samples.

    ``problem`` needs ``grid``, ``cost_batch``, ``gradient`` and, for the
    ``gateaux`` backend, ``hessian``. The pulse must be a stationary point:
    its gradient norm (kernel times ``dt``) must not exceed
    ``gradient_tolerance`` unless ``check_optimum`` is false.
    """
    backend = _ALIASES.get(backend, backend)
    if backend not in BACKENDS:
        raise InvalidParameterError(f"unknown Hessian backend {backend!r}; choose from {BACKENDS}")
    u = _values(pulse_opt)
    if check_optimum:
        gn = float(np.linalg.norm(problem.gradient(u)))
        if gn > gradient_tolerance:
            raise NotAtOptimumError(f"gradient norm {gn:.3e} exceeds {gradient_tolerance:.1e}; optimize first")
    if backend == "gateaux":
        H = problem.hessian(u)
    elif backend == "finite_difference":
        H = _fd_hessian(problem, u)
    else:
        H = _bfgs_hessian(problem, u, seed=seed)
    raw = _asymmetry(H)
    H = 0.5 * (H + H.T)
    notes = []
    lam = np.linalg.eigvalsh(H)
    if lam[-1] > 0 and lam[0] < -PSD_WARN_TOLERANCE * lam[-1]:
        msg = f"not positive semidefinite: smallest eigenvalue {lam[0]:.3e}, largest {lam[-1]:.3e}"
        logger.warning(msg)
        notes.append(msg)
    return HessianMatrix(H, backend, problem.grid.N, problem.grid.dt, tuple(notes), raw)


# ---------------------------------------------------------------------------
# analysis


def quadratic_form(H, du) -> float:
    """``du H du^T`` for an interior-length distortion ``du``."""
    A = _matrix(H)
    du = np.asarray(du, dtype=np.float64)
    if du.shape != (A.shape[0],):
        raise ShapeError(f"distortion has shape {du.shape}, Hessian acts on ({A.shape[0]},)")
    return float(du @ A @ du)


def eigen_spectrum(H, rel_threshold: float = DEFAULT_REL_THRESHOLD) -> Spectrum:
    """Eigenvalues in descending order, negatives clamped to zero; ``M`` counts those above threshold."""
    lam, V = np.linalg.eigh(_matrix(H))
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.maximum(lam, 0.0)
    top = lam[0] if lam.size else 0.0
    M = int(np.sum(lam > rel_threshold * top)) if top > 0 else 0
    return Spectrum(lam, V, M, rel_threshold)


def rank_one_summary(H, rel_threshold: float = DEFAULT_REL_THRESHOLD) -> RankOneSummary:
    A = _matrix(H)
    n = A.shape[0]
    hbar = float(A.sum() / n ** 2)
    spec = eigen_spectrum(A, rel_threshold)
    lam1 = float(spec.eigenvalues[0])
    lam_r1 = n * hbar
    disc = abs(lam_r1 - lam1) / lam1 if lam1 > 0 else float("inf")
    return RankOneSummary(hbar, lam_r1, lam1, disc, spec.M)
