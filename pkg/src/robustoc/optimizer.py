"""Monotonic sequential (Krotov-style) pulse optimization and first-order optimality checks."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import PHASE_SENSITIVE, QuantumProblem, midpoints, step_factors
from .errors import InvalidParameterError, MonotonicityViolationError
from .pulse import ControlPulse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KrotovConfig:
    """``step_weight`` is the Krotov ``lambda``: larger values give smaller updates."""

    step_weight: float = 1.0
    max_iters: int = 500
    target_infidelity: float = 1e-4
    stall_tolerance: float = 1e-14

    def __post_init__(self):
        if not (self.step_weight > 0 and self.max_iters > 0 and self.target_infidelity > 0
                and self.stall_tolerance > 0):
            raise InvalidParameterError("Krotov parameters must all be positive")


@dataclass
class OptimizationTrace:
    costs: list
    pulse: ControlPulse
    converged: bool
    iterations: int = 0
    first_update: np.ndarray = field(default=None, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "cost"])
        for i, c in enumerate(self.costs):
            w.writerow([i, repr(float(c))])
        return buf.getvalue()


def _backward_costates(problem: QuantumProblem, values, chiT):
    U, _ = step_factors(problem.model, midpoints(values), problem.grid.dt)
    chi = np.empty((U.shape[0] + 1, chiT.size), dtype=np.complex128)
    chi[-1] = chiT
    for n in range(U.shape[0] - 1, -1, -1):
        chi[n] = U[n].conj().T @ chi[n + 1]
    return chi


def krotov_optimize(problem: QuantumProblem, pulse_init: ControlPulse, cfg: KrotovConfig = KrotovConfig(),
                    use_numba=None) -> OptimizationTrace:
    """Minimize ``problem.cost`` by sequential updates of the interior samples.

    Each iteration propagates the state forward, the costate backward from
    the terminal condition of the objective, then sweeps the interior samples
    left to right, moving each by ``-(1/lambda) * dJ'/du(t_n)`` evaluated with
    the already-updated forward state. Endpoints never change.
    """
    u = np.array(pulse_init.values, dtype=np.float64)
    weight = 1.0 if problem.objective == PHASE_SENSITIVE else 2.0
    inv_lambda = 1.0 / cfg.step_weight
    m = problem.model
    psiT = problem.final_states(u)[0]
    costs = [problem.cost(u)]
    first_update = None
    converged = costs[0] <= cfg.target_infidelity
    it = 0
    while not converged and it < cfg.max_iters:
        chi = _backward_costates(problem, u, problem.terminal_costate(psiT))
        old = u.copy()
        psiT = kernels.krotov_sweep(m.H0, m.H1, m.H2, u, problem.grid.dt, problem.psi0, chi, weight,
                                    inv_lambda, use_numba=use_numba)
        if first_update is None:
            first_update = u - old
        cost = problem.cost(u)
        it += 1
        if cost > costs[-1] + cfg.stall_tolerance:
            raise MonotonicityViolationError(
                f"cost rose from {costs[-1]:.3e} to {cost:.3e} at iteration {it}; increase step_weight")
        improvement = costs[-1] - cost
        costs.append(cost)
        converged = cost <= cfg.target_infidelity
        if not converged and improvement < cfg.stall_tolerance:
            logger.info("Krotov stalled at iteration %d (cost %.3e)", it, cost)
            break
    return OptimizationTrace(costs, ControlPulse(problem.grid, u), converged, it, first_update)


def gradient_norm(problem, pulse) -> float:
    """Euclidean norm of ``kernel * dt`` over the interior samples."""
    return float(np.linalg.norm(problem.gradient(pulse)))
