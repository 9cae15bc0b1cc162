"""Error-tolerance analysis of optimal quantum control pulses.

Build the Hessian of the reduced cost around an optimal pulse, calibrate the
infidelity tolerance against exact propagation, and sample distorted pulses
that keep the infidelity below a chosen threshold.
"""

from .dynamics import (OVERLAP, PHASE_SENSITIVE, GateauxSolution, HamiltonianModel, QuantumProblem, Trajectory,
                       infidelity_integral, infidelity_phase_sensitive, infidelity_terminal, propagate,
                       solve_gateaux)
from .ensemble import PulseEnsemble, Sampler, generate_ensemble, select_best, verify_ensemble
from .errors import RobustOCError
from .hessian import HessianMatrix, Spectrum, build_hessian, eigen_spectrum, quadratic_form, rank_one_summary
from .models import (HarmonicTransportModel, HarmonicTransportProblem, LandauZenerModel, harmonic_classical_evolve,
                     harmonic_fidelity, harmonic_reference_optimal_pulse, lz_boundary_states, lz_problem,
                     optimal_family_shift, split_step_oracle)
from .optimizer import KrotovConfig, OptimizationTrace, gradient_norm, krotov_optimize
from .pulse import (ControlPulse, FourierSum, ScoreWeights, SingleFrequency, TimeGrid, fourier_distortion,
                    implementability_score, single_frequency_distortion, time_derivative)
from .tolerance import (ToleranceFit, average_cost_norm, calibrate, criterion_I, invert_alpha,
                        normalization_factors, threshold_ell)

__version__ = "0.1.0"

__all__ = [
    "OVERLAP", "PHASE_SENSITIVE", "GateauxSolution", "HamiltonianModel", "QuantumProblem", "Trajectory",
    "infidelity_integral", "infidelity_phase_sensitive", "infidelity_terminal", "propagate", "solve_gateaux",
    "PulseEnsemble", "Sampler", "generate_ensemble", "select_best", "verify_ensemble", "RobustOCError",
    "HessianMatrix", "Spectrum", "build_hessian", "eigen_spectrum", "quadratic_form", "rank_one_summary",
    "HarmonicTransportModel", "HarmonicTransportProblem", "LandauZenerModel", "harmonic_classical_evolve",
    "harmonic_fidelity", "harmonic_reference_optimal_pulse", "lz_boundary_states", "lz_problem",
    "optimal_family_shift", "split_step_oracle", "KrotovConfig", "OptimizationTrace", "gradient_norm",
    "krotov_optimize", "ControlPulse", "FourierSum", "ScoreWeights", "SingleFrequency", "TimeGrid",
    "fourier_distortion", "implementability_score", "single_frequency_distortion", "time_derivative",
    "ToleranceFit", "average_cost_norm", "calibrate", "criterion_I", "invert_alpha", "normalization_factors",
    "threshold_ell",
]
