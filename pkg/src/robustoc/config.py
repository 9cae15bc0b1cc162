"""Run configuration: one JSON document, validated before anything is computed."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HarmonicConfig(_Strict):
    kind: Literal["harmonic"] = "harmonic"
    dx: float = 5.0
    grid_points: int = Field(512, ge=64)
    x_range: Optional[float] = Field(None, gt=0)


class LandauZenerConfig(_Strict):
    kind: Literal["landau_zener"] = "landau_zener"
    omega: float = Field(1.0, gt=0)
    u_start: float = Field(-10.0, lt=0)
    u_end: float = Field(10.0, gt=0)


class GridConfig(_Strict):
    T: Optional[float] = Field(None, gt=0)
    N: int = Field(128, ge=4)


class OptimizerConfig(_Strict):
    step_weight: float = Field(0.5, gt=0)
    max_iters: int = Field(3000, gt=0)
    target_infidelity: float = Field(1e-20, gt=0)
    stall_tolerance: float = Field(1e-26, gt=0)


class HessianConfig(_Strict):
    backend: Literal["gateaux", "finite_difference", "fd", "bfgs"] = "gateaux"
    rel_threshold: float = Field(1e-8, gt=0, lt=1)
    compare_with: Optional[Literal["gateaux", "finite_difference", "fd", "bfgs"]] = None


class SingleFrequencyFamily(_Strict):
    kind: Literal["single_frequency"] = "single_frequency"
    kappa: int = Field(1, ge=1)


class FourierFamily(_Strict):
    kind: Literal["fourier"] = "fourier"
    n_harmonics: int = Field(5, ge=1)
    seed: int = Field(0, ge=0)


Family = Union[SingleFrequencyFamily, FourierFamily]


class CalibrationConfig(_Strict):
    families: List[Family] = Field(default_factory=lambda: [SingleFrequencyFamily(), FourierFamily()])
    infidelity_range: Tuple[float, float] = (1e-4, 0.15)
    n_strengths: int = Field(20, ge=1)
    strengths: Optional[List[float]] = None
    fit_c: Optional[Literal["fixed_half", "free"]] = None
    max_infidelity: float = Field(0.2, gt=0, le=1)

    @field_validator("infidelity_range")
    @classmethod
    def _range(cls, v):
        lo, hi = v
        if not (0 < lo < hi < 1):
            raise ValueError("infidelity_range must satisfy 0 < lo < hi < 1")
        return v

    @field_validator("strengths")
    @classmethod
    def _strengths(cls, v):
        if v is not None and any(not math.isfinite(s) or s < 0 for s in v):
            raise ValueError("strengths must be finite and non-negative")
        return v


class SamplerConfig(_Strict):
    kind: Literal["fourier", "single_frequency"] = "fourier"
    strength_lo: float = Field(0.0, ge=0)
    strength_hi: float = Field(0.1, ge=0)
    n_harmonics: int = Field(5, ge=1)
    kappa: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _order(self):
        if self.strength_hi < self.strength_lo:
            raise ValueError("strength_hi must be >= strength_lo")
        return self


class WeightsConfig(_Strict):
    bandwidth: float = Field(1.0, ge=0)
    slew: float = Field(0.0, ge=0)
    amplitude: float = Field(0.0, ge=0)


class EnsembleConfig(_Strict):
    J_target: float = Field(0.01, gt=0, le=0.2)
    count: int = Field(50, ge=0)
    sampler: SamplerConfig = SamplerConfig()
    slack: float = Field(0.25, ge=0)
    min_pass_fraction: float = Field(0.9, ge=0, le=1)
    weights: WeightsConfig = WeightsConfig()


class ReproduceConfig(_Strict):
    amplitudes: Optional[List[float]] = None
    realizations: int = Field(50, ge=1)


class RunConfig(_Strict):
    model: Union[HarmonicConfig, LandauZenerConfig] = Field(default_factory=HarmonicConfig, discriminator="kind")
    grid: GridConfig = GridConfig()
    objective: Optional[Literal["phase_sensitive", "overlap"]] = None
    optimizer: OptimizerConfig = OptimizerConfig()
    hessian: HessianConfig = HessianConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    reproduce: ReproduceConfig = ReproduceConfig()
    seed: int = Field(0, ge=0, lt=2 ** 64)
    out: str = "runs"

    @model_validator(mode="after")
    def _harmonic_objective(self):
        if self.model.kind == "harmonic" and self.objective == "phase_sensitive":
            raise ValueError("the harmonic transport cost is the overlap infidelity")
        return self

    @property
    def T(self) -> float:
        if self.grid.T is not None:
            return self.grid.T
        return 4.0 * math.pi if self.model.kind == "harmonic" else 10.0

    @property
    def resolved_objective(self) -> str:
        if self.objective is not None:
            return self.objective
        return "overlap" if self.model.kind == "harmonic" else "phase_sensitive"

    @property
    def resolved_fit_c(self) -> str:
        if self.calibration.fit_c is not None:
            return self.calibration.fit_c
        return "fixed_half" if self.model.kind == "harmonic" else "free"


def load_config(path: Optional[Union[str, Path]] = None, *, seed: Optional[int] = None,
                out: Optional[str] = None, backend: Optional[str] = None) -> RunConfig:
    """Read and validate a config file; command-line overrides win over file values."""
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError("configuration must be a JSON object")
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["out"] = out
    if backend is not None:
        data["hessian"] = {**data.get("hessian", {}), "backend": backend}
    return RunConfig.model_validate(data)
