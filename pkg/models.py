import math
from functools import lru_cache
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


@lru_cache(maxsize=128)
def _eigen_array(eigenvalues: Tuple[float, ...]) -> np.ndarray:
    values = np.asarray(eigenvalues, dtype=float)
    values.setflags(write=False)
    return values


class SpectralGrid(BaseModel):
    """Truncated discrete spectrum of Lambda; mode j multiplies sin(j t)."""

    model_config = ConfigDict(frozen=True)

    eigenvalues: Tuple[float, ...]

    @field_validator("eigenvalues")
    @classmethod
    def check_spectrum(cls, v):
        if len(v) == 0:
            raise ValueError("a spectral grid needs at least one mode")
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("eigenvalues must be finite")
        if arr[0] <= 0:
            raise ValueError(f"eigenvalues must be strictly positive, got {arr[0]} on mode 1")
        bad = np.nonzero(np.diff(arr) < 0)[0]
        if bad.size:
            j = int(bad[0]) + 2
            raise ValueError(f"eigenvalues must be nondecreasing, mode {j} drops below mode {j - 1}")
        return tuple(float(x) for x in arr)

    @classmethod
    def laplacian(cls, n_modes: int = 64) -> "SpectralGrid":
        """Lambda = (-Laplacian)^(1/2) on (-pi, pi): lambda_j = j."""
        if n_modes < 1:
            raise ValueError("n_modes must be positive")
        return cls(eigenvalues=tuple(float(j) for j in range(1, n_modes + 1)))

    @classmethod
    def linear_square(cls, n_modes: int, offset: float, slope: float) -> "SpectralGrid":
        """Spectrum with lambda_j^2 = offset + slope * j."""
        if n_modes < 1:
            raise ValueError("n_modes must be positive")
        return cls(eigenvalues=tuple(math.sqrt(offset + slope * j) for j in range(1, n_modes + 1)))

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def lambda_min(self) -> float:
        return self.eigenvalues[0]

    @property
    def values(self) -> np.ndarray:
        return _eigen_array(self.eigenvalues)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1)


class HeatProblem(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: SpectralGrid
    horizon: float = 1.0
    gamma: float = 1.0

    @model_validator(mode="after")
    def check_gamma(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        exponent = self.grid.lambda_min ** 2 * self.horizon
        # open interval (0, 2 exp(lambda_min^2 T)); an overflowing bound admits every gamma
        upper = 2.0 * math.exp(exponent) if exponent < 709.0 else math.inf
        if not (0 < self.gamma < upper):
            raise ValueError(
                f"gamma={self.gamma} outside the admissible interval (0, {upper:.12g}) "
                f"= (0, 2 exp(lambda_min^2 T))"
            )
        return self

    @classmethod
    def default(cls, n_modes: int = 64, horizon: float = 1.0, gamma: float = 1.0) -> "HeatProblem":
        return cls(grid=SpectralGrid.laplacian(n_modes), horizon=horizon, gamma=gamma)

    def describe(self) -> Dict[str, object]:
        return {
            "n_modes": self.grid.n_modes,
            "horizon": self.horizon,
            "gamma": self.gamma,
            "lambda_min": self.grid.lambda_min,
        }


class StoppingRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float = 1.5
    max_iter: int = 10000
    tol: Optional[float] = None

    @field_validator("mu")
    @classmethod
    def check_mu(cls, v):
        if not v > 1:
            raise ValueError(f"discrepancy factor mu must exceed 1, got {v}")
        return v

    @field_validator("max_iter")
    @classmethod
    def check_cap(cls, v):
        if v < 1:
            raise ValueError("max_iter must be at least 1")
        return v

    def require_source_rates(self) -> None:
        if not self.mu > 2:
            raise ValueError(f"source-condition rates need mu > 2, got {self.mu}")


def _split_list(v):
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


# --- experiment configuration, one model per config section ---

class ProblemSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_modes: int = 64
    horizon: float = 1.0
    gamma: float = 1.0
    spectrum: Literal["laplacian", "linear-square"] = "laplacian"
    spectrum_offset: float = 0.75
    spectrum_slope: float = 0.25

    def build(self) -> HeatProblem:
        if self.n_modes < 1:
            raise ValueError("problem.n_modes must be positive")
        if self.spectrum == "laplacian":
            grid = SpectralGrid.laplacian(self.n_modes)
        else:
            grid = SpectralGrid.linear_square(self.n_modes, self.spectrum_offset, self.spectrum_slope)
        return HeatProblem(grid=grid, horizon=self.horizon, gamma=self.gamma)


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    generator: str = "single-mode"
    mode: int = 1
    p: float = 1.0
    source_profile: Literal["flat", "graded"] = "flat"
    file: Optional[str] = None


class NoiseSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps: List[float] = Field(default_factory=list)
    profile: Literal["single_mode_worst", "white", "high_mode"] = "white"
    seeds: List[int] = Field(default_factory=lambda: [0])

    @field_validator("eps", "seeds", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_list(v)

    @field_validator("eps")
    @classmethod
    def check_eps(cls, v):
        if any(not (e > 0) for e in v):
            raise ValueError("every noise level in noise.eps must be strictly positive")
        return sorted(v, reverse=True)


class ScheduleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["constant", "picard", "harmonic", "geometric"] = "picard"
    d: float = 0.5

    @field_validator("d")
    @classmethod
    def check_d(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"schedule.d must lie in [0, 1], got {v}")
        return v


class StoppingSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # unset: 2.5 for source-condition data, 1.5 otherwise
    mu: Optional[float] = None
    max_iter: int = 10000
    tol: Optional[float] = None

    def build(self, source_condition: bool = False) -> StoppingRule:
        mu = self.mu if self.mu is not None else (2.5 if source_condition else 1.5)
        return StoppingRule(mu=mu, max_iter=self.max_iter, tol=self.tol)


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = "out"
    points: int = 0


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    parallel: int = 1
    allow_oracle: bool = False


class ExperimentConfig(BaseModel):
    problem: ProblemSection = Field(default_factory=ProblemSection)
    data: DataSection = Field(default_factory=DataSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    stopping: StoppingSection = Field(default_factory=StoppingSection)
    output: OutputSection = Field(default_factory=OutputSection)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def check_bounds(self):
        # gamma against the grid's admissible interval, before any run
        self.problem.build()
        self.stopping_rule()
        if not 1 <= self.data.mode <= self.problem.n_modes:
            raise ValueError(f"data.mode={self.data.mode} outside 1..{self.problem.n_modes}")
        if self.run.parallel < 1:
            raise ValueError("run.parallel must be at least 1")
        return self

    def stopping_rule(self) -> StoppingRule:
        return self.stopping.build(source_condition=self.data.generator == "source-condition")

    def to_flat(self) -> Dict[str, str]:
        flat: Dict[str, str] = {}
        for section, model in self:
            for key, value in model:
                if value is None:
                    continue
                if isinstance(value, list):
                    text = ",".join(repr(item) for item in value)
                elif isinstance(value, bool):
                    text = "true" if value else "false"
                elif isinstance(value, float):
                    text = repr(value)
                else:
                    text = str(value)
                flat[f"{section}.{key}"] = text
        return flat


class TrialResult(BaseModel):
    eps: float
    seed: int
    mu: float
    gamma: float
    p: Optional[float] = None
    schedule: str
    k_stop: int
    stopped_by: str
    final_residual: float
    final_error: Optional[float] = None
    sum_bound_rhs: Optional[float] = None

    @property
    def bound_ok(self) -> Optional[bool]:
        if self.sum_bound_rhs is None:
            return None
        return self.k_stop <= self.sum_bound_rhs
