"""
Noisy data, residuals, discrepancy-principle stopping, the energy identity
of a Picard step, logarithmic source conditions and rate fitting.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigError, NoiseLevelError, SpectralDomainError
from heat_operators import forward_solve, semigroup_factors, tl_apply
from mann import RunRecord, SegmentingSchedule, picard_schedule, run_iteration
from models import HeatProblem, StoppingRule
from spectral_core import CoefVec

log = logging.getLogger(__name__)

NOISE_PROFILES = ("single_mode_worst", "white", "high_mode")
RATE_MODELS = ("power", "log_power")

SeedLike = Union[int, np.random.Generator]


@dataclass(frozen=True, eq=False)
class NoisyData:
    f: CoefVec
    f_eps: CoefVec
    eps: float
    profile: str = "white"
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.eps >= 0:
            raise NoiseLevelError(f"noise level must be nonnegative, got {self.eps}")
        distance = (self.f - self.f_eps).norm()
        if distance > self.eps + 1e-12 * max(1.0, self.f.norm()):
            raise NoiseLevelError(f"|f - f_eps| = {distance:.6e} exceeds the noise level {self.eps:.6e}")


def add_noise(f: CoefVec, eps: float, seed: SeedLike = 0, profile: str = "white") -> NoisyData:
    """
    Perturb f by exactly eps in H^0. The direction is drawn per profile and
    rescaled; the same seed always gives the same f_eps.
    """
    if not eps >= 0:
        raise NoiseLevelError(f"noise level must be nonnegative, got {eps}")
    if profile not in NOISE_PROFILES:
        raise NoiseLevelError(f"unknown noise profile {profile!r}; choose from {NOISE_PROFILES}")
    seed_value = seed if isinstance(seed, int) else None
    if eps == 0:
        return NoisyData(f=f, f_eps=f, eps=0.0, profile=profile, seed=seed_value)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = f.grid.n_modes
    direction = np.zeros(n)
    if profile == "single_mode_worst":
        # the last mode carries the largest amplification exp(lambda_N^2 T)
        direction[-1] = 1.0 if rng.random() < 0.5 else -1.0
    elif profile == "white":
        direction = rng.standard_normal(n)
    else:
        start = n - max(1, n // 4)
        direction[start:] = rng.standard_normal(n - start)
    scale = float(np.linalg.norm(direction))
    if scale == 0.0:
        raise NoiseLevelError("drawn noise direction vanished; use another seed")
    delta = direction * (eps / scale)
    return NoisyData(f=f, f_eps=CoefVec(f.grid, f.coef + delta), eps=float(eps),
                     profile=profile, seed=seed_value)


def residual(problem: HeatProblem, data: CoefVec, x: CoefVec) -> CoefVec:
    """r = gamma f - (I - T_l) x = gamma (f - S x)."""
    return (data - forward_solve(problem, x)) * problem.gamma


# --- stopping predicates ---

@dataclass(frozen=True)
class DiscrepancyStop:
    mu: float
    eps: float
    name: str = "discrepancy"

    @property
    def threshold(self) -> float:
        return self.mu * self.eps

    def __call__(self, k: int, residual_norm: float) -> bool:
        return residual_norm <= self.threshold


@dataclass(frozen=True)
class ToleranceStop:
    tol: float
    name: str = "tolerance"

    def __call__(self, k: int, residual_norm: float) -> bool:
        return residual_norm <= self.tol


def discrepancy_stop(rule: StoppingRule, eps: float) -> DiscrepancyStop:
    """Fires at the first k with ||r_k^eps|| <= mu eps."""
    if not eps > 0:
        raise ConfigError("the discrepancy principle needs eps > 0; use a residual tolerance for exact data")
    if not rule.mu > 1:
        raise ConfigError(f"discrepancy factor mu must exceed 1, got {rule.mu}")
    return DiscrepancyStop(mu=rule.mu, eps=eps)


def residual_tolerance_stop(tol: float) -> ToleranceStop:
    if not tol >= 0:
        raise ConfigError(f"residual tolerance must be nonnegative, got {tol}")
    return ToleranceStop(tol=tol)


def run_discrepancy(problem: HeatProblem, noisy: NoisyData, x1: CoefVec, rule: StoppingRule,
                    schedule: Optional[SegmentingSchedule] = None,
                    reference: Optional[CoefVec] = None) -> RunRecord:
    return run_iteration(problem, noisy.f_eps, x1, schedule or picard_schedule(), rule.max_iter,
                         stop=discrepancy_stop(rule, noisy.eps), reference=reference)


def stopping_index_bound(mu: float, eps: float, initial_error: float) -> float:
    """ceil((mu - 1)^-2 |x_bar - x1|^2 eps^-2) + 1, the explicit O(eps^-2) bound."""
    if not (mu > 1 and eps > 0):
        raise ConfigError("the stopping-index bound needs mu > 1 and eps > 0")
    return float(math.ceil(initial_error ** 2 / ((mu - 1.0) ** 2 * eps ** 2)) + 1)


def energy_identity_check(problem: HeatProblem, data: CoefVec, x_bar: CoefVec,
                          x_j: CoefVec, x_j1: CoefVec) -> float:
    """
    |lhs - rhs| for one exact-data Picard step, where
    lhs = |x_bar - x_{j+1}|^2 and
    rhs = |x_bar - x_j|^2 - |gamma f - (I - T_l) x_j|^2
          - 2 <(I - T_l)(x_bar - x_j), T_l (x_bar - x_j)>.
    """
    err = x_bar - x_j
    tl_err = tl_apply(problem, err)
    p_err = err - tl_err
    r = residual(problem, data, x_j)
    lhs = (x_bar - x_j1).norm() ** 2
    rhs = err.norm() ** 2 - r.norm() ** 2 - 2.0 * float(np.dot(p_err.coef, tl_err.coef))
    return abs(lhs - rhs)


# --- logarithmic source conditions ---

@dataclass(frozen=True, eq=False)
class SourceCondition:
    """x_bar - x1 = F(I - T_l) y with F(lam) = (ln(e / lam))^-p."""

    p: float
    y: CoefVec

    def __post_init__(self):
        if not self.p > 0:
            raise ConfigError(f"source exponent p must be positive, got {self.p}")

    def require_rate_hypotheses(self) -> None:
        if self.p < 1:
            raise ConfigError(f"iterate rates need p >= 1, got {self.p}")


def log_source_function(lam: Union[float, np.ndarray], p: float) -> np.ndarray:
    """F(lam) = (ln(e/lam))^-p for lam > 0 and F(0) = 0; defined on [0, e)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam >= math.e):
        raise SpectralDomainError(f"F is defined on [0, e) only, got values in [{lam.min()}, {lam.max()}]")
    out = np.zeros_like(lam)
    positive = lam > 0
    out[positive] = np.log(math.e / lam[positive]) ** (-p)
    return out


@dataclass(frozen=True, eq=False)
class SourceBuild:
    solution: CoefVec
    data: CoefVec


def source_logs(problem: HeatProblem) -> np.ndarray:
    """ln(e / s_j) for the spectral values s_j = gamma exp(-lambda_j^2 T) of I - T_l."""
    lam = problem.grid.values
    return 1.0 - math.log(problem.gamma) + lam * lam * problem.horizon


def source_condition_build(problem: HeatProblem, sc: SourceCondition, x1: CoefVec) -> SourceBuild:
    """
    x_bar = x1 + F(I - T_l) y and the data f = S x_bar it induces.
    Where s_j underflows below the normal range, ln(e/s_j) is taken in closed
    form so those modes keep their exact weight.
    """
    logs = source_logs(problem)
    s = problem.gamma * semigroup_factors(problem)
    bad = np.nonzero(logs <= 0)[0]
    if bad.size:
        j = int(bad[0]) + 1
        raise SpectralDomainError(
            f"spectral value {s[j - 1]:.6g} of I - T_l on mode {j} is >= e; F is undefined there", mode=j
        )
    weights = logs ** (-sc.p)
    normal = s >= np.finfo(float).tiny
    weights[normal] = log_source_function(s[normal], sc.p)
    solution = CoefVec(x1.grid, x1.coef + weights * sc.y.coef)
    return SourceBuild(solution=solution, data=forward_solve(problem, solution))


# --- rate fitting ---

@dataclass(frozen=True)
class RateFit:
    model: str
    exponent: float
    coefficient: float
    max_rel_residual: float
    n_points: int

    def predict(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.model == "power":
            return self.coefficient * x ** self.exponent
        return self.coefficient * np.log(x) ** (-self.exponent)


def rate_fit(points: Sequence[Tuple[float, float]], model: str = "power") -> RateFit:
    """
    Least squares in transformed coordinates.

    power:     value = C * x^alpha, exponent = alpha
    log_power: value = C * (ln x)^-p, exponent = p; points with ln x < 1
               are pre-asymptotic and dropped
    """
    if model not in RATE_MODELS:
        raise ConfigError(f"unknown rate model {model!r}; choose from {RATE_MODELS}")
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 4 or arr.shape[1] != 2:
        raise ConfigError("rate fitting needs at least 4 (abscissa, value) pairs")
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ConfigError("rate fitting needs positive finite abscissae and values")
    x, y = arr[:, 0], arr[:, 1]
    if model == "log_power":
        keep = np.log(x) >= 1.0
        if np.count_nonzero(~keep):
            log.debug("dropping %d pre-asymptotic points with ln x < 1", int(np.count_nonzero(~keep)))
        x, y = x[keep], y[keep]
        t = np.log(np.log(x)) if x.size else x
    else:
        t = np.log(x)
    if x.size < 3 or np.ptp(t) == 0:
        raise ConfigError("degenerate rate data: abscissae do not vary")
    slope, intercept = np.polyfit(t, np.log(y), 1)
    exponent = float(slope) if model == "power" else float(-slope)
    fit = RateFit(model=model, exponent=exponent, coefficient=float(np.exp(intercept)),
                  max_rel_residual=0.0, n_points=int(x.size))
    max_rel = float(np.max(np.abs(fit.predict(x) - y) / y))
    return replace(fit, max_rel_residual=max_rel)
