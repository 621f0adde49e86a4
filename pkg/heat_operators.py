"""
Forward heat semigroup S = exp(-Lambda^2 T), the quarantined backward
oracle, and the affine fixed-point operator T phi = phi - gamma (S phi - f).
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from errors import GridMismatchError, SpectralOverflowError
from models import HeatProblem, SpectralGrid
from spectral_core import CoefVec, apply_spectral_function

log = logging.getLogger(__name__)

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def _check_grid(problem: HeatProblem, v: CoefVec, what: str) -> None:
    if v.grid is not problem.grid and v.grid != problem.grid:
        raise GridMismatchError(f"{what} is not on the problem's spectral grid")


def semigroup_factors(problem: HeatProblem) -> np.ndarray:
    """exp(-lambda_j^2 T) for every retained mode."""
    lam = problem.grid.values
    with np.errstate(under="ignore"):
        return np.exp(-lam * lam * problem.horizon)


def forward_solve(problem: HeatProblem, phi: CoefVec) -> CoefVec:
    """w(T) for the initial value problem w(0) = phi."""
    _check_grid(problem, phi, "initial profile")
    horizon = problem.horizon
    return apply_spectral_function(phi, lambda lam: np.exp(-lam * lam * horizon))


def backward_exact_oracle(problem: HeatProblem, f: CoefVec) -> CoefVec:
    """
    Closed-form u(0) = exp(Lambda^2 T) f.

    This is the ill-posed inversion itself: mode j is amplified by
    exp(lambda_j^2 T). It exists to verify small cases, never as a solver.
    """
    _check_grid(problem, f, "final profile")
    exponents = problem.grid.values ** 2 * problem.horizon
    out = np.zeros_like(f.coef)
    for idx in np.nonzero(f.coef)[0]:
        exponent = exponents[idx]
        if exponent + math.log(abs(f.coef[idx])) >= _LOG_FLOAT_MAX or exponent >= _LOG_FLOAT_MAX:
            raise SpectralOverflowError(
                f"backward oracle overflows on mode {idx + 1}: amplification exp({exponent:.6g})",
                mode=int(idx) + 1,
                factor=exponent,
            )
        out[idx] = math.exp(exponent) * f.coef[idx]
    return CoefVec(f.grid, out)


@dataclass(frozen=True)
class GammaBounds:
    loose_upper: float
    strict_upper: Optional[float]
    lambda_tilde: Optional[float]

    @property
    def strict_defined(self) -> bool:
        return self.strict_upper is not None

    def admits(self, gamma: float) -> bool:
        return 0 < gamma < self.loose_upper

    def injective(self, gamma: float) -> Optional[bool]:
        if self.strict_upper is None:
            return None
        return 0 < gamma < self.strict_upper


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < _LOG_FLOAT_MAX else math.inf


def gamma_bounds(grid: SpectralGrid, horizon: float) -> GammaBounds:
    """
    loose_upper = 2 exp(lambda_min^2 T) bounds the admissible gamma.
    strict_upper = 2 exp(lambda_tilde^2 T) with
    lambda_tilde = (lambda_min^2 - ln 2 / T)^(1/2) is the injectivity bound;
    it is absent (None) when lambda_min^2 T < ln 2.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    lam_min = grid.lambda_min
    loose = 2.0 * _safe_exp(lam_min ** 2 * horizon)
    tilde_sq = lam_min ** 2 - math.log(2.0) / horizon
    if tilde_sq < 0:
        log.debug("lambda_tilde undefined: lambda_min^2 T = %g < ln 2", lam_min ** 2 * horizon)
        return GammaBounds(loose_upper=loose, strict_upper=None, lambda_tilde=None)
    lam_tilde = math.sqrt(tilde_sq)
    strict = 2.0 * _safe_exp(lam_tilde ** 2 * horizon)
    return GammaBounds(loose_upper=loose, strict_upper=strict, lambda_tilde=lam_tilde)


def tl_factors(problem: HeatProblem) -> np.ndarray:
    """tau_j = 1 - gamma exp(-lambda_j^2 T), the spectrum of T_l."""
    return 1.0 - problem.gamma * semigroup_factors(problem)


def tl_apply(problem: HeatProblem, phi: CoefVec) -> CoefVec:
    _check_grid(problem, phi, "argument")
    return CoefVec(phi.grid, tl_factors(problem) * phi.coef)


@dataclass(frozen=True, eq=False)
class TlSpectrum:
    values: np.ndarray
    zero_modes: List[int]

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def nonexpansive(self) -> bool:
        return self.max_abs <= 1.0

    @property
    def injective(self) -> bool:
        return not self.zero_modes


def tl_spectrum(problem: HeatProblem) -> TlSpectrum:
    tau = tl_factors(problem)
    zero_modes = [int(j) + 1 for j in np.nonzero(tau == 0.0)[0]]
    if zero_modes:
        log.warning("T_l is not injective: tau_j = 0 exactly on modes %s", zero_modes)
    return TlSpectrum(values=tau, zero_modes=zero_modes)


@dataclass(frozen=True, eq=False)
class AffineFixedPointOp:
    """T phi = phi - gamma (w(T) - f), w the forward solution from phi."""

    problem: HeatProblem
    data: CoefVec

    def __post_init__(self):
        _check_grid(self.problem, self.data, "data")

    def __call__(self, phi: CoefVec) -> CoefVec:
        return fixed_point_apply(self, phi)

    def defect(self, phi: CoefVec) -> CoefVec:
        """(I - T) phi."""
        return phi - self(phi)


def fixed_point_apply(op: AffineFixedPointOp, phi: CoefVec) -> CoefVec:
    _check_grid(op.problem, phi, "iterate")
    w_final = forward_solve(op.problem, phi)
    gamma = op.problem.gamma
    return CoefVec(phi.grid, phi.coef - gamma * (w_final.coef - op.data.coef))


def fixed_point_apply_diagonal(op: AffineFixedPointOp, phi: CoefVec) -> CoefVec:
    """Same operator in the form (I - gamma S) phi + gamma f."""
    _check_grid(op.problem, phi, "iterate")
    return CoefVec(phi.grid, tl_factors(op.problem) * phi.coef + op.problem.gamma * op.data.coef)
