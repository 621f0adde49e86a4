"""
End-to-end invariant suite behind `app.py verify`.

Every check is deterministic: random inputs come from fixed seeds, so two
runs print identical tables.
"""
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from heat_operators import (AffineFixedPointOp, backward_exact_oracle, fixed_point_apply,
                            fixed_point_apply_diagonal, forward_solve, gamma_bounds,
                            tl_factors, tl_spectrum)
from mann import (IterationState, MannMatrix, constant_schedule, distance_nonincreasing,
                  harmonic_schedule, mann_step_general, mann_step_segmenting, picard_schedule,
                  run_iteration)
from models import HeatProblem, SpectralGrid, StoppingRule
from regularization import (SourceCondition, add_noise, discrepancy_stop, energy_identity_check,
                            residual_tolerance_stop, source_condition_build,
                            stopping_index_bound)
from spectral_core import CoefVec, hs_norm


FAULTS = ("flip_data_sign",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        mark = "✅" if self.passed else "❌"
        return f"{mark} {self.name}: {self.detail}"


def _random_vec(grid: SpectralGrid, rng: np.random.Generator) -> CoefVec:
    return CoefVec(grid, rng.standard_normal(grid.n_modes))


def check_gamma_bounds() -> CheckResult:
    bounds = gamma_bounds(SpectralGrid.laplacian(64), 1.0)
    expected_tilde = math.sqrt(1.0 - math.log(2.0))
    ok = (
        bounds.lambda_tilde is not None
        and abs(bounds.loose_upper - 2.0 * math.e) <= 1e-14 * 2.0 * math.e
        and abs(bounds.strict_upper - math.e) <= 1e-14 * math.e
        and abs(bounds.lambda_tilde - expected_tilde) <= 1e-14
        and bounds.admits(1.0)
    )
    return CheckResult("gamma bounds", ok,
                       f"loose={bounds.loose_upper:.15g} strict={bounds.strict_upper} "
                       f"lambda_tilde={bounds.lambda_tilde}")


def check_nonexpansive() -> CheckResult:
    rng = np.random.default_rng(11)
    problem = HeatProblem.default(n_modes=8)
    op = AffineFixedPointOp(problem, _random_vec(problem.grid, rng))
    spectrum = tl_spectrum(problem)
    worst = 0.0
    for _ in range(50):
        x, y = _random_vec(problem.grid, rng), _random_vec(problem.grid, rng)
        worst = max(worst, (op(x) - op(y)).norm() / (x - y).norm())
    ok = spectrum.nonexpansive and worst <= 1.0 + 1e-12
    return CheckResult("nonexpansivity", ok,
                       f"max|tau|={spectrum.max_abs:.6f} worst ratio={worst:.6f}")


def check_fixed_point() -> CheckResult:
    rng = np.random.default_rng(12)
    problem = HeatProblem(grid=SpectralGrid.laplacian(8), horizon=0.05, gamma=1.0)
    x_bar = _random_vec(problem.grid, rng)
    f = forward_solve(problem, x_bar)
    op = AffineFixedPointOp(problem, f)
    defect = (fixed_point_apply(op, x_bar) - x_bar).norm() / x_bar.norm()
    oracle = backward_exact_oracle(problem, f)
    record = run_iteration(problem, f, CoefVec.zeros(problem.grid), picard_schedule(), 2000,
                           stop=residual_tolerance_stop(0.0))
    rel = (record.x - oracle).norm() / oracle.norm()
    ok = defect <= 1e-12 and rel <= 1e-10
    return CheckResult("fixed-point consistency", ok,
                       f"|T x - x|/|x|={defect:.2e} |x_k - oracle|/|oracle|={rel:.2e}")


def _flipped_data_step(op: AffineFixedPointOp, phi: CoefVec) -> CoefVec:
    return CoefVec(phi.grid, tl_factors(op.problem) * phi.coef - op.problem.gamma * op.data.coef)


def check_energy_identity(fault: Optional[str] = None) -> CheckResult:
    step: Callable[[AffineFixedPointOp, CoefVec], CoefVec] = fixed_point_apply_diagonal
    if fault == "flip_data_sign":
        step = _flipped_data_step
    rng = np.random.default_rng(13)
    grid = SpectralGrid.laplacian(8)
    problem = HeatProblem(grid=grid, horizon=0.1, gamma=1.0)
    worst = 0.0
    for _ in range(20):
        x_bar = _random_vec(grid, rng)
        f = forward_solve(problem, x_bar)
        op = AffineFixedPointOp(problem, f)
        x = _random_vec(grid, rng)
        for _ in range(10):
            x_next = step(op, x)
            scale = max(1.0, (x_bar - x).norm() ** 2)
            worst = max(worst, energy_identity_check(problem, f, x_bar, x, x_next) / scale)
            x = x_next
    return CheckResult("energy identity", worst <= 1e-12, f"max relative defect={worst:.2e}")


def check_segmenting_general() -> CheckResult:
    rng = np.random.default_rng(14)
    problem = HeatProblem(grid=SpectralGrid.laplacian(8), horizon=0.1, gamma=1.0)
    op = AffineFixedPointOp(problem, _random_vec(problem.grid, rng))
    x1 = _random_vec(problem.grid, rng)
    worst = 0.0
    for schedule in (constant_schedule(0.1), constant_schedule(0.5), constant_schedule(0.9),
                     harmonic_schedule()):
        matrix = MannMatrix(schedule=schedule)
        seg = IterationState.start(x1)
        gen = IterationState.start(x1, keep_history=True)
        for _ in range(60):
            seg = mann_step_segmenting(seg, schedule, op)
            gen = mann_step_general(gen, matrix, op)
            worst = max(worst, (seg.v - gen.v).norm() / max(1.0, gen.v.norm()))
    return CheckResult("segmenting/general equivalence", worst <= 1e-12, f"max |v diff|={worst:.2e}")


def check_distance_monotone() -> CheckResult:
    rng = np.random.default_rng(17)
    problem = HeatProblem.default(n_modes=8)
    x_bar = _random_vec(problem.grid, rng)
    f = forward_solve(problem, x_bar)
    ok = True
    for schedule in (constant_schedule(0.5), picard_schedule()):
        record = run_iteration(problem, f, _random_vec(problem.grid, rng), schedule, 300,
                               reference=x_bar)
        ok = ok and distance_nonincreasing(record)
    return CheckResult("distance monotonicity", ok, "|v_k - x_bar| nonincreasing after burn-in")


def check_source_isometry() -> CheckResult:
    rng = np.random.default_rng(15)
    problem = HeatProblem.default()
    worst = 0.0
    for p in (0.5, 1.0, 2.0):
        y = _random_vec(problem.grid, rng)
        y = y * (1.0 / y.norm())
        x1 = CoefVec.zeros(problem.grid)
        built = source_condition_build(problem, SourceCondition(p=p, y=y), x1)
        worst = max(worst, abs(hs_norm(built.solution - x1, 2 * p) - 1.0))
    return CheckResult("source isometry", worst <= 1e-12, f"max |hs_norm - |y||={worst:.2e}")


def check_residual_monotone() -> CheckResult:
    rng = np.random.default_rng(16)
    problem = HeatProblem.default(n_modes=16)
    worst_rise = 0.0
    for seed in range(10):
        f = forward_solve(problem, _random_vec(problem.grid, rng))
        noisy = add_noise(f, 1e-3, seed, "white")
        record = run_iteration(problem, noisy.f_eps, _random_vec(problem.grid, rng),
                               picard_schedule(), 200)
        r = record.residual_norms
        worst_rise = max([worst_rise] + [b - a for a, b in zip(r, r[1:])])
    return CheckResult("residual monotonicity", worst_rise <= 1e-12, f"max rise={worst_rise:.2e}")


def check_stopping_bound() -> CheckResult:
    problem = HeatProblem.default()
    j = problem.grid.modes.astype(float)
    coef = 1.0 / j
    x_bar = CoefVec(problem.grid, coef / np.linalg.norm(coef))
    x1 = CoefVec.zeros(problem.grid)
    f = forward_solve(problem, x_bar)
    rule = StoppingRule(mu=1.5, max_iter=100000)
    failures = 0
    trials = 0
    for eps in (1e-1, 3e-2, 1e-2):
        for seed in (0, 1):
            noisy = add_noise(f, eps, seed, "white")
            record = run_iteration(problem, noisy.f_eps, x1, picard_schedule(), rule.max_iter,
                                   stop=discrepancy_stop(rule, eps))
            bound = stopping_index_bound(rule.mu, eps, (x_bar - x1).norm())
            trials += 1
            if record.stopped_by != "discrepancy" or record.stop_index > bound:
                failures += 1
    return CheckResult("stopping-index bound", failures == 0, f"{trials - failures}/{trials} trials within bound")


def run_checks(fault: Optional[str] = None) -> List[CheckResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    return [
        check_gamma_bounds(),
        check_nonexpansive(),
        check_fixed_point(),
        check_energy_identity(fault),
        check_segmenting_general(),
        check_distance_monotone(),
        check_source_isometry(),
        check_residual_monotone(),
        check_stopping_bound(),
    ]


def cmd_verify(fault: Optional[str] = None) -> int:
    results = run_checks(fault)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"Verification failed: first failing check is {failed[0].name!r}")
        return 1
    print("Verification complete.")
    return 0
