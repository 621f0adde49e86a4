"""
Experiment drivers behind the command-line verbs.

Each driver takes a validated ExperimentConfig, writes its artifacts into
output.dir next to a manifest.json that is enough to reproduce them, prints
a short summary to stdout and returns the process exit code.
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from data_generators import GeneratedData, generate
from errors import ConfigError, SpectralOverflowError
from heat_operators import backward_exact_oracle, gamma_bounds
from mann import run_iteration, schedule_by_name
from models import (DataSection, ExperimentConfig, HeatProblem, ProblemSection,
                    ScheduleSection, StoppingRule, StoppingSection, TrialResult)
from regularization import (RateFit, add_noise, discrepancy_stop, rate_fit,
                            residual_tolerance_stop, stopping_index_bound)
from scheduler import run_trials
from spectral_core import CoefVec, synthesize

log = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"

SWEEP_COLUMNS = ["eps", "seed", "mu", "gamma", "p", "schedule", "k_stop", "stopped_by",
                 "final_residual", "final_error", "sum_bound_rhs", "bound_ok"]
MIN_FIT_LEVELS = 4

SCENARIOS: Dict[str, ExperimentConfig] = {
    # N=64, T=1, gamma=1, f = e^-1 sin t, x1 = 0, d_k = 1
    "worked-example": ExperimentConfig(
        problem=ProblemSection(n_modes=64, horizon=1.0, gamma=1.0),
        data=DataSection(generator="single-mode", mode=1),
        schedule=ScheduleSection(name="picard"),
        stopping=StoppingSection(max_iter=60),
    ),
}


def scenario(name: str) -> ExperimentConfig:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_json(path: Path, payload: Dict[str, object]) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gamma_report(problem: HeatProblem) -> Tuple[Dict[str, object], bool]:
    bounds = gamma_bounds(problem.grid, problem.horizon)
    exceeded = bounds.injective(problem.gamma) is not True
    if exceeded:
        if bounds.strict_defined:
            log.warning("gamma=%g exceeds the injectivity bound 2 exp(lambda_tilde^2 T) = %.12g",
                        problem.gamma, bounds.strict_upper)
        else:
            log.warning("injectivity bound undefined: lambda_min^2 T < ln 2")
    report = {
        "loose_upper": bounds.loose_upper,
        "strict_upper": bounds.strict_upper,
        "lambda_tilde": bounds.lambda_tilde,
    }
    return report, exceeded


def _base_manifest(command: str, config: ExperimentConfig) -> Dict[str, object]:
    return {
        "tool_version": TOOL_VERSION,
        "command": command,
        "config": config.to_flat(),
    }


def _require_rate_hypotheses(generated: GeneratedData, rule: StoppingRule) -> None:
    """Noisy source-condition runs need mu > 2 and p >= 1."""
    if generated.source is None:
        return
    try:
        rule.require_source_rates()
    except ValueError as e:
        raise ConfigError(f"stopping.mu: {e}") from e
    generated.source.require_rate_hypotheses()


def _reference(problem: HeatProblem, generated: GeneratedData, allow_oracle: bool) -> Optional[CoefVec]:
    if generated.solution is not None:
        return generated.solution
    if not allow_oracle:
        return None
    try:
        return backward_exact_oracle(problem, generated.data)
    except SpectralOverflowError as e:
        log.warning("no error trace: %s", e)
        return None


def sample_points(n: int) -> np.ndarray:
    """n equispaced points strictly inside (-pi, pi)."""
    return np.linspace(-math.pi, math.pi, n + 2)[1:-1]


def write_samples(path: Path, v: CoefVec, n: int) -> None:
    t = sample_points(n)
    values = synthesize(v, t)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["t", "value"], lineterminator="\n")
        writer.writeheader()
        for ti, yi in zip(t, values):
            writer.writerow({"t": _fmt(float(ti)), "value": _fmt(float(yi))})


# --- solve ---

def cmd_solve(config: ExperimentConfig) -> int:
    problem = config.problem.build()
    rule = config.stopping_rule()
    gamma_report, exceeded = _gamma_report(problem)
    generated = generate(problem, config.data)
    schedule = schedule_by_name(config.schedule.name, config.schedule.d)

    noise_info = None
    data = generated.data
    if config.noise.eps:
        eps, seed = config.noise.eps[0], config.noise.seeds[0]
        if len(config.noise.eps) > 1 or len(config.noise.seeds) > 1:
            log.warning("solve uses eps=%g seed=%d only; run sweep for the full grid", eps, seed)
        _require_rate_hypotheses(generated, rule)
        noisy = add_noise(data, eps, seed, config.noise.profile)
        data = noisy.f_eps
        stop = discrepancy_stop(rule, eps)
        noise_info = {"eps": eps, "seed": seed, "profile": config.noise.profile}
    else:
        stop = residual_tolerance_stop(rule.tol if rule.tol is not None else 0.0)

    reference = _reference(problem, generated, config.run.allow_oracle)
    record = run_iteration(problem, data, generated.x1, schedule, rule.max_iter,
                           stop=stop, reference=reference)

    out = _out_dir(config)
    artifacts = ["run.csv", "reconstruction.json"]
    record.write_csv(out / "run.csv")
    record.x.save(out / "reconstruction.json")
    if config.output.points > 0:
        write_samples(out / "samples.csv", record.x, config.output.points)
        artifacts.append("samples.csv")

    manifest = _base_manifest("solve", config)
    manifest.update({
        "gamma_bounds": gamma_report,
        "injectivity_bound_exceeded": exceeded,
        "noise": noise_info,
        "run": record.manifest(),
        "artifacts": artifacts,
    })
    _write_json(out / "manifest.json", manifest)

    print(f"solve: {record.scheme} stopped by {record.stopped_by} at k={record.stop_index}")
    print(f"  residual  {record.final_residual:.6e}")
    if record.final_error is not None:
        print(f"  error     {record.final_error:.6e}")
    if exceeded:
        print("  ⚠️ gamma exceeds the injectivity bound")
    print(f"  artifacts {out}")
    return 0


# --- sweep ---

def _trial_fn(config: ExperimentConfig, problem: HeatProblem, generated: GeneratedData):
    rule = config.stopping_rule()
    schedule = schedule_by_name(config.schedule.name, config.schedule.d)
    initial_error = None
    if generated.solution is not None:
        initial_error = (generated.solution - generated.x1).norm()
    p = config.data.p if config.data.generator == "source-condition" else None

    def trial(eps: float, seed: int) -> TrialResult:
        noisy = add_noise(generated.data, eps, seed, config.noise.profile)
        record = run_iteration(problem, noisy.f_eps, generated.x1, schedule, rule.max_iter,
                               stop=discrepancy_stop(rule, eps), reference=generated.solution)
        bound = stopping_index_bound(rule.mu, eps, initial_error) if initial_error is not None else None
        return TrialResult(eps=eps, seed=seed, mu=rule.mu, gamma=problem.gamma, p=p,
                           schedule=schedule.name, k_stop=record.stop_index,
                           stopped_by=record.stopped_by, final_residual=record.final_residual,
                           final_error=record.final_error, sum_bound_rhs=bound)

    return trial


def write_sweep_csv(path: Path, results: List[TrialResult]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in results:
            row = r.model_dump()
            row["bound_ok"] = r.bound_ok
            writer.writerow({key: _fmt(row[key]) for key in SWEEP_COLUMNS})


def _per_level_means(results: List[TrialResult], attr: str) -> List[Tuple[float, float]]:
    by_eps: Dict[float, List[float]] = {}
    for r in results:
        value = getattr(r, attr)
        if value is not None:
            by_eps.setdefault(r.eps, []).append(float(value))
    return [(eps, float(np.mean(vals))) for eps, vals in sorted(by_eps.items(), reverse=True)]


def _fit_report(fit: Optional[RateFit], tainted: bool) -> Optional[Dict[str, object]]:
    if fit is None:
        return None
    return {
        "model": fit.model,
        "exponent": fit.exponent,
        "coefficient": fit.coefficient,
        "max_rel_residual": fit.max_rel_residual,
        "n_points": fit.n_points,
        "tainted": tainted,
    }


def rates_report(results: List[TrialResult]) -> Dict[str, object]:
    """
    Stopping index against eps (power model) and, with a known solution,
    final error against -ln sqrt(eps) (log_power model in 1/sqrt(eps)).
    Trials that hit the iteration cap taint both fits.
    """
    tainted_trials = [{"eps": r.eps, "seed": r.seed} for r in results if r.stopped_by == "cap"]
    tainted = bool(tainted_trials)
    levels = sorted({r.eps for r in results}, reverse=True)

    stop_fit = error_fit = None
    if len(levels) >= MIN_FIT_LEVELS:
        stop_fit = rate_fit(_per_level_means(results, "k_stop"), model="power")
        errors = _per_level_means(results, "final_error")
        if len(errors) >= MIN_FIT_LEVELS and all(value > 0 for _, value in errors):
            try:
                error_fit = rate_fit([(1.0 / math.sqrt(eps), value) for eps, value in errors],
                                     model="log_power")
            except ConfigError as e:
                log.warning("error-rate fit skipped: %s", e)
    else:
        log.warning("rate fits need at least %d distinct noise levels, got %d", MIN_FIT_LEVELS, len(levels))

    checks = [
        {"eps": r.eps, "seed": r.seed, "k_stop": r.k_stop, "bound": r.sum_bound_rhs, "ok": r.bound_ok}
        for r in results if r.sum_bound_rhs is not None
    ]
    return {
        "n_trials": len(results),
        "tainted": tainted,
        "tainted_trials": tainted_trials,
        "stopping_index_fit": _fit_report(stop_fit, tainted),
        "error_fit": _fit_report(error_fit, tainted),
        "bound_checks": checks,
        "bound_failures": sum(1 for c in checks if not c["ok"]),
    }


def cmd_sweep(config: ExperimentConfig) -> int:
    if not config.noise.eps:
        raise ConfigError("sweep needs at least one noise level in noise.eps")
    problem = config.problem.build()
    rule = config.stopping_rule()
    gamma_report, exceeded = _gamma_report(problem)
    generated = generate(problem, config.data)
    _require_rate_hypotheses(generated, rule)
    trial = _trial_fn(config, problem, generated)

    jobs = [(eps, seed) for eps in config.noise.eps for seed in config.noise.seeds]
    results = run_trials(jobs, trial, parallel=config.run.parallel)

    out = _out_dir(config)
    write_sweep_csv(out / "sweep.csv", results)
    report = rates_report(results)
    _write_json(out / "rates.json", {"tool_version": TOOL_VERSION, **report})

    manifest = _base_manifest("sweep", config)
    manifest.update({
        "gamma_bounds": gamma_report,
        "injectivity_bound_exceeded": exceeded,
        "n_trials": len(results),
        "artifacts": ["sweep.csv", "rates.json"],
    })
    _write_json(out / "manifest.json", manifest)

    print(f"sweep: {len(results)} trials over {len(config.noise.eps)} noise levels")
    print(f"{'eps':>12} {'seed':>6} {'k_stop':>8} {'stopped_by':>12} {'error':>14}")
    for r in results:
        error = f"{r.final_error:.6e}" if r.final_error is not None else "-"
        print(f"{r.eps:12.4e} {r.seed:6d} {r.k_stop:8d} {r.stopped_by:>12} {error:>14}")
    for key in ("stopping_index_fit", "error_fit"):
        fit = report[key]
        if fit is not None:
            mark = " (tainted)" if fit["tainted"] else ""
            print(f"  {key}: exponent {fit['exponent']:.4f}, max rel residual "
                  f"{fit['max_rel_residual']:.3e}{mark}")
    if report["bound_failures"]:
        first = next(c for c in report["bound_checks"] if not c["ok"])
        print(f"❌ stopping-index bound violated for {report['bound_failures']} trial(s), "
              f"first at eps={first['eps']:g} seed={first['seed']}")
        return 1
    if report["bound_checks"]:
        print("✅ stopping-index bound holds for every trial")
    return 0


# --- gen ---

def cmd_gen(config: ExperimentConfig) -> int:
    problem = config.problem.build()
    generated = generate(problem, config.data)
    out = _out_dir(config)

    artifacts = ["data.json"]
    generated.data.save(out / "data.json")
    if generated.solution is not None:
        generated.solution.save(out / "solution.json")
        artifacts.append("solution.json")
    noise_info = None
    if config.noise.eps:
        eps, seed = config.noise.eps[0], config.noise.seeds[0]
        noisy = add_noise(generated.data, eps, seed, config.noise.profile)
        noisy.f_eps.save(out / "data_eps.json")
        artifacts.append("data_eps.json")
        noise_info = {"eps": eps, "seed": seed, "profile": config.noise.profile}

    manifest = _base_manifest("gen", config)
    manifest.update({"noise": noise_info, "artifacts": artifacts})
    _write_json(out / "manifest.json", manifest)
    print(f"gen: {config.data.generator} on {problem.grid.n_modes} modes -> {', '.join(artifacts)}")
    return 0
