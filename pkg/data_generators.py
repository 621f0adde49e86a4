# Canned data generators.
# Every generator returns the exact initial profile x_bar (when it is known),
# the exact final profile f = S x_bar and the starting guess x1.

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from errors import ConfigError, GridMismatchError
from heat_operators import forward_solve
from models import DataSection, HeatProblem
from regularization import SourceCondition, source_condition_build, source_logs
from spectral_core import CoefVec


@dataclass(frozen=True, eq=False)
class GeneratedData:
    data: CoefVec
    solution: Optional[CoefVec]
    x1: CoefVec
    source: Optional[SourceCondition] = None


def _from_solution(problem: HeatProblem, coef: np.ndarray) -> GeneratedData:
    solution = CoefVec(problem.grid, coef)
    return GeneratedData(data=forward_solve(problem, solution), solution=solution,
                         x1=CoefVec.zeros(problem.grid))


def single_mode(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    solution = CoefVec.single_mode(problem.grid, spec.mode)
    return _from_solution(problem, solution.coef)


def smooth(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    j = problem.grid.modes.astype(float)
    return _from_solution(problem, j ** -4)


def rough(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    j = problem.grid.modes.astype(float)
    coef = 1.0 / j
    return _from_solution(problem, coef / np.linalg.norm(coef))


def zero(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    return _from_solution(problem, np.zeros(problem.grid.n_modes))


def flat_source_element(problem: HeatProblem, p: float) -> CoefVec:
    n = problem.grid.n_modes
    return CoefVec(problem.grid, np.full(n, 1.0 / math.sqrt(n)))


def graded_source_element(problem: HeatProblem, p: float) -> CoefVec:
    """
    Unit source element whose weighted tail beyond spectral log u decays like
    (u - c)^(-2p), c = 1 + ln 2 + Euler's constant. On a spectrum dense in
    u = ln(e/s) the exact-data error then follows (ln k)^(-p) closely.
    """
    u = source_logs(problem)
    c = 1.0 + math.log(2.0) + np.euler_gamma
    tail = (np.maximum(u, c + 1.0) - c) ** (-2.0 * p)
    mass = np.append(tail[:-1] - tail[1:], tail[-1])
    y = np.sqrt(np.maximum(mass, 0.0)) * u ** p
    return CoefVec(problem.grid, y / np.linalg.norm(y))


SOURCE_PROFILES: Dict[str, Callable[[HeatProblem, float], CoefVec]] = {
    "flat": flat_source_element,
    "graded": graded_source_element,
}


def source_condition(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    sc = SourceCondition(p=spec.p, y=SOURCE_PROFILES[spec.source_profile](problem, spec.p))
    x1 = CoefVec.zeros(problem.grid)
    built = source_condition_build(problem, sc, x1)
    return GeneratedData(data=built.data, solution=built.solution, x1=x1, source=sc)


def from_file(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    if not spec.file:
        raise ConfigError("data.generator=file needs data.file")
    try:
        data = CoefVec.load(spec.file, problem.grid)
    except OSError as e:
        raise ConfigError(f"cannot read data file {spec.file}: {e}") from e
    except GridMismatchError as e:
        raise ConfigError(f"data file {spec.file} does not match problem.n_modes: {e}") from e
    return GeneratedData(data=data, solution=None, x1=CoefVec.zeros(problem.grid))


GENERATORS: Dict[str, Callable[[HeatProblem, DataSection], GeneratedData]] = {
    "single-mode": single_mode,
    "smooth": smooth,
    "rough": rough,
    "zero": zero,
    "source-condition": source_condition,
    "file": from_file,
}


def generate(problem: HeatProblem, spec: DataSection) -> GeneratedData:
    try:
        generator = GENERATORS[spec.generator]
    except KeyError:
        raise ConfigError(f"unknown data generator {spec.generator!r}; choose from {sorted(GENERATORS)}")
    return generator(problem, spec)
