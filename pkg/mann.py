"""
Mann iteration M(x1, A, T):

    v_k     = sum_{j<=k} a_kj x_j
    x_{k+1} = T(v_k)

in the general lower-triangular form and in the segmenting form
v_{k+1} = (1 - d_k) v_k + d_k T(v_k), d_k = a_{k+1,k+1}. Indices are
1-based throughout, so row 1 of every matrix is (1).
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Union

import numpy as np

from errors import ScheduleError
from heat_operators import AffineFixedPointOp
from models import HeatProblem
from spectral_core import CoefVec

log = logging.getLogger(__name__)

Operator = Callable[[CoefVec], CoefVec]

ROW_SUM_TOL = 1e-12
BURN_IN = 3


class StopPredicate(Protocol):
    name: str

    def __call__(self, k: int, residual_norm: float) -> bool: ...


# --- segmenting schedules ---

@dataclass(frozen=True)
class SegmentingSchedule:
    name: str
    rule: Callable[[int], float]
    divergent: bool
    params: Dict[str, float] = field(default_factory=dict)

    def d(self, k: int) -> float:
        """d_k = a_{k+1,k+1}, k >= 1."""
        value = float(self.rule(k))
        if not 0.0 <= value <= 1.0:
            raise ScheduleError(f"schedule {self.name!r}: d_{k} = {value} outside [0, 1]")
        return value

    def divergence_sum(self, horizon: int) -> float:
        """sum_{k<=horizon} d_k (1 - d_k)."""
        return float(sum(self.d(k) * (1.0 - self.d(k)) for k in range(1, horizon + 1)))


def constant_schedule(d: float) -> SegmentingSchedule:
    if not 0.0 <= d <= 1.0:
        raise ScheduleError(f"constant schedule needs d in [0, 1], got {d}")
    return SegmentingSchedule("constant", lambda k: d, divergent=0.0 < d < 1.0, params={"d": d})


def picard_schedule() -> SegmentingSchedule:
    """d_k = 1: A = I, plain successive approximation (Landweber-type)."""
    return SegmentingSchedule("picard", lambda k: 1.0, divergent=False)


def harmonic_schedule() -> SegmentingSchedule:
    return SegmentingSchedule("harmonic", lambda k: 1.0 / (k + 1), divergent=True)


def geometric_schedule() -> SegmentingSchedule:
    """d_k = 2^-k; the sum of d_k (1 - d_k) converges, so no convergence is promised."""
    return SegmentingSchedule("geometric", lambda k: 2.0 ** (-k), divergent=False)


SCHEDULES = {
    "constant": constant_schedule,
    "picard": picard_schedule,
    "harmonic": harmonic_schedule,
    "geometric": geometric_schedule,
}


def schedule_by_name(name: str, d: Optional[float] = None) -> SegmentingSchedule:
    if name not in SCHEDULES:
        raise ScheduleError(f"unknown schedule {name!r}; choose from {sorted(SCHEDULES)}")
    if name == "constant":
        return constant_schedule(0.5 if d is None else d)
    return SCHEDULES[name]()


# --- general Mann matrices ---

class MannMatrix:
    """
    Lower-triangular row-stochastic matrix, rows materialized on demand.
    Built either from explicit rows (no convergence guarantee) or from a
    segmenting schedule.
    """

    def __init__(self, rows: Optional[List[np.ndarray]] = None,
                 schedule: Optional[SegmentingSchedule] = None):
        if rows is None and schedule is None:
            raise ScheduleError("a Mann matrix needs explicit rows or a segmenting schedule")
        self.schedule = schedule
        self.name = schedule.name if schedule is not None else "matrix"
        self._rows: List[np.ndarray] = []
        for row in rows or [np.ones(1)]:
            self._append(np.asarray(row, dtype=float))

    def _append(self, row: np.ndarray) -> None:
        i = len(self._rows) + 1
        if row.ndim != 1 or row.shape[0] != i:
            raise ScheduleError(f"row {i} must have exactly {i} entries (a_ij = 0 for j > i)")
        if np.any(row < 0):
            raise ScheduleError(f"row {i} has a negative coefficient")
        if abs(float(np.sum(row)) - 1.0) > ROW_SUM_TOL:
            raise ScheduleError(f"row {i} sums to {float(np.sum(row))!r}, not 1")
        if i == 1 and row[0] != 1.0:
            raise ScheduleError("row 1 must be (1)")
        row = row.copy()
        row.setflags(write=False)
        self._rows.append(row)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def has_row(self, i: int) -> bool:
        return self.schedule is not None or i <= self.n_rows

    def row(self, i: int) -> np.ndarray:
        if i < 1:
            raise ScheduleError("rows are indexed from 1")
        while self.n_rows < i:
            if self.schedule is None:
                raise ScheduleError(f"row {i} requested but only {self.n_rows} rows were supplied")
            k = self.n_rows
            d = self.schedule.d(k)
            # a_{k+1,j} = (1 - d_k) a_kj
            self._append(np.append((1.0 - d) * self._rows[-1], d))
        return self._rows[i - 1]

    def diagonal(self, k: int) -> float:
        """d_k := a_{k+1,k+1}."""
        return float(self.row(k + 1)[k])

    def rows(self) -> List[np.ndarray]:
        return list(self._rows)


def segmenting_to_matrix(schedule: SegmentingSchedule, n_rows: int) -> MannMatrix:
    if n_rows < 1:
        raise ScheduleError("n_rows must be at least 1")
    matrix = MannMatrix(schedule=schedule)
    matrix.row(n_rows)
    return matrix


# --- iteration ---

@dataclass
class IterationState:
    k: int
    x: CoefVec
    v: CoefVec
    history: Optional[List[CoefVec]] = None

    @classmethod
    def start(cls, x1: CoefVec, keep_history: bool = False) -> "IterationState":
        return cls(k=1, x=x1, v=x1, history=[x1] if keep_history else None)


def mann_step_general(state: IterationState, matrix: MannMatrix, op: Operator,
                      tv: Optional[CoefVec] = None) -> IterationState:
    """x_{k+1} = T(v_k), then v_{k+1} = sum_j a_{k+1,j} x_j over the stored history."""
    if state.history is None or len(state.history) != state.k:
        have = 0 if state.history is None else len(state.history)
        raise ScheduleError(f"general Mann step at k={state.k} needs {state.k} stored iterates, has {have}")
    x_next = tv if tv is not None else op(state.v)
    history = state.history
    history.append(x_next)
    row = matrix.row(state.k + 1)
    stacked = np.stack([x.coef for x in history])
    v_next = CoefVec(x_next.grid, row @ stacked)
    return IterationState(k=state.k + 1, x=x_next, v=v_next, history=history)


def mann_step_segmenting(state: IterationState, schedule: SegmentingSchedule, op: Operator,
                         tv: Optional[CoefVec] = None) -> IterationState:
    """v_{k+1} on the segment between v_k and x_{k+1} = T(v_k); no history kept."""
    d = schedule.d(state.k)
    x_next = tv if tv is not None else op(state.v)
    if d == 1.0:
        v_next = x_next
    elif d == 0.0:
        v_next = state.v
    else:
        v_next = CoefVec(x_next.grid, (1.0 - d) * state.v.coef + d * x_next.coef)
    return IterationState(k=state.k + 1, x=x_next, v=v_next)


CSV_COLUMNS = ["k", "residual_norm", "v_diff_norm", "error_norm", "sum_dk_1mdk", "defect_norm"]


@dataclass
class RunRecord:
    """Per-iteration trace; append-only while running."""

    problem: HeatProblem
    scheme: str
    max_iter: int
    ks: List[int] = field(default_factory=list)
    residual_norms: List[float] = field(default_factory=list)
    defect_norms: List[float] = field(default_factory=list)
    v_diff_norms: List[Optional[float]] = field(default_factory=list)
    sum_dk_1mdk: List[float] = field(default_factory=list)
    error_norms: Optional[List[float]] = None
    v_error_norms: Optional[List[float]] = None
    x: Optional[CoefVec] = None
    v: Optional[CoefVec] = None
    stopped_by: str = "running"
    stop_rule: Optional[str] = None

    @property
    def stop_index(self) -> int:
        return self.ks[-1]

    @property
    def final_residual(self) -> float:
        return self.residual_norms[-1]

    @property
    def final_error(self) -> Optional[float]:
        return self.error_norms[-1] if self.error_norms else None

    def rows(self) -> List[Dict[str, object]]:
        out = []
        for i, k in enumerate(self.ks):
            out.append({
                "k": k,
                "residual_norm": self.residual_norms[i],
                "v_diff_norm": self.v_diff_norms[i],
                "error_norm": self.error_norms[i] if self.error_norms is not None else "",
                "sum_dk_1mdk": self.sum_dk_1mdk[i],
                "defect_norm": self.defect_norms[i],
            })
        return out

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow({key: (format(val, ".17g") if isinstance(val, float) else val)
                                 for key, val in row.items()})

    def manifest(self) -> Dict[str, object]:
        return {
            "problem": self.problem.describe(),
            "schedule": self.scheme,
            "max_iter": self.max_iter,
            "stop_rule": self.stop_rule,
            "stopped_by": self.stopped_by,
            "stop_index": self.stop_index,
            "final_residual": self.final_residual,
            "final_error": self.final_error,
        }


def run_iteration(problem: HeatProblem, data: CoefVec, x1: CoefVec,
                  scheme: Union[SegmentingSchedule, MannMatrix], max_iter: int,
                  stop: Optional[StopPredicate] = None, reference: Optional[CoefVec] = None,
                  op: Optional[Operator] = None, divergence_threshold: float = 1.0) -> RunRecord:
    """
    Drive M(x1, A, T) until `stop` fires on ||r_k|| or k reaches max_iter.
    The reconstruction is x_k at the stopping index; r_k = gamma f - (I - T_l) x_k.
    """
    if max_iter < 1:
        raise ScheduleError("max_iter must be at least 1")
    op = op or AffineFixedPointOp(problem, data)
    general = isinstance(scheme, MannMatrix)
    record = RunRecord(problem=problem, scheme=scheme.name, max_iter=max_iter,
                       stop_rule=getattr(stop, "name", None))
    if reference is not None:
        record.error_norms, record.v_error_norms = [], []

    state = IterationState.start(x1, keep_history=general)
    running = 0.0
    verbose = log.isEnabledFor(logging.DEBUG)
    while True:
        k = state.k
        tv = op(state.v)
        tx = tv if state.v is state.x else op(state.x)
        residual_norm = (tx - state.x).norm()
        stopping = stop is not None and stop(k, residual_norm)
        last = stopping or k >= max_iter

        nxt = None
        if general:
            # an explicit matrix may end at row max_iter; x_k needs no row k+1
            if not (last and not scheme.has_row(k + 1)):
                d = scheme.diagonal(k)
                nxt = mann_step_general(state, scheme, op, tv=tv)
        else:
            d = scheme.d(k)
            nxt = mann_step_segmenting(state, scheme, op, tv=tv)
        if nxt is not None:
            running += d * (1.0 - d)

        record.ks.append(k)
        record.residual_norms.append(residual_norm)
        record.defect_norms.append((state.v - tv).norm())
        record.v_diff_norms.append((nxt.v - state.v).norm() if nxt is not None else None)
        record.sum_dk_1mdk.append(running)
        if reference is not None:
            record.error_norms.append((reference - state.x).norm())
            record.v_error_norms.append((reference - state.v).norm())
        if verbose:
            log.debug("k=%d |r_k|=%.6e |(I-T)v_k|=%.6e", k, residual_norm, record.defect_norms[-1])

        if last:
            record.stopped_by = stop.name if stopping else "cap"
            break
        state = nxt

    record.x, record.v = state.x, state.v
    log.info("%s run stopped by %s at k=%d, |r_k|=%.6e", record.scheme, record.stopped_by,
             record.stop_index, record.final_residual)
    if not general and scheme.divergent:
        total = scheme.divergence_sum(record.stop_index)
        if total < divergence_threshold:
            log.warning("schedule %r is tagged divergent but sum d_k(1-d_k) = %.4g < %.4g after %d steps",
                        scheme.name, total, divergence_threshold, record.stop_index)
    return record


@dataclass(frozen=True)
class RegularityTrace:
    values: List[float]
    nonincreasing: bool
    final_below_tol: bool

    @property
    def conforming(self) -> bool:
        return self.nonincreasing and self.final_below_tol


def asymptotic_regularity_trace(record: RunRecord, rel_tol: float = 1e-3,
                                burn_in: int = BURN_IN, slack: float = 1e-12) -> RegularityTrace:
    """||(I - T) v_k|| per step, with a conformance verdict after burn-in."""
    values = list(record.defect_norms)
    tail = values[burn_in:]
    nonincreasing = all(b <= a + slack for a, b in zip(tail, tail[1:]))
    final_below = bool(values) and values[-1] <= max(rel_tol * values[0], 1e-14)
    return RegularityTrace(values=values, nonincreasing=nonincreasing, final_below_tol=final_below)


def distance_nonincreasing(record: RunRecord, burn_in: int = BURN_IN, slack: float = 1e-12) -> bool:
    """||v_k - x_bar|| never rises after burn-in; needs a run traced against a reference."""
    if record.v_error_norms is None:
        raise ScheduleError("run was not traced against a reference solution")
    tail = record.v_error_norms[burn_in:]
    return all(b <= a + slack for a, b in zip(tail, tail[1:]))
