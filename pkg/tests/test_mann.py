import math

import numpy as np
import pytest

from errors import ScheduleError
from heat_operators import AffineFixedPointOp, forward_solve
from mann import (CSV_COLUMNS, IterationState, MannMatrix, SegmentingSchedule,
                  asymptotic_regularity_trace, constant_schedule, distance_nonincreasing, geometric_schedule,
                  harmonic_schedule, mann_step_general, mann_step_segmenting, picard_schedule,
                  run_iteration, schedule_by_name, segmenting_to_matrix)
from models import HeatProblem
from regularization import add_noise, residual_tolerance_stop
from spectral_core import CoefVec


# --- schedules and matrices ---

def test_constant_schedule_range():
    with pytest.raises(ScheduleError):
        constant_schedule(1.5)
    assert constant_schedule(0.5).divergent
    assert not constant_schedule(1.0).divergent


def test_schedule_value_outside_unit_interval_is_rejected():
    bad = SegmentingSchedule("bad", lambda k: 1.0 + k, divergent=False)
    with pytest.raises(ScheduleError, match="outside"):
        bad.d(1)


def test_schedule_by_name():
    assert schedule_by_name("constant").d(7) == 0.5
    assert schedule_by_name("constant", 0.25).d(1) == 0.25
    assert schedule_by_name("harmonic").d(3) == 0.25
    assert schedule_by_name("geometric").d(3) == 0.125
    assert schedule_by_name("picard").d(9) == 1.0
    with pytest.raises(ScheduleError):
        schedule_by_name("cesaro")


def test_divergence_sum():
    assert constant_schedule(0.5).divergence_sum(8) == pytest.approx(2.0)
    # sum 2^-k (1 - 2^-k) = 1 - 1/3
    assert geometric_schedule().divergence_sum(60) == pytest.approx(2.0 / 3.0)


@pytest.mark.parametrize("rows, message", [
    ([[1.0], [0.5, 0.6]], "sums to"),
    ([[1.0], [1.5, -0.5]], "negative"),
    ([[1.0], [0.5, 0.25, 0.25]], "exactly 2 entries"),
])
def test_matrix_row_conditions(rows, message):
    with pytest.raises(ScheduleError, match=message):
        MannMatrix(rows=rows)


def test_matrix_needs_rows_or_schedule():
    with pytest.raises(ScheduleError):
        MannMatrix()


def test_explicit_matrix_runs_out_of_rows():
    matrix = MannMatrix(rows=[[1.0], [0.3, 0.7]])
    assert matrix.diagonal(1) == 0.7
    with pytest.raises(ScheduleError, match="only 2 rows"):
        matrix.row(3)


def test_segmenting_matrix_rows():
    matrix = segmenting_to_matrix(constant_schedule(0.5), 4)
    assert matrix.n_rows == 4
    np.testing.assert_allclose(matrix.row(4), [0.125, 0.125, 0.25, 0.5])
    for i in range(1, 5):
        assert matrix.row(i).sum() == pytest.approx(1.0, abs=1e-15)
    assert matrix.diagonal(3) == 0.5


# --- iteration ---

def test_general_step_needs_history(worked_problem):
    op = AffineFixedPointOp(worked_problem, CoefVec.zeros(worked_problem.grid))
    state = IterationState.start(CoefVec.zeros(worked_problem.grid))
    with pytest.raises(ScheduleError, match="stored iterates"):
        mann_step_general(state, MannMatrix(schedule=picard_schedule()), op)


@pytest.mark.parametrize("schedule", [
    constant_schedule(0.1), constant_schedule(0.5), constant_schedule(0.9), harmonic_schedule(),
], ids=["d=0.1", "d=0.5", "d=0.9", "harmonic"])
def test_segmenting_and_general_forms_agree(schedule, rng):
    problem = HeatProblem.default(n_modes=8)
    op = AffineFixedPointOp(problem, CoefVec(problem.grid, rng.standard_normal(8)))
    x1 = CoefVec(problem.grid, rng.standard_normal(8))
    matrix = MannMatrix(schedule=schedule)
    seg = IterationState.start(x1)
    gen = IterationState.start(x1, keep_history=True)
    for _ in range(200):
        seg = mann_step_segmenting(seg, schedule, op)
        gen = mann_step_general(gen, matrix, op)
        assert (seg.v - gen.v).norm() <= 1e-12 * max(1.0, gen.v.norm())
        assert seg.k == gen.k


def test_picard_error_follows_closed_form(worked_problem):
    grid = worked_problem.grid
    x_bar = CoefVec.single_mode(grid, 1)
    f = forward_solve(worked_problem, x_bar)
    record = run_iteration(worked_problem, f, CoefVec.zeros(grid), picard_schedule(), 100,
                           reference=x_bar)
    ratio = 1.0 - math.exp(-1.0)
    for k, err in zip(record.ks, record.error_norms):
        expected = ratio ** (k - 1)
        assert abs(err - expected) <= 1e-14
        if k <= 10:
            assert err == pytest.approx(expected, rel=1e-12)
    assert record.stopped_by == "cap"
    assert record.stop_index == 100


def test_zero_data_stops_immediately(worked_problem):
    zero = CoefVec.zeros(worked_problem.grid)
    record = run_iteration(worked_problem, zero, zero, picard_schedule(), 50,
                           stop=residual_tolerance_stop(0.0))
    assert record.stop_index == 1
    assert record.stopped_by == "tolerance"
    assert not np.any(record.x.coef)


def test_residual_is_nonincreasing_for_picard(rng):
    problem = HeatProblem.default(n_modes=16)
    for trial in range(100):
        f = forward_solve(problem, CoefVec(problem.grid, rng.standard_normal(16)))
        noisy = add_noise(f, 10.0 ** rng.uniform(-4, -1), seed=trial, profile="white")
        x1 = CoefVec(problem.grid, rng.standard_normal(16))
        record = run_iteration(problem, noisy.f_eps, x1, picard_schedule(), 60)
        r = record.residual_norms
        assert all(b <= a + 1e-12 for a, b in zip(r, r[1:]))


def _regularity_run(schedule, max_iter=500):
    problem = HeatProblem.default()
    grid = problem.grid
    rng = np.random.default_rng(7)
    j = grid.modes.astype(float)
    x1 = rng.uniform(-1.0, 1.0, grid.n_modes) / j ** 2
    x1[0] = rng.uniform(-1.0, -0.5)
    x_bar = CoefVec.single_mode(grid, 1)
    return run_iteration(problem, forward_solve(problem, x_bar), CoefVec(grid, x1), schedule, max_iter)


@pytest.mark.parametrize("schedule", [constant_schedule(0.5), picard_schedule()], ids=["d=1/2", "d=1"])
def test_defect_decays_for_divergent_weights(schedule):
    record = _regularity_run(schedule)
    values = record.defect_norms
    assert values[-1] <= values[0] / 1e3
    assert asymptotic_regularity_trace(record).conforming


def test_defect_stalls_for_summable_weights():
    record = _regularity_run(geometric_schedule())
    values = record.defect_norms
    assert values[-1] > 0.1 * values[0]
    assert not asymptotic_regularity_trace(record).conforming


def test_divergent_schedule_warns_when_sum_small(worked_problem, caplog):
    zero = CoefVec.zeros(worked_problem.grid)
    run_iteration(worked_problem, zero, zero, constant_schedule(0.5), 2)
    assert "tagged divergent" in caplog.text


def test_run_record_csv(worked_problem, tmp_path):
    grid = worked_problem.grid
    f = forward_solve(worked_problem, CoefVec.single_mode(grid, 1))
    record = run_iteration(worked_problem, f, CoefVec.zeros(grid), picard_schedule(), 5)
    record.write_csv(tmp_path / "run.csv")
    lines = (tmp_path / "run.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 6
    assert lines[1].split(",")[3] == ""
    manifest = record.manifest()
    assert manifest["stop_index"] == 5
    assert manifest["stopped_by"] == "cap"
    assert manifest["problem"]["n_modes"] == 64


def test_max_iter_must_be_positive(worked_problem):
    zero = CoefVec.zeros(worked_problem.grid)
    with pytest.raises(ScheduleError):
        run_iteration(worked_problem, zero, zero, picard_schedule(), 0)


def test_zero_schedule_freezes_iteration(worked_problem):
    matrix = segmenting_to_matrix(constant_schedule(0.0), 3)
    assert [list(r) for r in matrix.rows()] == [[1.0], [1.0, 0.0], [1.0, 0.0, 0.0]]

    grid = worked_problem.grid
    f = forward_solve(worked_problem, CoefVec.single_mode(grid, 1))
    x1 = CoefVec.single_mode(grid, 2, 0.5)
    record = run_iteration(worked_problem, f, x1, constant_schedule(0.0), 20)
    assert record.v is x1
    assert len(set(record.defect_norms)) == 1
    assert record.defect_norms[0] > 0
    assert not asymptotic_regularity_trace(record).conforming


def test_hand_evaluated_steps(worked_problem):
    grid = worked_problem.grid
    op = AffineFixedPointOp(worked_problem, forward_solve(worked_problem, CoefVec.single_mode(grid, 1)))
    x1 = CoefVec.zeros(grid)

    state = IterationState.start(x1, keep_history=True)
    matrix = MannMatrix(schedule=picard_schedule())
    state = mann_step_general(state, matrix, op)
    assert state.x.coef[0] == pytest.approx(math.exp(-1.0), rel=1e-15)
    state = mann_step_general(state, matrix, op)
    assert state.k == 3
    assert state.x.coef[0] == pytest.approx(0.6004236, abs=1e-7)

    half = mann_step_segmenting(IterationState.start(x1), constant_schedule(0.5), op)
    assert half.v.coef[0] == pytest.approx(0.1839397, abs=1e-7)
    assert not np.any(half.v.coef[1:])


@pytest.mark.parametrize("schedule", [constant_schedule(0.5), picard_schedule()], ids=["d=1/2", "d=1"])
def test_distance_to_solution_never_rises(schedule, rng):
    problem = HeatProblem.default(n_modes=8)
    x_bar = CoefVec(problem.grid, rng.standard_normal(8))
    f = forward_solve(problem, x_bar)
    x1 = CoefVec(problem.grid, rng.standard_normal(8))
    record = run_iteration(problem, f, x1, schedule, 300, reference=x_bar)
    assert distance_nonincreasing(record)
    assert record.v_error_norms[-1] < record.v_error_norms[0]


def test_distance_check_needs_reference(worked_problem):
    zero = CoefVec.zeros(worked_problem.grid)
    record = run_iteration(worked_problem, zero, zero, picard_schedule(), 3)
    with pytest.raises(ScheduleError, match="reference"):
        distance_nonincreasing(record)


def test_explicit_matrix_with_max_iter_rows_reaches_cap(worked_problem, tmp_path):
    grid = worked_problem.grid
    f = forward_solve(worked_problem, CoefVec.single_mode(grid, 1))
    matrix = MannMatrix(rows=[[1.0], [0.0, 1.0], [0.0, 0.0, 1.0]])
    record = run_iteration(worked_problem, f, CoefVec.zeros(grid), matrix, 3)
    assert record.stopped_by == "cap"
    assert record.stop_index == 3
    assert record.v_diff_norms[-1] is None
    picard = run_iteration(worked_problem, f, CoefVec.zeros(grid), picard_schedule(), 3)
    assert record.x.allclose(picard.x, rtol=0.0, atol=1e-15)

    record.write_csv(tmp_path / "run.csv")
    last = (tmp_path / "run.csv").read_text().splitlines()[-1].split(",")
    assert last[0] == "3"
    assert last[2] == ""
