import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Tuple

from models import TrialResult

log = logging.getLogger(__name__)

Job = Tuple[float, int]


def trial_order(result: TrialResult) -> Tuple[float, int]:
    # eps descending, then seed
    return (-result.eps, result.seed)


def run_trials(jobs: Iterable[Job], fn: Callable[[float, int], TrialResult],
               parallel: int = 1) -> List[TrialResult]:
    """
    Run one trial per (eps, seed) job. With parallel > 1 the trials go to a
    thread pool; results are sorted afterwards so output never depends on
    completion order.
    """
    jobs = list(jobs)
    if parallel < 1:
        raise ValueError("parallel must be at least 1")
    log.info("Running %d trials (parallel=%d)", len(jobs), parallel)
    if parallel == 1 or len(jobs) <= 1:
        results = [fn(eps, seed) for eps, seed in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(fn, eps, seed) for eps, seed in jobs]
            results = [future.result() for future in futures]
    return sorted(results, key=trial_order)
