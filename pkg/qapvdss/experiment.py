from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from functools import partial
import logging
import statistics
from typing import Any

from qapvdss.config import settings
from qapvdss.core import (
    Cost,
    Instance,
    derive_seed,
    generate_instance,
    random_assignment,
)
from qapvdss.rts import rts_run
from qapvdss.schemas import (
    ReferenceInstance,
    RtsParams,
    RunRecord,
    ScalingReport,
    SearchBudget,
    Solver,
    TttMeasurement,
    TttSeries,
)
from qapvdss.ttt import StatisticsError, fit_exponent, improvement_factor, normalized_target, t50, ttt_series
from qapvdss.vdss import vdss_run

logger = logging.getLogger(__name__)

_START_STREAM = 0
_RTS_STREAM = 1

# Best-known values, improvement thresholds and measured targets of the benchmark instances.
# The default normalizer b(N) for an instance is its improvement threshold.
REFERENCE_INSTANCES: dict[str, ReferenceInstance] = {
    ref.name: ref
    for ref in (
        ReferenceInstance(name='tai60a', best_known=7205962, threshold=7320000, target=7256000, reported_improvement=1.30),
        ReferenceInstance(name='tai80a', best_known=13511780, threshold=13720000, target=13620000, reported_improvement=2.52),
        ReferenceInstance(name='tai100a', best_known=21052466, threshold=21360000, target=21200000, reported_improvement=3.07),
        ReferenceInstance(name='pau200a', best_known=89282330, threshold=89740000, target=89460000, reported_improvement=10.94),
        ReferenceInstance(name='pau400a', best_known=366463098, threshold=367600000, target=367060000, reported_improvement=15.15),
    )
}


def default_normalizer(instance_name: str) -> int | None:
    ref = REFERENCE_INSTANCES.get(instance_name.lower())
    return ref.threshold if ref else None


def hybrid_run(
    inst: Instance,
    seed: int,
    rts_params: RtsParams | None = None,
    budget: SearchBudget | None = None,
) -> RunRecord:
    """One RTS run from a seeded random start, then VDSS from the RTS best."""
    rts_params = rts_params or RtsParams()
    start = random_assignment(inst.n, derive_seed(seed, _START_STREAM))
    rts = rts_run(inst, start, rts_params.model_copy(update={'seed': derive_seed(seed, _RTS_STREAM)}))
    vdss = vdss_run(inst, rts.assignment(), budget or SearchBudget(), seed=seed)
    return RunRecord(
        solver='hybrid',
        n=inst.n,
        seed=seed,
        start_cost=rts.start_cost,
        best_cost=vdss.best_cost,
        best_assignment=vdss.best_assignment,
        best_iteration=rts.best_iteration,
        iterations_used=rts.iterations_used,
        chains_accepted=vdss.chains_accepted,
        evaluations=vdss.evaluations,
        wall_time=rts.wall_time + vdss.wall_time,
        phase_times={'rts': rts.wall_time, 'vdss': vdss.wall_time},
        phase_costs={'rts': rts.best_cost, 'vdss': vdss.best_cost},
        cost_trace=rts.cost_trace,
    )


def solve(
    inst: Instance,
    solver: Solver,
    seed: int,
    rts_params: RtsParams | None = None,
    budget: SearchBudget | None = None,
) -> RunRecord:
    """Single seeded run of ``solver`` from a random start."""
    if solver == 'hybrid':
        return hybrid_run(inst, seed, rts_params, budget)
    start = random_assignment(inst.n, derive_seed(seed, _START_STREAM))
    if solver == 'rts':
        params = (rts_params or RtsParams()).model_copy(update={'seed': derive_seed(seed, _RTS_STREAM)})
        return rts_run(inst, start, params).model_copy(update={'seed': seed})
    return vdss_run(inst, start, budget or SearchBudget(), seed=seed)


def time_to_target(
    inst: Instance,
    target: Cost,
    solver: Solver,
    seed: int,
    rts_params: RtsParams | None = None,
    budget: SearchBudget | None = None,
    max_attempts: int | None = None,
    instance_name: str = '',
) -> TttMeasurement:
    """Independent runs until one reaches ``target``; time is summed over attempts.

    Attempt seeds are derived from ``seed``. When ``max_attempts`` runs all
    miss the target the measurement is returned with ``reached=False``.
    """
    max_attempts = max_attempts or settings.TTT_MAX_ATTEMPTS
    elapsed = 0.0
    best = None
    for attempt in range(1, max_attempts + 1):
        record = solve(inst, solver, derive_seed(seed, attempt), rts_params, budget)
        elapsed += record.wall_time
        best = record.best_cost if best is None else min(best, record.best_cost)
        if record.best_cost <= target:
            return TttMeasurement(
                instance=instance_name or inst.name,
                solver=solver,
                seed=seed,
                target=target,
                attempts=attempt,
                time_s=elapsed,
                final_cost=record.best_cost,
                reached=True,
            )
    logger.warning(
        'Target not reached, measurement censored',
        extra={'solver': solver, 'seed': seed, 'target': target, 'attempts': max_attempts, 'best_cost': best},
    )
    return TttMeasurement(
        instance=instance_name or inst.name,
        solver=solver,
        seed=seed,
        target=target,
        attempts=max_attempts,
        time_s=elapsed,
        final_cost=best if best is not None else -1,
        reached=False,
    )


def _measure(
    seed: int,
    inst: Instance,
    target: Cost,
    solver: Solver,
    rts_params: RtsParams | None,
    budget: SearchBudget | None,
    max_attempts: int | None,
    instance_name: str,
) -> TttMeasurement:
    return time_to_target(inst, target, solver, seed, rts_params, budget, max_attempts, instance_name)


def ttt_campaign(
    inst: Instance,
    target: Cost,
    solver: Solver,
    runs: int,
    master_seed: int,
    workers: int | None = None,
    rts_params: RtsParams | None = None,
    budget: SearchBudget | None = None,
    max_attempts: int | None = None,
    instance_name: str = '',
) -> list[TttMeasurement]:
    """``runs`` independent time-to-target measurements, ordered by run index."""
    workers = workers or settings.QAPVDSS_WORKERS
    seeds = [derive_seed(master_seed, index) for index in range(runs)]
    measure = partial(
        _measure,
        inst=inst,
        target=target,
        solver=solver,
        rts_params=rts_params,
        budget=budget,
        max_attempts=max_attempts,
        instance_name=instance_name,
    )
    logger.info(
        'TTT campaign started',
        extra={'solver': solver, 'runs': runs, 'target': target, 'workers': workers, 'seed': master_seed},
    )
    if workers == 1:
        results = [measure(seed) for seed in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(measure, seeds))
    censored = sum(not r.reached for r in results)
    logger.info(
        'TTT campaign finished',
        extra={'solver': solver, 'runs': runs, 'censored': censored},
    )
    return results


def reached_series(measurements: Sequence[TttMeasurement]) -> TttSeries:
    """TTT series over the measurements that reached the target."""
    censored = [m for m in measurements if not m.reached]
    if censored:
        logger.warning(
            'Censored measurements excluded from TTT series',
            extra={'censored': len(censored), 'total': len(measurements)},
        )
    times = [m.time_s for m in measurements if m.reached]
    if not times:
        raise StatisticsError('No measurement reached the target')
    return ttt_series(times)


def scaling_study(
    sizes: Sequence[int],
    runs_per_size: int,
    seed: int,
    rts_params: RtsParams | None = None,
    budget: SearchBudget | None = None,
    max_entry: int = 99,
) -> ScalingReport:
    """Median per-phase hybrid run times on generated instances and their log-log slopes."""
    if len(sizes) < 3:
        raise StatisticsError(f'A scaling study needs at least 3 sizes, got {len(sizes)}')
    rts_medians: list[float] = []
    vdss_medians: list[float] = []
    for n in sizes:
        inst = generate_instance(n, derive_seed(seed, n), max_entry)
        records = [hybrid_run(inst, derive_seed(seed, n, run), rts_params, budget) for run in range(runs_per_size)]
        rts_medians.append(statistics.median(r.phase_times['rts'] for r in records))
        vdss_medians.append(statistics.median(r.phase_times['vdss'] for r in records))
        logger.info(
            'Scaling size measured',
            extra={'n': n, 'rts_median': rts_medians[-1], 'vdss_median': vdss_medians[-1]},
        )
    return ScalingReport(
        sizes=list(sizes),
        runs_per_size=runs_per_size,
        seed=seed,
        rts_medians=rts_medians,
        vdss_medians=vdss_medians,
        rts_exponent=fit_exponent(sizes, rts_medians),
        vdss_exponent=fit_exponent(sizes, vdss_medians),
    )


def improvement_curve(
    inst: Instance,
    targets: Sequence[Cost],
    normalizer: int,
    runs: int,
    seed: int,
    workers: int | None = None,
    rts_params: RtsParams | None = None,
    budget: SearchBudget | None = None,
    max_attempts: int | None = None,
) -> list[dict[str, Any]]:
    """Improvement factor of hybrid over RTS for each target, against the normalized target."""
    compared: tuple[Solver, ...] = ('rts', 'hybrid')
    points = []
    for target in targets:
        t50s = {}
        for solver in compared:
            measurements = ttt_campaign(
                inst, target, solver, runs, derive_seed(seed, target), workers, rts_params, budget, max_attempts
            )
            t50s[solver] = t50(reached_series(measurements))
        points.append(
            {
                'target': target,
                'normalized_target': normalized_target(target, normalizer),
                't50_rts': t50s['rts'],
                't50_hybrid': t50s['hybrid'],
                'improvement_factor': improvement_factor(t50s['rts'], t50s['hybrid']),
            }
        )
    return points
