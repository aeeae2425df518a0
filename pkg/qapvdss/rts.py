"""Robust tabu search over the swap neighbourhood.

The delta table is indexed by location pairs: ``delta[r, s]`` is the cost
change of exchanging the facilities at locations ``r`` and ``s``. After a
swap the untouched pairs are corrected in O(1) each and the two affected
rows are rebuilt, so one iteration costs O(N^2).
"""

import logging
from math import ceil, floor
import time

import numpy as np
import numpy.typing as npt

from qapvdss.config import settings
from qapvdss.core import (
    Assignment,
    ContractViolation,
    Instance,
    IntMatrix,
    IntVector,
    InvariantViolation,
    cost,
)
from qapvdss.schemas import RtsParams, RunRecord

logger = logging.getLogger(__name__)

SwapDeltaTable = IntMatrix

_UNSELECTED = np.iinfo(np.int64).max


def swap_delta(inst: Instance, a: Assignment, i: int, j: int) -> int:
    """Cost change of exchanging the facilities at locations ``i`` and ``j`` in O(N)."""
    n = inst.n
    if not (0 <= i < n and 0 <= j < n):
        raise ContractViolation(f'Locations ({i}, {j}) out of range for n={n}')
    if i == j:
        return 0
    d, f, p = inst.distances, inst.flows, a.fac_at
    others = np.ones(n, dtype=bool)
    others[[i, j]] = False
    dist = d[others, i] - d[others, j]
    flow = f[p[others], p[j]] - f[p[others], p[i]]
    return 2 * int(np.dot(dist, flow))


def _placed_flows(inst: Instance, fac_at: IntVector) -> IntMatrix:
    return inst.flows[np.ix_(fac_at, fac_at)]


def _delta_matrix(d: IntMatrix, fp: IntMatrix) -> IntMatrix:
    m = d @ fp
    diag = np.diagonal(m)
    return 2 * (m + m.T - diag[:, None] - diag[None, :]) + 4 * d * fp


def _refresh_rows(delta: IntMatrix, d: IntMatrix, fp: IntMatrix, rows: tuple[int, ...]) -> None:
    diag = np.einsum('ij,ij->i', d, fp)
    for r in rows:
        row = 2 * (d[r] @ fp + d @ fp[:, r] - diag[r] - diag) + 4 * d[r] * fp[r]
        delta[r, :] = row
        delta[:, r] = row


def init_delta_table(inst: Instance, a: Assignment) -> SwapDeltaTable:
    if a.n != inst.n:
        raise ContractViolation(f'Assignment of size {a.n} used with instance of size {inst.n}')
    return _delta_matrix(inst.distances, _placed_flows(inst, a.fac_at))


def _apply_swap_update(
    delta: IntMatrix, d: IntMatrix, fp: IntMatrix, r: int, s: int
) -> None:
    # fp already reflects the swap
    x = d[r] - d[s]
    y = fp[r] - fp[s]
    delta -= 2 * np.subtract.outer(x, x) * np.subtract.outer(y, y)
    _refresh_rows(delta, d, fp, (r, s))


def update_delta_after_swap(
    table: SwapDeltaTable, inst: Instance, a: Assignment, i: int, j: int
) -> SwapDeltaTable:
    """Bring ``table`` up to date after locations ``i`` and ``j`` were swapped.

    ``a`` is the assignment after the swap; ``table`` must match the
    assignment before it. Returns a new table.
    """
    updated = np.array(table, dtype=np.int64, copy=True)
    if i != j:
        _apply_swap_update(updated, inst.distances, _placed_flows(inst, a.fac_at), i, j)
    return updated


def tenure_bounds(n: int, params: RtsParams) -> tuple[int, int]:
    # round first so that 1.1 * 60 is 66, not 67
    low = max(1, floor(round(params.tabu_min_factor * n, 9)))
    high = max(low, ceil(round(params.tabu_max_factor * n, 9)))
    return low, high


def rts_run(
    inst: Instance,
    start: Assignment,
    params: RtsParams,
    checks: bool | None = None,
) -> RunRecord:
    n = inst.n
    if start.n != n:
        raise ContractViolation(f'Start assignment of size {start.n} used with instance of size {n}')
    checks = settings.DEBUG_CHECKS if checks is None else checks
    iterations = params.iterations_for(n)
    aspiration = params.aspiration_for(n)
    tenure_low, tenure_high = tenure_bounds(n, params)
    rng = np.random.Generator(np.random.PCG64(params.seed & (2**64 - 1)))
    started = time.perf_counter()

    d = inst.distances
    fac = start.fac_at.copy()
    fp = _placed_flows(inst, fac)
    delta = _delta_matrix(d, fp)
    tabu: npt.NDArray[np.int64] = -(
        n * np.arange(n, dtype=np.int64)[:, None] + np.arange(n, dtype=np.int64)[None, :]
    )
    rows, cols = np.triu_indices(n, k=1)

    current = start_cost = cost(inst, start)
    best = current
    best_fac = fac.copy()
    best_iteration = 0
    trace: list[tuple[int, int]] | None = [(0, best)] if params.trace else None
    done = 0

    for it in range(1, iterations + 1):
        if rows.size == 0:
            break
        moves = delta[rows, cols]
        to_col = tabu[fac[rows], cols]
        to_row = tabu[fac[cols], rows]
        authorized = (to_col < it) | (to_row < it)
        aspired = ((to_col < it - aspiration) & (to_row < it - aspiration)) | (
            current + moves < best
        )
        if aspired.any():
            pick = int(np.argmin(np.where(aspired, moves, _UNSELECTED)))
        elif authorized.any():
            pick = int(np.argmin(np.where(authorized, moves, _UNSELECTED)))
        else:
            pick = int(np.argmin(np.maximum(to_col, to_row)))
            logger.debug('All moves tabu, taking the oldest', extra={'iteration': it})
        r, s = int(rows[pick]), int(cols[pick])
        fac_r, fac_s = int(fac[r]), int(fac[s])

        fac[r], fac[s] = fac_s, fac_r
        fp[[r, s], :] = fp[[s, r], :]
        fp[:, [r, s]] = fp[:, [s, r]]
        current += int(moves[pick])
        _apply_swap_update(delta, d, fp, r, s)
        tabu[fac_r, r] = it + int(rng.integers(tenure_low, tenure_high, endpoint=True))
        tabu[fac_s, s] = it + int(rng.integers(tenure_low, tenure_high, endpoint=True))
        done = it

        if current < best:
            best = current
            best_fac = fac.copy()
            best_iteration = it
            if trace is not None:
                trace.append((it, best))

        if checks and it % settings.DEBUG_CHECK_EVERY == 0:
            _check_state(inst, fac, delta, current)

    best_assignment = Assignment.from_fac_at(best_fac)
    wall_time = time.perf_counter() - started
    logger.debug(
        'RTS run finished',
        extra={
            'n': n,
            'seed': params.seed,
            'iterations': done,
            'start_cost': start_cost,
            'best_cost': best,
            'wall_time': round(wall_time, 6),
        },
    )
    return RunRecord(
        solver='rts',
        n=n,
        seed=params.seed,
        start_cost=start_cost,
        best_cost=best,
        best_assignment=best_assignment.to_list(),
        best_iteration=best_iteration,
        iterations_used=done,
        wall_time=wall_time,
        phase_times={'rts': wall_time},
        phase_costs={'rts': best},
        cost_trace=trace,
    )


def _check_state(inst: Instance, fac: IntVector, delta: IntMatrix, current: int) -> None:
    a = Assignment.from_fac_at(fac)
    actual = cost(inst, a)
    if actual != current:
        raise InvariantViolation(f'Tracked cost {current} differs from actual {actual}')
    fresh = init_delta_table(inst, a)
    drift = np.argwhere(fresh != delta)
    if drift.size:
        r, s = drift[0]
        raise InvariantViolation(
            f'Delta table drift at ({r}, {s}): {int(delta[r, s])} != {int(fresh[r, s])}'
        )
