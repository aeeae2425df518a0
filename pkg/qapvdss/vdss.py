"""Variable depth sequential search.

A chain moves facility ``u0`` from its location ``l0`` to ``k0``; the facility
displaced from ``k0`` moves next, and so on, until the last mover closes the
chain by taking ``l0``. Chains are explored depth first and a prefix is only
extended while its cumulative gain stays strictly positive.

Gains are measured against the first-move table ``delta0[u, k]``: the cost
reduction of relocating ``u`` alone to ``k`` (double occupancy allowed). The
gain of a later move corrects that entry for every facility already moved,
which costs O(depth) per evaluation instead of O(N).
"""

from collections.abc import Iterator
from dataclasses import dataclass
import logging
import time
from typing import NamedTuple

import numpy as np

from qapvdss.config import settings
from qapvdss.core import (
    Assignment,
    ContractViolation,
    Instance,
    IntMatrix,
    IntVector,
    InvariantViolation,
    cost,
    relocation_cost,
)
from qapvdss.schemas import RunRecord, SearchBudget

logger = logging.getLogger(__name__)

GainTable = IntMatrix


class Move(NamedTuple):
    facility: int
    source: int
    target: int
    gain: int
    cumulative: int


@dataclass(frozen=True)
class MoveChain:
    moves: tuple[Move, ...]
    closed: bool = False
    allow_reuse: bool = False

    def __post_init__(self) -> None:
        total = 0
        for index, move in enumerate(self.moves):
            total += move.gain
            if move.cumulative != total:
                raise ContractViolation(f'Move {index} cumulative gain is not a running sum')
            if index and move.source != self.moves[index - 1].target:
                raise ContractViolation(f'Move {index} does not start where move {index - 1} ended')
        if not self.allow_reuse and len(set(self.facilities)) != len(self.moves):
            raise ContractViolation(f'Facility moved twice in chain {self.facilities}')
        if self.closed:
            if len(self.moves) < 2:
                raise ContractViolation('A closed chain needs at least two moves')
            if self.moves[-1].target != self.moves[0].source:
                raise ContractViolation('A closed chain must end at its start location')

    @property
    def facilities(self) -> list[int]:
        return [m.facility for m in self.moves]

    @property
    def depth(self) -> int:
        return len(self.moves)

    @property
    def start_location(self) -> int:
        return self.moves[0].source

    @property
    def total_gain(self) -> int:
        return self.moves[-1].cumulative if self.moves else 0

    def extended(self, move: Move, closed: bool = False) -> 'MoveChain':
        return MoveChain(self.moves + (move,), closed=closed, allow_reuse=self.allow_reuse)

    def inverse(self, inst: Instance, a: Assignment) -> 'MoveChain':
        """Chain undoing this one, with gains measured from ``a`` (the applied state)."""
        if not self.closed:
            raise ContractViolation('Only closed chains can be inverted')
        reversed_moves = [(m.facility, m.target, m.source) for m in reversed(self.moves)]
        return _chain_from_structure(inst, a, reversed_moves, self.allow_reuse)


@dataclass
class MoveBudget:
    """Gain evaluations left for one start node."""

    remaining: int
    evaluations: int = 0
    exhausted: bool = False

    def charge(self, count: int) -> bool:
        if count <= self.remaining:
            self.remaining -= count
            self.evaluations += count
            return True
        self.evaluations += self.remaining
        self.remaining = 0
        self.exhausted = True
        return False


def init_gain_table(inst: Instance, a: Assignment) -> GainTable:
    if a.n != inst.n:
        raise ContractViolation(f'Assignment of size {a.n} used with instance of size {inst.n}')
    loc = a.loc_of
    spread = inst.flows @ inst.distances[loc, :]
    return 2 * (spread[np.arange(inst.n), loc][:, None] - spread)


def _relocation_gain(inst: Instance, loc: IntVector, u: int, k: int) -> int:
    after = loc.copy()
    after[u] = k
    return relocation_cost(inst, loc) - relocation_cost(inst, after)


def chain_gain(
    table: GainTable,
    chain: MoveChain,
    u_n: int,
    k_n: int,
    inst: Instance,
    a: Assignment | None = None,
) -> int:
    """Incremental gain of moving ``u_n`` to ``k_n`` after the moves in ``chain``.

    ``a`` is the assignment the chain started from; when given, ``u_n`` is
    checked to be the facility displaced by the last move.
    """
    if chain.closed:
        raise ContractViolation('Cannot extend a closed chain')
    if u_n in chain.facilities:
        raise ContractViolation(f'Facility {u_n} already moved in this chain')
    if not chain.moves:
        return int(table[u_n, k_n])
    ell = chain.moves[-1].target
    if a is not None and int(a.fac_at[ell]) != u_n:
        raise ContractViolation(f'Facility {u_n} is not the one displaced from location {ell}')
    d, f = inst.distances, inst.flows
    correction = 0
    for move in chain.moves:
        weight = int(f[u_n, move.facility])
        current = int(d[move.target, ell] - d[move.target, k_n])
        original = int(d[move.source, ell] - d[move.source, k_n])
        correction += (current - original) * weight
    return int(table[u_n, k_n]) + 2 * correction


def chain_gains(table: GainTable, inst: Instance, chain: MoveChain, u: int) -> IntVector:
    """Incremental gains of moving ``u`` to every location after ``chain`` (vectorised)."""
    if not chain.moves:
        return table[u].copy()
    moved = np.array(chain.facilities, dtype=np.int64)
    sources = np.array([m.source for m in chain.moves], dtype=np.int64)
    targets = np.array([m.target for m in chain.moves], dtype=np.int64)
    return _corrected_gains(
        table, inst.distances, inst.flows, u, chain.moves[-1].target, moved, sources, targets
    )


def _corrected_gains(
    table: GainTable,
    d: IntMatrix,
    f: IntMatrix,
    u: int,
    ell: int,
    moved: IntVector,
    sources: IntVector,
    targets: IntVector,
) -> IntVector:
    weights = f[u, moved]
    at_ell = weights @ (d[targets, ell] - d[sources, ell])
    return table[u] + 2 * (at_ell - weights @ (d[targets] - d[sources]))


class _ChainSearch:
    """Mutable depth-first state for the chains rooted at one start node."""

    def __init__(
        self,
        inst: Instance,
        a: Assignment,
        table: GainTable,
        max_depth: int,
        budget: MoveBudget,
        allow_reuse: bool,
        checks: bool,
    ) -> None:
        self.inst = inst
        self.d = inst.distances
        self.f = inst.flows
        self.table = table
        self.max_depth = max_depth
        self.budget = budget
        self.allow_reuse = allow_reuse
        self.checks = checks
        self.loc = a.loc_of.copy()
        self.occupant = a.fac_at.copy()
        self.in_chain = np.zeros(inst.n, dtype=np.int64)
        self.moves: list[Move] = []
        self.origin = -1

    def run(self, u0: int) -> MoveChain | None:
        self.origin = int(self.loc[u0])
        self.in_chain[u0] += 1
        return self._extend(u0, self.origin, 0)

    def _candidates(self, ell: int, depth: int) -> IntVector:
        if depth + 1 == self.max_depth:
            return np.array([self.origin] if depth else [], dtype=np.int64)
        if self.allow_reuse:
            mask = np.ones(self.loc.shape[0], dtype=bool)
        else:
            mask = self.in_chain[self.occupant] == 0
        mask[ell] = False
        mask[self.origin] = depth > 0
        return np.flatnonzero(mask)

    def _gains(self, u: int, ell: int) -> IntVector:
        if self.in_chain[u] > 1:
            # u was already moved once, so its table row no longer applies
            placed = self.d[:, self.loc]
            return 2 * (placed[ell] @ self.f[u] - placed @ self.f[u])
        if not self.moves:
            return self.table[u]
        moved = np.fromiter((m.facility for m in self.moves), dtype=np.int64)
        sources = np.fromiter((m.source for m in self.moves), dtype=np.int64)
        targets = np.fromiter((m.target for m in self.moves), dtype=np.int64)
        return _corrected_gains(self.table, self.d, self.f, u, ell, moved, sources, targets)

    def _extend(self, u: int, ell: int, depth: int) -> MoveChain | None:
        candidates = self._candidates(ell, depth)
        if candidates.size == 0:
            return None
        gains = self._gains(u, ell)[candidates]
        totals = (self.moves[-1].cumulative if self.moves else 0) + gains
        charged = -1
        for position in np.flatnonzero(totals > 0):
            if not self.budget.charge(int(position) - charged):
                return None
            charged = int(position)
            k = int(candidates[position])
            displaced = int(self.occupant[k])
            self._push(Move(u, ell, k, int(gains[position]), int(totals[position])))
            if k == self.origin:
                return MoveChain(tuple(self.moves), closed=True, allow_reuse=self.allow_reuse)
            self.in_chain[displaced] += 1
            found = self._extend(displaced, k, depth + 1)
            self.in_chain[displaced] -= 1
            if found is not None:
                return found
            self._pop(displaced)
            if self.budget.exhausted:
                return None
        self.budget.charge(candidates.size - 1 - charged)
        return None

    def _push(self, move: Move) -> None:
        if self.checks:
            self._check_move(move)
        self.moves.append(move)
        self.loc[move.facility] = move.target
        self.occupant[move.target] = move.facility

    def _pop(self, displaced: int) -> None:
        move = self.moves.pop()
        self.loc[move.facility] = move.source
        self.occupant[move.target] = displaced

    def _check_move(self, move: Move) -> None:
        if move.cumulative <= 0:
            raise InvariantViolation(f'Retained prefix with cumulative gain {move.cumulative}')
        if not self.allow_reuse and any(m.facility == move.facility for m in self.moves):
            raise InvariantViolation(f'Facility {move.facility} reused in chain')
        oracle = _relocation_gain(self.inst, self.loc, move.facility, move.target)
        if oracle != move.gain:
            raise InvariantViolation(
                f'Gain of moving {move.facility} to {move.target} is {move.gain}, oracle says {oracle}'
            )


def search_from_node(
    inst: Instance,
    a: Assignment,
    table: GainTable,
    u0: int,
    max_depth: int,
    budget_counter: MoveBudget,
    allow_reuse: bool = False,
    checks: bool | None = None,
) -> MoveChain | None:
    """First improving closed chain rooted at facility ``u0``, or ``None``."""
    if not 0 <= u0 < inst.n:
        raise ContractViolation(f'Start node {u0} out of range for n={inst.n}')
    if max_depth < 1:
        raise ContractViolation(f'max_depth must be at least 1, got {max_depth}')
    search = _ChainSearch(
        inst,
        a,
        table,
        max_depth,
        budget_counter,
        allow_reuse,
        settings.DEBUG_CHECKS if checks is None else checks,
    )
    return search.run(u0)


def apply_chain(a: Assignment, chain: MoveChain) -> Assignment:
    if not chain.closed:
        raise ContractViolation('Only closed chains can be applied')
    return a.relocated((m.facility, m.target) for m in chain.moves)


def update_gain_table(
    table: GainTable,
    inst: Instance,
    chain: MoveChain,
    old_a: Assignment,
    new_a: Assignment,
) -> GainTable:
    """Gain table for ``new_a`` from the one for ``old_a`` in O(N^2 * depth)."""
    updated = np.array(table, dtype=np.int64, copy=True)
    if not chain.moves:
        return updated
    d, f = inst.distances, inst.flows
    moved = np.unique(np.array(chain.facilities, dtype=np.int64))
    sources = np.array([m.source for m in chain.moves], dtype=np.int64)
    targets = np.array([m.target for m in chain.moves], dtype=np.int64)
    flows = f[chain.facilities, :]
    shift = d[targets] - d[sources]
    at_home = np.sum(flows * shift[:, old_a.loc_of], axis=0)
    updated += 2 * (at_home[:, None] - flows.T @ shift)

    new_loc = new_a.loc_of
    spread = f[moved] @ d[new_loc, :]
    updated[moved] = 2 * (spread[np.arange(moved.size), new_loc[moved]][:, None] - spread)
    return updated


def vdss_run(
    inst: Instance,
    start: Assignment,
    budget: SearchBudget,
    checks: bool | None = None,
    seed: int | None = None,
) -> RunRecord:
    n = inst.n
    if start.n != n:
        raise ContractViolation(f'Start assignment of size {start.n} used with instance of size {n}')
    checks = settings.DEBUG_CHECKS if checks is None else checks
    started = time.perf_counter()
    a = start
    table = init_gain_table(inst, a)
    start_cost = current = cost(inst, a)
    accepted = 0
    evaluations = 0

    while True:
        chain = None
        counters = [MoveBudget(budget.move_limit) for _ in range(n)]
        for depth in budget.depths:
            for u0 in range(n):
                if budget.budget_scope == 'depth_pass':
                    counters[u0] = MoveBudget(budget.move_limit)
                counter = counters[u0]
                before = counter.evaluations
                chain = search_from_node(
                    inst, a, table, u0, depth, counter, budget.allow_reuse, checks
                )
                evaluations += counter.evaluations - before
                if chain is not None:
                    break
            if chain is not None:
                break
        if chain is None:
            break

        new_a = apply_chain(a, chain)
        table = update_gain_table(table, inst, chain, a, new_a)
        current -= chain.total_gain
        accepted += 1
        if checks:
            _check_acceptance(inst, new_a, table, current)
        logger.debug(
            'Chain accepted',
            extra={'depth': chain.depth, 'gain': chain.total_gain, 'cost': current},
        )
        a = new_a

    wall_time = time.perf_counter() - started
    logger.debug(
        'VDSS run finished',
        extra={
            'n': n,
            'start_cost': start_cost,
            'best_cost': current,
            'chains': accepted,
            'evaluations': evaluations,
            'wall_time': round(wall_time, 6),
        },
    )
    return RunRecord(
        solver='vdss',
        n=n,
        seed=seed,
        start_cost=start_cost,
        best_cost=current,
        best_assignment=a.to_list(),
        best_iteration=accepted,
        iterations_used=accepted,
        chains_accepted=accepted,
        evaluations=evaluations,
        wall_time=wall_time,
        phase_times={'vdss': wall_time},
        phase_costs={'vdss': current},
    )


def _check_acceptance(inst: Instance, a: Assignment, table: GainTable, tracked: int) -> None:
    actual = cost(inst, a)
    if actual != tracked:
        raise InvariantViolation(f'Accepted chain left cost {actual}, expected {tracked}')
    fresh = init_gain_table(inst, a)
    drift = np.argwhere(fresh != table)
    if drift.size:
        u, k = drift[0]
        raise InvariantViolation(
            f'Gain table entry ({u}, {k}) is {int(table[u, k])}, fresh build gives {int(fresh[u, k])}'
        )


def _chain_from_structure(
    inst: Instance,
    a: Assignment,
    steps: list[tuple[int, int, int]],
    allow_reuse: bool,
) -> MoveChain:
    loc = a.loc_of.copy()
    total = 0
    moves = []
    for facility, source, target in steps:
        gain = _relocation_gain(inst, loc, facility, target)
        loc[facility] = target
        total += gain
        moves.append(Move(facility, source, target, gain, total))
    closed = len(moves) >= 2 and moves[-1].target == moves[0].source
    return MoveChain(tuple(moves), closed=closed, allow_reuse=allow_reuse)


def enumerate_closed_chains(
    inst: Instance,
    a: Assignment,
    max_depth: int,
    allow_reuse: bool = False,
    start_nodes: list[int] | None = None,
) -> Iterator[MoveChain]:
    """Every closed chain of at most ``max_depth`` moves, without pruning.

    Gains come from direct relocation cost differences, so this also serves
    as an oracle for the pruned search.
    """
    for u0 in range(inst.n) if start_nodes is None else start_nodes:
        walker = _ChainWalker(inst, a, int(u0), max_depth, allow_reuse)
        yield from walker.walk(int(u0), walker.origin)


class _ChainWalker:
    def __init__(
        self, inst: Instance, a: Assignment, u0: int, max_depth: int, allow_reuse: bool
    ) -> None:
        self.inst = inst
        self.a = a
        self.max_depth = max_depth
        self.allow_reuse = allow_reuse
        self.origin = int(a.loc_of[u0])
        self.occupant = a.fac_at.copy()
        self.in_chain = np.zeros(inst.n, dtype=np.int64)
        self.in_chain[u0] = 1
        self.steps: list[tuple[int, int, int]] = []

    def walk(self, u: int, ell: int) -> Iterator[MoveChain]:
        depth = len(self.steps)
        for k in range(self.inst.n):
            if k == ell:
                continue
            if k == self.origin:
                if depth:
                    yield _chain_from_structure(
                        self.inst, self.a, [*self.steps, (u, ell, k)], self.allow_reuse
                    )
                continue
            if depth + 1 >= self.max_depth:
                continue
            displaced = int(self.occupant[k])
            if not self.allow_reuse and self.in_chain[displaced]:
                continue
            self.steps.append((u, ell, k))
            self.occupant[k] = u
            self.in_chain[displaced] += 1
            yield from self.walk(displaced, k)
            self.in_chain[displaced] -= 1
            self.occupant[k] = displaced
            self.steps.pop()


def is_improving(chain: MoveChain) -> bool:
    """Whether the pruned search could accept ``chain``: every prefix strictly positive."""
    return chain.closed and all(m.cumulative > 0 for m in chain.moves)


def is_chain_optimal(inst: Instance, a: Assignment, max_depth: int) -> bool:
    return not any(is_improving(c) for c in enumerate_closed_chains(inst, a, max_depth))
