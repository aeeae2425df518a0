"""Problem data model for the symmetric quadratic assignment problem.

Flows are indexed by facility (node) and distances by location, so the cost
of an assignment is ``sum_u sum_v F(u, v) * D(loc(u), loc(v))`` over ordered
facility pairs. All arithmetic is exact int64.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from itertools import permutations
import logging
from typing import Any

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

IntMatrix = npt.NDArray[np.int64]
IntVector = npt.NDArray[np.int64]
Cost = int

RNG_NAME = 'numpy.PCG64'
MAX_ENTRY = 2**32 - 1
INT64_MAX = int(np.iinfo(np.int64).max)
_SEED_MASK = 2**64 - 1
BRUTE_FORCE_MAX_N = 9


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class InvariantViolation(AssertionError):
    """An internal consistency check failed (debug checks only)."""


def find_matrix_violation(matrix: IntMatrix) -> tuple[int, int, str] | None:
    """Return the first (row, column, reason) breaking the instance invariants."""
    negative = np.argwhere(matrix < 0)
    if negative.size:
        i, j = negative[0]
        return int(i), int(j), 'negative entry'
    too_large = np.argwhere(matrix > MAX_ENTRY)
    if too_large.size:
        i, j = too_large[0]
        return int(i), int(j), 'entry exceeds 32-bit range'
    diagonal = np.flatnonzero(np.diagonal(matrix))
    if diagonal.size:
        i = int(diagonal[0])
        return i, i, 'nonzero diagonal'
    asymmetric = np.argwhere(matrix != matrix.T)
    if asymmetric.size:
        i, j = asymmetric[0]
        return int(i), int(j), 'asymmetric pair'
    return None


def arithmetic_bound(n: int, flows: IntMatrix, distances: IntMatrix) -> int:
    """Bound on the magnitude of costs, swap deltas and chain gains: ``4 * n^2 * max F * max D``."""
    return 4 * n * n * int(flows.max(initial=0)) * int(distances.max(initial=0))


def _frozen(values: Any, ndim: int) -> npt.NDArray[np.int64]:
    array = np.array(values, dtype=np.int64, copy=True)
    if array.ndim != ndim:
        raise ContractViolation(f'Expected a {ndim}-dimensional array, got {array.ndim}')
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable symmetric QAP instance; safe to share between workers."""

    flows: IntMatrix
    distances: IntMatrix
    name: str = field(default='', compare=False)

    def __post_init__(self) -> None:
        flows = _frozen(self.flows, 2)
        distances = _frozen(self.distances, 2)
        n = flows.shape[0]
        if n < 1:
            raise ContractViolation('Instance size must be positive')
        for label, matrix in (('flow', flows), ('distance', distances)):
            if matrix.shape != (n, n):
                raise ContractViolation(
                    f'{label} matrix has shape {matrix.shape}, expected {(n, n)}'
                )
            violation = find_matrix_violation(matrix)
            if violation is not None:
                i, j, reason = violation
                raise ContractViolation(f'{label} matrix: {reason} at ({i}, {j})')
        bound = arithmetic_bound(n, flows, distances)
        if bound > INT64_MAX:
            raise ContractViolation(
                f'Entries too large for exact int64 arithmetic: 4 * n^2 * max F * max D = {bound} '
                f'exceeds {INT64_MAX}'
            )
        object.__setattr__(self, 'flows', flows)
        object.__setattr__(self, 'distances', distances)

    @property
    def n(self) -> int:
        return int(self.flows.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return np.array_equal(self.flows, other.flows) and np.array_equal(
            self.distances, other.distances
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Assignment:
    """Bijection between facilities and locations, kept in both directions."""

    loc_of: IntVector
    fac_at: IntVector

    def __post_init__(self) -> None:
        loc_of = _frozen(self.loc_of, 1)
        fac_at = _frozen(self.fac_at, 1)
        n = loc_of.shape[0]
        if fac_at.shape[0] != n:
            raise ContractViolation('loc_of and fac_at differ in length')
        if not is_permutation(loc_of):
            raise ContractViolation(f'Not a permutation of 0..{n - 1}: {loc_of.tolist()}')
        if not np.array_equal(fac_at[loc_of], np.arange(n)):
            raise ContractViolation('loc_of and fac_at are not mutually inverse')
        object.__setattr__(self, 'loc_of', loc_of)
        object.__setattr__(self, 'fac_at', fac_at)

    @classmethod
    def from_loc_of(cls, loc_of: Sequence[int] | IntVector) -> 'Assignment':
        loc = np.asarray(loc_of, dtype=np.int64)
        if loc.ndim != 1 or not is_permutation(loc):
            raise ContractViolation(f'Not a permutation: {list(np.ravel(loc))}')
        return cls(loc_of=loc, fac_at=np.argsort(loc).astype(np.int64))

    @classmethod
    def from_fac_at(cls, fac_at: Sequence[int] | IntVector) -> 'Assignment':
        fac = np.asarray(fac_at, dtype=np.int64)
        if fac.ndim != 1 or not is_permutation(fac):
            raise ContractViolation(f'Not a permutation: {list(np.ravel(fac))}')
        return cls(loc_of=np.argsort(fac).astype(np.int64), fac_at=fac)

    @classmethod
    def identity(cls, n: int) -> 'Assignment':
        return cls.from_loc_of(np.arange(n, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.loc_of.shape[0])

    def swapped(self, i: int, j: int) -> 'Assignment':
        """Exchange the facilities sitting at locations ``i`` and ``j``."""
        fac = self.fac_at.copy()
        fac[i], fac[j] = fac[j], fac[i]
        return Assignment.from_fac_at(fac)

    def relocated(self, moves: Iterable[tuple[int, int]]) -> 'Assignment':
        """Move each (facility, location) pair at once; the result must be a bijection."""
        loc = self.loc_of.copy()
        for facility, location in moves:
            loc[facility] = location
        if not is_permutation(loc):
            raise ContractViolation(f'Relocation is not a bijection: {loc.tolist()}')
        return Assignment.from_loc_of(loc)

    def to_list(self) -> list[int]:
        return [int(x) for x in self.loc_of]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self.loc_of, other.loc_of)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f'Assignment(fac_at={self.fac_at.tolist()})'


def is_permutation(values: npt.NDArray[Any]) -> bool:
    n = values.shape[0]
    if n == 0:
        return False
    if values.min() < 0 or values.max() >= n:
        return False
    return bool(np.bincount(values, minlength=n).max() == 1)


def _check_size(inst: Instance, size: int) -> None:
    if size != inst.n:
        raise ContractViolation(f'Assignment of size {size} used with instance of size {inst.n}')


def cost(inst: Instance, a: Assignment) -> Cost:
    _check_size(inst, a.n)
    return _map_cost(inst, a.loc_of)


def relocation_cost(inst: Instance, loc_of: Sequence[int] | IntVector) -> Cost:
    """Cost of an arbitrary facility -> location map (holes and double occupancy allowed)."""
    loc = np.asarray(loc_of, dtype=np.int64)
    if loc.ndim != 1:
        raise ContractViolation('Relocation map must be one-dimensional')
    _check_size(inst, loc.shape[0])
    bad = np.flatnonzero((loc < 0) | (loc >= inst.n))
    if bad.size:
        u = int(bad[0])
        raise ContractViolation(f'Facility {u} mapped to out-of-range location {int(loc[u])}')
    return _map_cost(inst, loc)


def _map_cost(inst: Instance, loc: IntVector) -> Cost:
    placed = inst.distances[np.ix_(loc, loc)]
    return int(np.sum(inst.flows * placed, dtype=np.int64))


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & _SEED_MASK))


def derive_seed(master: int, *stream: int) -> int:
    """Independent 63-bit seed for a named sub-stream of ``master``."""
    sequence = np.random.SeedSequence([master & _SEED_MASK, *(s & _SEED_MASK for s in stream)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0]) >> 1


def generate_instance(n: int, seed: int, max_entry: int = 99) -> Instance:
    """Random symmetric instance with entries uniform on [0, max_entry].

    Only the strict upper triangles are drawn (flows first, then distances)
    and mirrored.

    >>> inst = generate_instance(4, seed=7)
    >>> bool((inst.flows == inst.flows.T).all())
    True
    """
    if n < 2:
        raise ContractViolation(f'Generated instances need n >= 2, got {n}')
    if not 0 <= max_entry <= MAX_ENTRY:
        raise ContractViolation(f'max_entry must lie in [0, {MAX_ENTRY}]')
    rng = _rng(seed)
    upper = np.triu_indices(n, k=1)
    matrices = []
    for _ in range(2):
        matrix = np.zeros((n, n), dtype=np.int64)
        matrix[upper] = rng.integers(0, max_entry, size=upper[0].size, endpoint=True)
        matrices.append(matrix + matrix.T)
    logger.debug('Instance generated', extra={'n': n, 'seed': seed, 'max_entry': max_entry})
    return Instance(flows=matrices[0], distances=matrices[1], name=f'rand{n}-{seed}')


def random_assignment(n: int, seed: int) -> Assignment:
    if n < 1:
        raise ContractViolation(f'Assignment size must be positive, got {n}')
    return Assignment.from_loc_of(_rng(seed).permutation(n))


def brute_force_optimum(inst: Instance) -> tuple[Cost, Assignment]:
    """Exhaustive optimum for tiny instances; ties go to the lexicographically first map."""
    if inst.n > BRUTE_FORCE_MAX_N:
        raise ContractViolation(f'Brute force is limited to n <= {BRUTE_FORCE_MAX_N}')
    perms = np.array(list(permutations(range(inst.n))), dtype=np.int64)
    placed = inst.distances[perms[:, :, None], perms[:, None, :]]
    costs = np.sum(inst.flows[None, :, :] * placed, axis=(1, 2), dtype=np.int64)
    best = int(np.argmin(costs))
    return int(costs[best]), Assignment.from_loc_of(perms[best])
