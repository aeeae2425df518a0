"""QAPLIB text formats.

Instances are whitespace-separated integers: ``N``, the flow matrix, then the
distance matrix. Solutions are ``N cost`` followed by the facility ->
location permutation, 1-indexed on disk.
"""

import logging
from pathlib import Path
from typing import NamedTuple

import numpy as np
import orjson

from qapvdss.core import (
    INT64_MAX,
    MAX_ENTRY,
    Assignment,
    ContractViolation,
    Cost,
    Instance,
    cost,
    find_matrix_violation,
)
from qapvdss.schemas import GeneratorMetadata

logger = logging.getLogger(__name__)

_MATRIX_NAMES = ('flow', 'distance')


class ParseError(ValueError):
    def __init__(
        self,
        message: str,
        source: str = '',
        position: int | None = None,
        location: str = '',
    ):
        where = f' at token {position}' if position is not None else ''
        if location:
            where = f' at {location}{where}'
        origin = f' in {source}' if source else ''
        super().__init__(f'{message}{where}{origin}')
        self.source = source
        self.position = position
        self.location = location


class Solution(NamedTuple):
    n: int
    cost: Cost
    assignment: Assignment


def _to_int(token: str, position: int, source: str, limit: int = INT64_MAX, n: int | None = None) -> int:
    """Parse one token; with ``n`` given, errors name the matrix cell the token fills."""
    try:
        value = int(token)
    except ValueError:
        message = f'Non-integer token {token!r}'
    else:
        if abs(value) <= limit:
            return value
        message = f'Integer {token} out of range [-{limit}, {limit}]'
    location = _matrix_location(position, n) if n is not None else ''
    raise ParseError(message, source, position, location)


def _matrix_location(position: int, n: int) -> str:
    matrix, rest = divmod(position - 1, n * n)
    row, column = divmod(rest, n)
    return f'{_MATRIX_NAMES[matrix]} matrix row {row}, column {column}'


def _decode(path: Path) -> str:
    try:
        return path.read_text(encoding='utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(f'File is not valid UTF-8 text (byte {e.start})', str(path)) from None


def parse_instance(text: str, source: str = '') -> Instance:
    tokens = text.split()
    if not tokens:
        raise ParseError('Empty instance text', source)
    n = _to_int(tokens[0], 0, source)
    if n < 1:
        raise ParseError(f'Instance size must be positive, got {n}', source, 0)
    expected = 1 + 2 * n * n
    if len(tokens) < expected:
        raise ParseError(
            f'Truncated instance: expected {expected} integers for N={n}, found {len(tokens)}',
            source,
        )
    if len(tokens) > expected:
        raise ParseError(
            f'Unexpected trailing data after {expected} integers', source, expected
        )
    values = [
        _to_int(tok, pos, source, MAX_ENTRY, n)
        for pos, tok in enumerate(tokens[1:], start=1)
    ]
    body = np.array(values, dtype=np.int64).reshape(2, n, n)
    for name, matrix in zip(_MATRIX_NAMES, body, strict=True):
        violation = find_matrix_violation(matrix)
        if violation is not None:
            i, j, reason = violation
            raise ParseError(
                f'{name} matrix: {reason} at row {i}, column {j} '
                f'({int(matrix[i, j])} vs {int(matrix[j, i])})',
                source,
            )
    try:
        return Instance(flows=body[0], distances=body[1], name=Path(source).stem if source else '')
    except ContractViolation as e:
        raise ParseError(str(e), source) from None


def write_instance(inst: Instance) -> str:
    blocks = [str(inst.n)]
    for matrix in (inst.flows, inst.distances):
        blocks.append('\n'.join(' '.join(map(str, row)) for row in matrix.tolist()))
    return '\n\n'.join(blocks) + '\n'


def read_instance(path: str | Path) -> Instance:
    path = Path(path)
    return parse_instance(_decode(path), source=str(path))


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def save_instance(
    path: str | Path, inst: Instance, metadata: GeneratorMetadata | None = None
) -> None:
    """Write an instance; generator metadata goes to ``<path>.json`` since the format has no comments."""
    path = Path(path)
    path.write_text(write_instance(inst), encoding='utf-8')
    if metadata is not None:
        sidecar_path(path).write_bytes(
            orjson.dumps(metadata.model_dump(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)
        )
    logger.info('Instance written', extra={'path': str(path), 'n': inst.n})


def parse_solution(text: str, source: str = '') -> Solution:
    tokens = text.split()
    if len(tokens) < 2:
        raise ParseError('Solution needs a "N cost" header', source)
    n = _to_int(tokens[0], 0, source)
    value = _to_int(tokens[1], 1, source)
    if n < 1:
        raise ParseError(f'Solution size must be positive, got {n}', source, 0)
    if len(tokens) != 2 + n:
        raise ParseError(f'Expected {n} permutation entries, found {len(tokens) - 2}', source)
    perm = [_to_int(tok, pos, source) - 1 for pos, tok in enumerate(tokens[2:], start=2)]
    try:
        a = Assignment.from_loc_of(perm)
    except ContractViolation:
        raise ParseError(
            f'Permutation is not a bijection of 1..{n}: {[p + 1 for p in perm]}', source
        ) from None
    return Solution(n=n, cost=value, assignment=a)


def write_solution(n: int, value: Cost, a: Assignment) -> str:
    if a.n != n:
        raise ContractViolation(f'Assignment of size {a.n} written as size {n}')
    return f'{n} {value}\n' + ' '.join(str(int(x) + 1) for x in a.loc_of) + '\n'


def validate_solution(inst: Instance, solution: Solution) -> Cost:
    if solution.n != inst.n:
        raise ContractViolation(f'Solution size {solution.n} does not match instance size {inst.n}')
    actual = cost(inst, solution.assignment)
    if actual != solution.cost:
        raise ContractViolation(f'Solution states cost {solution.cost}, actual cost is {actual}')
    return actual


def read_solution(path: str | Path, inst: Instance | None = None) -> Solution:
    path = Path(path)
    solution = parse_solution(_decode(path), source=str(path))
    if inst is not None:
        validate_solution(inst, solution)
    return solution
