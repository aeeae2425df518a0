from collections.abc import Callable, Iterator
import logging
import os

import numpy as np
import pytest

from qapvdss.core import Instance, generate_instance


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if os.environ.get('QAPVDSS_RUN_SLOW') == '1':
        return
    skip_slow = pytest.mark.skip(reason='set QAPVDSS_RUN_SLOW=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def toy3() -> Instance:
    return Instance(
        flows=np.array([[0, 2, 4], [2, 0, 1], [4, 1, 0]]),
        distances=np.array([[0, 3, 6], [3, 0, 2], [6, 2, 0]]),
        name='toy3',
    )


@pytest.fixture
def toy2() -> Instance:
    return Instance(flows=np.array([[0, 3], [3, 0]]), distances=np.array([[0, 5], [5, 0]]), name='toy2')


@pytest.fixture
def toy2_text() -> str:
    return '2\n0 3\n3 0\n0 5\n5 0\n'


@pytest.fixture
def zero_flow() -> Instance:
    inst = generate_instance(6, seed=11)
    return Instance(flows=np.zeros((6, 6), dtype=np.int64), distances=inst.distances, name='zero6')


@pytest.fixture
def random_instance() -> Callable[[int, int], Instance]:
    def make(n: int, seed: int) -> Instance:
        return generate_instance(n, seed)

    return make


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def restore_root_logger() -> Iterator[None]:
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
