from collections import Counter
from itertools import permutations

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from qapvdss.core import (
    Assignment,
    ContractViolation,
    Instance,
    brute_force_optimum,
    cost,
    derive_seed,
    find_matrix_violation,
    generate_instance,
    random_assignment,
    relocation_cost,
)
from qapvdss.tests.strategies import assignments, instances


class TestInstance:
    def test_rejects_asymmetric_matrix(self) -> None:
        with pytest.raises(ContractViolation, match='asymmetric pair at \\(0, 1\\)'):
            Instance(flows=np.array([[0, 3], [4, 0]]), distances=np.array([[0, 5], [5, 0]]))

    def test_rejects_nonzero_diagonal(self) -> None:
        with pytest.raises(ContractViolation, match='nonzero diagonal'):
            Instance(flows=np.array([[1, 3], [3, 0]]), distances=np.array([[0, 5], [5, 0]]))

    def test_rejects_shape_mismatch(self) -> None:
        with pytest.raises(ContractViolation, match='distance matrix has shape'):
            Instance(flows=np.zeros((2, 2)), distances=np.zeros((3, 3)))

    def test_rejects_entries_that_overflow_int64(self) -> None:
        big = np.array([[0, 2**32 - 1], [2**32 - 1, 0]])
        with pytest.raises(ContractViolation, match='too large for exact int64'):
            Instance(flows=big, distances=big)

    def test_largest_safe_entries_cost_exactly(self) -> None:
        # 4 * n^2 * 2^29 * 2^29 = 2^62
        big = np.array([[0, 2**29], [2**29, 0]])
        inst = Instance(flows=big, distances=big)
        assert cost(inst, Assignment.identity(2)) == 2 * 2**58

    def test_matrices_are_read_only(self, toy3: Instance) -> None:
        with pytest.raises(ValueError):
            toy3.flows[0, 1] = 9

    def test_equality_by_content(self, toy3: Instance) -> None:
        copy = Instance(flows=toy3.flows.copy(), distances=toy3.distances.copy(), name='other')
        assert copy == toy3

    def test_find_matrix_violation_negative(self) -> None:
        assert find_matrix_violation(np.array([[0, -1], [-1, 0]])) == (0, 1, 'negative entry')

    def test_find_matrix_violation_clean(self, toy3: Instance) -> None:
        assert find_matrix_violation(toy3.flows) is None


class TestAssignment:
    def test_inverse_directions(self) -> None:
        a = Assignment.from_fac_at([2, 0, 1])
        assert a.loc_of.tolist() == [1, 2, 0]
        assert a == Assignment.from_loc_of([1, 2, 0])

    def test_not_a_permutation(self) -> None:
        with pytest.raises(ContractViolation, match='Not a permutation'):
            Assignment.from_loc_of([0, 0, 1])

    def test_swapped_exchanges_locations(self) -> None:
        a = Assignment.identity(3).swapped(0, 1)
        assert a.fac_at.tolist() == [1, 0, 2]

    def test_relocated_must_stay_bijective(self) -> None:
        with pytest.raises(ContractViolation, match='not a bijection'):
            Assignment.identity(3).relocated([(0, 1)])

    def test_relocated_cycle(self) -> None:
        a = Assignment.identity(3).relocated([(0, 1), (1, 2), (2, 0)])
        assert a.to_list() == [1, 2, 0]


class TestCost:
    def test_toy3_identity(self, toy3: Instance) -> None:
        assert cost(toy3, Assignment.identity(3)) == 64

    def test_toy2_both_permutations(self, toy2: Instance) -> None:
        assert cost(toy2, Assignment.identity(2)) == 30
        assert cost(toy2, Assignment.from_loc_of([1, 0])) == 30

    def test_zero_flow(self, zero_flow: Instance) -> None:
        assert cost(zero_flow, random_assignment(6, 3)) == 0

    def test_size_mismatch(self, toy3: Instance) -> None:
        with pytest.raises(ContractViolation, match='size 2'):
            cost(toy3, Assignment.identity(2))

    def test_double_sum_oracle(self, rng: np.random.Generator) -> None:
        for seed in range(20):
            inst = generate_instance(int(rng.integers(2, 9)), seed)
            a = random_assignment(inst.n, seed)
            expected = sum(
                int(inst.flows[u, v]) * int(inst.distances[a.loc_of[u], a.loc_of[v]])
                for u in range(inst.n)
                for v in range(inst.n)
            )
            assert cost(inst, a) == expected

    @given(st.data())
    @settings(max_examples=150, deadline=None)
    def test_relabeling_symmetry(self, data: st.DataObject) -> None:
        inst = data.draw(instances())
        a = data.draw(assignments(inst.n))
        perm = np.array(data.draw(st.permutations(range(inst.n))), dtype=np.int64)
        relabeled = Instance(flows=inst.flows[np.ix_(perm, perm)], distances=inst.distances)
        assert cost(relabeled, Assignment.from_loc_of(a.loc_of[perm])) == cost(inst, a)

    @given(st.data())
    @settings(max_examples=100, deadline=None)
    def test_cost_is_non_negative(self, data: st.DataObject) -> None:
        inst = data.draw(instances())
        assert cost(inst, data.draw(assignments(inst.n))) >= 0

    def test_role_swap_invariance(self, rng: np.random.Generator) -> None:
        inst = generate_instance(6, 5)
        swapped = Instance(flows=inst.distances, distances=inst.flows)
        a = random_assignment(6, 9)
        assert cost(swapped, Assignment.from_loc_of(a.fac_at)) == cost(inst, a)


class TestRelocationCost:
    def test_double_occupancy(self, toy3: Instance) -> None:
        assert relocation_cost(toy3, [1, 1, 2]) == 20

    def test_everything_at_one_location(self, toy3: Instance) -> None:
        assert relocation_cost(toy3, [0, 0, 0]) == 0

    def test_matches_cost_on_bijections(self) -> None:
        for n in range(2, 6):
            inst = generate_instance(n, n)
            for perm in permutations(range(n)):
                assert relocation_cost(inst, perm) == cost(inst, Assignment.from_loc_of(perm))

    def test_out_of_range_location(self, toy3: Instance) -> None:
        with pytest.raises(ContractViolation, match='out-of-range location 3'):
            relocation_cost(toy3, [0, 3, 1])


class TestGenerator:
    def test_deterministic(self) -> None:
        assert generate_instance(12, 42) == generate_instance(12, 42)

    def test_seed_changes_instance(self) -> None:
        assert generate_instance(12, 42) != generate_instance(12, 43)

    def test_entry_bounds_and_invariants(self) -> None:
        inst = generate_instance(30, 1, max_entry=7)
        for matrix in (inst.flows, inst.distances):
            assert matrix.min() >= 0
            assert matrix.max() <= 7
            assert find_matrix_violation(matrix) is None

    def test_uniform_mean(self) -> None:
        inst = generate_instance(200, 1)
        off_diagonal = ~np.eye(200, dtype=bool)
        assert 47 <= inst.flows[off_diagonal].mean() <= 52
        assert 47 <= inst.distances[off_diagonal].mean() <= 52

    def test_rejects_tiny_n(self) -> None:
        with pytest.raises(ContractViolation, match='n >= 2'):
            generate_instance(1, 0)


class TestRandomAssignment:
    def test_single_element(self) -> None:
        assert random_assignment(1, 5).to_list() == [0]

    def test_deterministic(self) -> None:
        assert random_assignment(10, 5) == random_assignment(10, 5)

    def test_uniform_over_permutations(self) -> None:
        draws = Counter(tuple(random_assignment(4, derive_seed(1, i)).to_list()) for i in range(10_000))
        assert len(draws) == 24
        for count in draws.values():
            assert abs(count / 10_000 - 1 / 24) <= 0.02


class TestDeriveSeed:
    def test_stable_and_distinct(self) -> None:
        assert derive_seed(7, 1) == derive_seed(7, 1)
        assert derive_seed(7, 1) != derive_seed(7, 2)
        assert derive_seed(7, 1) != derive_seed(8, 1)

    def test_fits_in_63_bits(self) -> None:
        assert 0 <= derive_seed(-1, 2**70) < 2**63


class TestBruteForce:
    def test_toy3_optimum(self, toy3: Instance) -> None:
        value, a = brute_force_optimum(toy3)
        assert value == 40
        assert a.fac_at.tolist() == [1, 0, 2]

    def test_limit(self) -> None:
        with pytest.raises(ContractViolation, match='n <= 9'):
            brute_force_optimum(generate_instance(10, 0))
