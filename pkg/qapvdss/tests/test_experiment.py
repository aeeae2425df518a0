import logging
import os
from pathlib import Path

import pytest

from qapvdss.core import Instance, brute_force_optimum, cost, derive_seed, generate_instance
from qapvdss.experiment import (
    REFERENCE_INSTANCES,
    default_normalizer,
    hybrid_run,
    improvement_curve,
    reached_series,
    scaling_study,
    solve,
    time_to_target,
    ttt_campaign,
)
from qapvdss.qaplib import read_instance
from qapvdss.schemas import RtsParams, SearchBudget
from qapvdss.ttt import StatisticsError, t50


class TestReferenceInstances:
    def test_tai60a_row(self) -> None:
        ref = REFERENCE_INSTANCES['tai60a']
        assert (ref.best_known, ref.threshold, ref.target) == (7205962, 7320000, 7256000)

    def test_default_normalizer_is_threshold(self) -> None:
        assert default_normalizer('Tai100a') == 21360000
        assert default_normalizer('rand12-3') is None


class TestHybridRun:
    def test_phases_are_monotone(self) -> None:
        for seed in range(5):
            inst = generate_instance(10, seed)
            record = hybrid_run(inst, seed)
            assert record.solver == 'hybrid'
            assert record.best_cost <= record.phase_costs['rts'] <= record.start_cost
            assert record.best_cost == cost(inst, record.assignment())
            assert set(record.phase_times) == {'rts', 'vdss'}

    def test_zero_flow(self, zero_flow: Instance) -> None:
        record = hybrid_run(zero_flow, 3)
        assert record.phase_costs['rts'] == 0
        assert record.chains_accepted == 0

    def test_reaches_optimum_on_small_instances(self) -> None:
        hits = 0
        for run in range(100):
            inst = generate_instance(6, derive_seed(2024, run))
            optimum, _ = brute_force_optimum(inst)
            hits += hybrid_run(inst, run).best_cost == optimum
        assert hits >= 90


class TestSolve:
    @pytest.mark.parametrize('solver', ['rts', 'vdss', 'hybrid'])
    def test_deterministic(self, solver: str) -> None:
        inst = generate_instance(9, 1)
        first = solve(inst, solver, 42)  # type: ignore[arg-type]
        second = solve(inst, solver, 42)  # type: ignore[arg-type]
        assert first.solver == solver
        assert first.seed == 42
        assert first.deterministic_dump() == second.deterministic_dump()

    def test_toy2(self, toy2: Instance) -> None:
        assert solve(toy2, 'hybrid', 0).best_cost == 30

    def test_vdss_on_zero_flow_keeps_start(self, zero_flow: Instance) -> None:
        record = solve(zero_flow, 'vdss', 8)
        assert record.best_cost == 0
        assert record.chains_accepted == 0


class TestTimeToTarget:
    def test_easy_target_takes_one_attempt(self) -> None:
        inst = generate_instance(8, 2)
        measurement = time_to_target(inst, 10**9, 'hybrid', 5)
        assert measurement.reached
        assert measurement.attempts == 1
        assert measurement.time_s > 0
        assert measurement.instance == 'rand8-2'

    def test_zero_flow_target_zero(self, zero_flow: Instance) -> None:
        measurement = time_to_target(zero_flow, 0, 'rts', 1)
        assert measurement.reached
        assert measurement.attempts == 1
        assert measurement.final_cost == 0

    def test_attempt_counts_are_deterministic(self) -> None:
        inst = generate_instance(7, 9)
        optimum, _ = brute_force_optimum(inst)
        params = RtsParams(iterations=3)
        first = time_to_target(inst, optimum, 'rts', 11, rts_params=params, max_attempts=50)
        second = time_to_target(inst, optimum, 'rts', 11, rts_params=params, max_attempts=50)
        assert (first.attempts, first.final_cost, first.reached) == (second.attempts, second.final_cost, second.reached)

    def test_unreachable_target_is_censored(self, caplog: pytest.LogCaptureFixture) -> None:
        inst = generate_instance(6, 1)
        optimum, _ = brute_force_optimum(inst)
        with caplog.at_level(logging.WARNING, logger='qapvdss.experiment'):
            measurement = time_to_target(inst, optimum - 1, 'vdss', 2, max_attempts=3)
        assert not measurement.reached
        assert measurement.attempts == 3
        assert measurement.final_cost >= optimum
        assert 'censored' in caplog.text


class TestCampaign:
    def test_ordered_and_reproducible(self) -> None:
        inst = generate_instance(8, 4)
        first = ttt_campaign(inst, 10**9, 'rts', 4, master_seed=3, workers=1, instance_name='rand8')
        second = ttt_campaign(inst, 10**9, 'rts', 4, master_seed=3, workers=1, instance_name='rand8')
        assert [m.seed for m in first] == [derive_seed(3, i) for i in range(4)]
        assert [m.model_dump(exclude={'time_s'}) for m in first] == [
            m.model_dump(exclude={'time_s'}) for m in second
        ]
        assert t50(reached_series(first)) > 0

    def test_reached_series_excludes_censored(self) -> None:
        inst = generate_instance(6, 1)
        optimum, _ = brute_force_optimum(inst)
        censored = ttt_campaign(inst, optimum - 1, 'vdss', 2, master_seed=1, max_attempts=2)
        with pytest.raises(StatisticsError, match='No measurement reached'):
            reached_series(censored)

    @pytest.mark.slow
    @pytest.mark.filterwarnings('ignore::DeprecationWarning')
    def test_worker_pool_matches_sequential(self) -> None:
        inst = generate_instance(10, 4)
        sequential = ttt_campaign(inst, 10**9, 'hybrid', 6, master_seed=8, workers=1)
        pooled = ttt_campaign(inst, 10**9, 'hybrid', 6, master_seed=8, workers=3)
        assert [m.model_dump(exclude={'time_s'}) for m in sequential] == [
            m.model_dump(exclude={'time_s'}) for m in pooled
        ]


class TestScaling:
    def test_needs_three_sizes(self) -> None:
        with pytest.raises(StatisticsError, match='at least 3 sizes'):
            scaling_study([10, 20], 1, 0)

    def test_small_study_report(self) -> None:
        report = scaling_study([6, 8, 10], 1, 5, budget=SearchBudget(depths=[2]))
        assert report.sizes == [6, 8, 10]
        assert len(report.rts_medians) == len(report.vdss_medians) == 3
        assert all(t > 0 for t in report.rts_medians)

    @pytest.mark.slow
    @pytest.mark.timeout(3600)
    def test_fitted_exponents(self) -> None:
        report = scaling_study([60, 100, 200], 5, 1)
        assert 3.5 <= report.rts_exponent <= 4.6
        assert 2.8 <= report.vdss_exponent <= 4.1
        assert report.vdss_exponent < report.rts_exponent


class TestImprovementCurve:
    def test_points(self) -> None:
        inst = generate_instance(6, 2)
        optimum, _ = brute_force_optimum(inst)
        points = improvement_curve(inst, [optimum + 50, optimum + 10], optimum, runs=2, seed=1)
        assert [p['target'] for p in points] == [optimum + 50, optimum + 10]
        assert points[0]['normalized_target'] == pytest.approx(50 / optimum)
        assert all(p['improvement_factor'] > 0 for p in points)


@pytest.mark.slow
@pytest.mark.timeout(7200)
@pytest.mark.skipif('QAPVDSS_TAI60A' not in os.environ, reason='QAPVDSS_TAI60A must point at tai60a.dat')
class TestTai60a:
    CONSERVATIVE_TARGET = 7_400_000

    @pytest.fixture(scope='class')
    def tai60a(self) -> Instance:
        return read_instance(Path(os.environ['QAPVDSS_TAI60A']))

    def test_hybrid_reaches_threshold_in_half_the_runs(self, tai60a: Instance) -> None:
        ref = REFERENCE_INSTANCES['tai60a']
        records = [hybrid_run(tai60a, derive_seed(60, run)) for run in range(20)]
        assert all(r.wall_time <= 600 for r in records)
        assert sum(r.best_cost <= ref.threshold for r in records) >= 10

    def test_hybrid_dominates_rts_at_conservative_target(self, tai60a: Instance) -> None:
        ref = REFERENCE_INSTANCES['tai60a']
        (point,) = improvement_curve(tai60a, [self.CONSERVATIVE_TARGET], ref.threshold, runs=30, seed=60)
        assert point['improvement_factor'] >= 1.0
