from pydantic import ValidationError
import pytest

from qapvdss.config import Settings
from qapvdss.schemas import CliConfig, RtsParams, RunRecord, SearchBudget, TargetSpec


class TestSettings:
    def test_env_overrides(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv('QAPVDSS_WORKERS', '4')
        monkeypatch.setenv('VDSS_DEPTHS', '[2, 3, 6]')
        settings = Settings()
        assert settings.QAPVDSS_WORKERS == 4
        assert settings.VDSS_DEPTHS == [2, 3, 6]

    def test_vdss_budget_settings(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv('VDSS_BUDGET_SCOPE', 'schedule_pass')
        monkeypatch.setenv('VDSS_ALLOW_REUSE', 'true')
        settings = Settings()
        assert settings.VDSS_BUDGET_SCOPE == 'schedule_pass'
        assert settings.VDSS_ALLOW_REUSE is True

    def test_rejects_unknown_budget_scope(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv('VDSS_BUDGET_SCOPE', 'per_chain')
        with pytest.raises(ValidationError, match='VDSS_BUDGET_SCOPE'):
            Settings()

    def test_test_environment(self) -> None:
        settings = Settings()
        assert settings.SERVICE_NAME == 'qapvdss-test'
        assert settings.DEBUG_CHECKS is True


class TestRtsParams:
    def test_size_defaults(self) -> None:
        params = RtsParams()
        assert params.iterations_for(60) == 3600
        assert params.aspiration_for(60) == 7200

    def test_factor_order(self) -> None:
        with pytest.raises(ValidationError, match='tabu_min_factor'):
            RtsParams(tabu_min_factor=1.2, tabu_max_factor=1.1)


class TestSearchBudget:
    def test_defaults(self) -> None:
        budget = SearchBudget()
        assert budget.depths == [2, 5]
        assert budget.move_limit == 100_000
        assert budget.allow_reuse is False
        assert budget.budget_scope == 'depth_pass'

    def test_depths_increasing(self) -> None:
        with pytest.raises(ValidationError, match='strictly increasing'):
            SearchBudget(depths=[5, 2])


class TestRunRecord:
    def test_trace_must_not_increase(self) -> None:
        with pytest.raises(ValidationError, match='non-increasing'):
            RunRecord(solver='rts', n=3, start_cost=64, best_cost=40, best_assignment=[1, 0, 2], cost_trace=[(0, 40), (3, 64)])

    def test_deterministic_dump_drops_timing(self) -> None:
        record = RunRecord(solver='vdss', n=2, start_cost=30, best_cost=30, best_assignment=[0, 1], wall_time=1.5)
        assert 'wall_time' not in record.deterministic_dump()
        assert record.assignment().to_list() == [0, 1]


class TestTargetSpec:
    def test_positive_fields(self) -> None:
        spec = TargetSpec(target=7256000, normalizer=7205962)
        assert spec.target > spec.normalizer

    @pytest.mark.parametrize('field', ['target', 'normalizer'])
    def test_rejects_zero(self, field: str) -> None:
        values = {'target': 10, 'normalizer': 5, field: 0}
        with pytest.raises(ValidationError, match=field):
            TargetSpec(**values)


class TestCliConfig:
    def test_generate_needs_output(self) -> None:
        with pytest.raises(ValidationError, match='generate requires --output'):
            CliConfig(subcommand='generate', n=5)

    def test_scaling_needs_three_sizes(self) -> None:
        with pytest.raises(ValidationError, match='three --sizes'):
            CliConfig(subcommand='scaling', sizes=[10, 20])

    def test_extra_keys_rejected(self) -> None:
        with pytest.raises(ValidationError):
            CliConfig.model_validate({'subcommand': 'report', 'inputs': ['a.csv'], 'colour': 'red'})

    def test_rts_params(self) -> None:
        config = CliConfig(subcommand='solve', instance_path='x.dat', rts_iterations=50)
        assert config.rts_params(seed=3) == RtsParams(iterations=50, seed=3)
