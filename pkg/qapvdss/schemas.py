from math import isclose
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from typing_extensions import Self

from qapvdss.config import settings
from qapvdss.core import Assignment

Solver = Literal['rts', 'vdss', 'hybrid']
OutputFormat = Literal['csv', 'json', 'plot']
BudgetScope = Literal['depth_pass', 'schedule_pass']


class GeneratorMetadata(BaseModel):
    n: int = Field(ge=2)
    seed: int
    max_entry: int = Field(ge=0)
    rng_name: str

    model_config = ConfigDict(extra='forbid')


class RtsParams(BaseModel):
    """Robust tabu search settings; ``None`` means the size-dependent default."""

    iterations: PositiveInt | None = None
    tabu_min_factor: PositiveFloat = settings.RTS_TABU_MIN_FACTOR
    tabu_max_factor: PositiveFloat = settings.RTS_TABU_MAX_FACTOR
    aspiration: PositiveInt | None = None
    seed: int = 0
    trace: bool = False

    model_config = ConfigDict(extra='forbid')

    @model_validator(mode='after')
    def _check_factors(self) -> Self:
        if self.tabu_min_factor > self.tabu_max_factor:
            raise ValueError('tabu_min_factor must not exceed tabu_max_factor')
        return self

    def iterations_for(self, n: int) -> int:
        return self.iterations if self.iterations is not None else n * n

    def aspiration_for(self, n: int) -> int:
        return self.aspiration if self.aspiration is not None else 2 * n * n


class SearchBudget(BaseModel):
    depths: list[PositiveInt] = Field(default_factory=lambda: list(settings.VDSS_DEPTHS))
    move_limit: PositiveInt = settings.VDSS_MOVE_LIMIT
    allow_reuse: bool = settings.VDSS_ALLOW_REUSE
    budget_scope: BudgetScope = settings.VDSS_BUDGET_SCOPE

    model_config = ConfigDict(extra='forbid')

    @model_validator(mode='after')
    def _check_depths(self) -> Self:
        if not self.depths:
            raise ValueError('At least one depth is required')
        if any(b <= a for a, b in zip(self.depths, self.depths[1:], strict=False)):
            raise ValueError(f'Depths must be strictly increasing: {self.depths}')
        return self


class RunRecord(BaseModel):
    solver: Solver
    n: PositiveInt
    seed: int | None = None
    start_cost: int
    best_cost: int
    best_assignment: list[int]
    best_iteration: int = 0
    iterations_used: int = 0
    chains_accepted: int = 0
    evaluations: int = 0
    wall_time: float = 0.0
    phase_times: dict[str, float] = Field(default_factory=dict)
    phase_costs: dict[str, int] = Field(default_factory=dict)
    cost_trace: list[tuple[int, int]] | None = None

    @model_validator(mode='after')
    def _check_trace(self) -> Self:
        if self.cost_trace:
            costs = [c for _, c in self.cost_trace]
            if any(b > a for a, b in zip(costs, costs[1:], strict=False)):
                raise ValueError('cost_trace best values must be non-increasing')
        return self

    def assignment(self) -> Assignment:
        return Assignment.from_loc_of(self.best_assignment)

    def deterministic_dump(self) -> dict[str, object]:
        """Fields that must repeat exactly for identical seeds."""
        return self.model_dump(exclude={'wall_time', 'phase_times'})


class TargetSpec(BaseModel):
    target: PositiveInt
    normalizer: PositiveInt

    model_config = ConfigDict(extra='forbid')


class TttSeries(BaseModel):
    times: list[PositiveFloat]
    probabilities: list[float]

    model_config = ConfigDict(extra='forbid', frozen=True)

    @model_validator(mode='after')
    def _check_points(self) -> Self:
        m = len(self.times)
        if m == 0 or len(self.probabilities) != m:
            raise ValueError('A TTT series needs one probability per recorded time')
        if any(b < a for a, b in zip(self.times, self.times[1:], strict=False)):
            raise ValueError('TTT times must be sorted')
        for i, p in enumerate(self.probabilities, start=1):
            if not isclose(p, (i - 0.5) / m, rel_tol=0, abs_tol=1e-15):
                raise ValueError(f'Probability {i} must equal (i - 1/2)/m')
        return self

    @property
    def m(self) -> int:
        return len(self.times)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.probabilities, strict=True))


class ImprovementReport(BaseModel):
    t50_rts: PositiveFloat
    t50_hybrid: PositiveFloat
    factor: PositiveFloat


class TttMeasurement(BaseModel):
    """One row of a run CSV."""

    instance: str
    solver: Solver
    seed: int
    target: int
    attempts: int
    time_s: float
    final_cost: int
    reached: bool


class ScalingReport(BaseModel):
    sizes: list[int]
    runs_per_size: int
    seed: int
    rts_medians: list[float]
    vdss_medians: list[float]
    rts_exponent: float
    vdss_exponent: float


class ReferenceInstance(BaseModel):
    name: str
    best_known: int
    threshold: int
    target: int
    reported_improvement: float

    model_config = ConfigDict(frozen=True)


class CliConfig(BaseModel):
    subcommand: Literal['solve', 'generate', 'ttt', 'report', 'scaling', 'curve']
    instance_path: str | None = None
    instance_name: str | None = None
    solvers: list[Solver] = Field(default_factory=lambda: ['hybrid'])
    seed: int | None = None
    runs: PositiveInt = 1
    target: int | None = Field(default=None, ge=0)
    targets: list[PositiveInt] = Field(default_factory=list)
    normalizer: PositiveInt | None = None
    depths: list[PositiveInt] = Field(default_factory=lambda: list(settings.VDSS_DEPTHS))
    move_limit: PositiveInt = settings.VDSS_MOVE_LIMIT
    budget_scope: BudgetScope = settings.VDSS_BUDGET_SCOPE
    allow_reuse: bool = settings.VDSS_ALLOW_REUSE
    rts_iterations: PositiveInt | None = None
    max_attempts: PositiveInt = settings.TTT_MAX_ATTEMPTS
    workers: PositiveInt = settings.QAPVDSS_WORKERS
    n: int | None = Field(default=None, ge=2)
    max_entry: int = Field(default=99, ge=0)
    sizes: list[PositiveInt] = Field(default_factory=list)
    inputs: list[str] = Field(default_factory=list)
    output_path: str | None = None
    output_format: OutputFormat | None = None

    model_config = ConfigDict(extra='forbid')

    @model_validator(mode='after')
    def _check_consistency(self) -> Self:
        needs_instance = {'solve', 'ttt', 'curve'}
        if self.subcommand in needs_instance and not self.instance_path:
            raise ValueError(f'{self.subcommand} requires --instance')
        if self.subcommand == 'ttt' and self.target is None:
            raise ValueError('ttt requires --target')
        if self.subcommand == 'generate':
            if self.n is None:
                raise ValueError('generate requires --n')
            if not self.output_path:
                raise ValueError('generate requires --output')
        if self.subcommand == 'report' and not self.inputs:
            raise ValueError('report requires at least one input CSV')
        if self.subcommand == 'scaling' and len(self.sizes) < 3:
            raise ValueError('scaling requires at least three --sizes')
        if self.subcommand == 'curve' and not self.targets:
            raise ValueError('curve requires --targets')
        if self.subcommand == 'solve' and self.output_format not in (None, 'json'):
            raise ValueError('solve writes a solution or, with --format json, its run summary')
        if not self.solvers:
            raise ValueError('At least one solver is required')
        return self

    def search_budget(self) -> SearchBudget:
        return SearchBudget(
            depths=self.depths,
            move_limit=self.move_limit,
            budget_scope=self.budget_scope,
            allow_reuse=self.allow_reuse,
        )

    def rts_params(self, seed: int = 0) -> RtsParams:
        return RtsParams(iterations=self.rts_iterations, seed=seed)
