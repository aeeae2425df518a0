import argparse
from collections.abc import Sequence
from enum import IntEnum
import logging
from pathlib import Path
import secrets
import sys
from typing import Any

import orjson
from pydantic import ValidationError

from qapvdss.config import settings
from qapvdss.core import RNG_NAME, ContractViolation, derive_seed, generate_instance
from qapvdss.experiment import (
    default_normalizer,
    improvement_curve,
    reached_series,
    scaling_study,
    solve,
    ttt_campaign,
)
from qapvdss.log_config_loader import setup_logging
from qapvdss.qaplib import ParseError, read_instance, save_instance, write_solution
from qapvdss.reports import (
    SchemaMismatchError,
    curve_frame,
    dump_json,
    measurements_frame,
    read_runs,
    summarize_runs,
    summary_table,
    write_json,
    write_plot_data,
    write_runs_csv,
)
from qapvdss.schemas import (
    CliConfig,
    GeneratorMetadata,
    RunRecord,
    Solver,
    TargetSpec,
    TttMeasurement,
    TttSeries,
)
from qapvdss.ttt import StatisticsError, improvement_factor, normalized_target, plot_rows, t50

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 2
    PARSE_ERROR = 3
    TARGET_UNREACHED = 4
    IO_ERROR = 5


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'Expected a comma separated list of integers: {text!r}') from None


def _solver_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(',') if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='qapvdss',
        description='Robust tabu search, variable depth sequential search and TTT experiments for the QAP.',
        argument_default=argparse.SUPPRESS,
    )
    parser.add_argument('--config', dest='config_file', help='JSON file with default option values')
    parser.add_argument('--log-level', dest='log_level')
    sub = parser.add_subparsers(dest='subcommand', required=True)

    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--seed', type=int)
    common.add_argument('--output', dest='output_path')
    common.add_argument('--format', dest='output_format', choices=['csv', 'json', 'plot'])

    solver_opts = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    solver_opts.add_argument('--instance', dest='instance_path')
    solver_opts.add_argument('--solver', dest='solvers', type=_solver_list, help='rts, vdss, hybrid (comma list for ttt)')
    solver_opts.add_argument('--depths', type=_int_list, help='comma list of maximum chain depths')
    solver_opts.add_argument('--move-limit', dest='move_limit', type=int)
    solver_opts.add_argument('--budget-scope', dest='budget_scope', choices=['depth_pass', 'schedule_pass'])
    solver_opts.add_argument('--allow-reuse', dest='allow_reuse', action='store_true', help='let a chain move a facility twice')
    solver_opts.add_argument('--rts-iterations', dest='rts_iterations', type=int)
    solver_opts.add_argument('--runs', type=int)
    solver_opts.add_argument('--workers', type=int)

    sub.add_parser('solve', parents=[common, solver_opts], argument_default=argparse.SUPPRESS, help='run a solver and write the best solution')

    generate = sub.add_parser('generate', parents=[common], argument_default=argparse.SUPPRESS, help='write a random symmetric instance')
    generate.add_argument('--n', type=int)
    generate.add_argument('--max-entry', dest='max_entry', type=int)

    ttt = sub.add_parser('ttt', parents=[common, solver_opts], argument_default=argparse.SUPPRESS, help='time-to-target measurements')
    ttt.add_argument('--target', type=int)
    ttt.add_argument('--normalizer', type=int)
    ttt.add_argument('--max-attempts', dest='max_attempts', type=int)
    ttt.add_argument('--name', dest='instance_name')

    report = sub.add_parser('report', parents=[common], argument_default=argparse.SUPPRESS, help='merge run CSVs into a summary')
    report.add_argument('inputs', nargs='*')
    report.add_argument('--normalizer', type=int)

    scaling = sub.add_parser('scaling', parents=[common, solver_opts], argument_default=argparse.SUPPRESS, help='fit run time exponents')
    scaling.add_argument('--sizes', type=_int_list)

    curve = sub.add_parser('curve', parents=[common, solver_opts], argument_default=argparse.SUPPRESS, help='improvement factor against normalized target')
    curve.add_argument('--targets', type=_int_list)
    curve.add_argument('--normalizer', type=int)
    curve.add_argument('--max-attempts', dest='max_attempts', type=int)
    return parser


def load_config(argv: Sequence[str] | None = None) -> tuple[CliConfig, dict[str, Any]]:
    """Merge flags over the config file over settings defaults."""
    flags = vars(build_parser().parse_args(argv))
    globals_ = {key: flags.pop(key) for key in ('config_file', 'log_level') if key in flags}
    merged: dict[str, Any] = {}
    if 'config_file' in globals_:
        path = Path(globals_['config_file'])
        try:
            loaded = orjson.loads(path.read_bytes())
        except (OSError, orjson.JSONDecodeError) as e:
            raise ConfigError(f'Cannot read config file {path}: {e}') from e
        if not isinstance(loaded, dict):
            raise ConfigError(f'Config file {path} must hold a JSON object')
        merged.update(loaded)
    merged.update(flags)
    try:
        return CliConfig.model_validate(merged), globals_
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def _seed_or_draw(config: CliConfig) -> int:
    if config.seed is not None:
        return config.seed
    seed = secrets.randbits(63)
    logger.info('No seed given, drew one', extra={'seed': seed})
    return seed


def _emit(config: CliConfig, text: str | bytes) -> None:
    data = text.encode('utf-8') if isinstance(text, str) else text
    if config.output_path:
        Path(config.output_path).write_bytes(data)
    else:
        sys.stdout.write(data.decode('utf-8'))
        sys.stdout.flush()


def cmd_solve(config: CliConfig) -> ExitCode:
    if len(config.solvers) != 1:
        raise ConfigError('solve takes exactly one --solver')
    solver = config.solvers[0]
    assert config.instance_path is not None
    inst = read_instance(config.instance_path)
    seed = _seed_or_draw(config)
    records: list[RunRecord] = []
    for run in range(config.runs):
        run_seed = seed if run == 0 else derive_seed(seed, run)
        records.append(solve(inst, solver, run_seed, config.rts_params(), config.search_budget()))
    best = min(records, key=lambda r: r.best_cost)
    solution = write_solution(inst.n, best.best_cost, best.assignment())
    summary = {
        'instance': config.instance_path,
        'solver': solver,
        'seed': seed,
        'best_cost': best.best_cost,
        'runs': [r.model_dump() for r in records],
    }
    if config.output_path:
        Path(config.output_path).write_text(solution, encoding='utf-8')
        write_json(Path(config.output_path).with_suffix('.json'), summary)
    elif config.output_format == 'json':
        sys.stdout.write(dump_json(summary).decode('utf-8') + '\n')
    else:
        sys.stdout.write(solution)
    print(best.best_cost, file=sys.stdout if config.output_path else sys.stderr)
    logger.info('Solve finished', extra={'solver': solver, 'seed': seed, 'best_cost': best.best_cost})
    return ExitCode.OK


def cmd_generate(config: CliConfig) -> ExitCode:
    assert config.n is not None and config.output_path is not None
    seed = _seed_or_draw(config)
    inst = generate_instance(config.n, seed, config.max_entry)
    metadata = GeneratorMetadata(n=config.n, seed=seed, max_entry=config.max_entry, rng_name=RNG_NAME)
    save_instance(config.output_path, inst, metadata)
    return ExitCode.OK


def _ttt_summary(
    config: CliConfig, seed: int, by_solver: dict[Solver, list[TttMeasurement]]
) -> tuple[dict[str, Any], dict[str, TttSeries]]:
    assert config.target is not None
    name = config.instance_name or Path(config.instance_path or '').stem
    normalizer = config.normalizer or default_normalizer(name)
    spec = None
    if normalizer and config.target > 0:
        spec = TargetSpec(target=config.target, normalizer=normalizer)
    summary: dict[str, Any] = {
        'instance': name,
        'target': config.target,
        'seed': seed,
        'runs': config.runs,
        'normalizer': normalizer,
        'normalized_target': normalized_target(spec.target, spec.normalizer) if spec else None,
        'solvers': {},
    }
    series: dict[str, TttSeries] = {}
    for solver, measurements in by_solver.items():
        reached = [m for m in measurements if m.reached]
        entry: dict[str, Any] = {
            'reached': len(reached),
            'censored': len(measurements) - len(reached),
            'attempts': [m.attempts for m in measurements],
            't50': None,
        }
        if reached:
            series[solver] = reached_series(measurements)
            entry['t50'] = t50(series[solver])
        summary['solvers'][solver] = entry
    if 'rts' in series and 'hybrid' in series:
        summary['improvement_factor'] = improvement_factor(
            summary['solvers']['rts']['t50'], summary['solvers']['hybrid']['t50']
        )
    return summary, series


def cmd_ttt(config: CliConfig) -> ExitCode:
    assert config.instance_path is not None and config.target is not None
    inst = read_instance(config.instance_path)
    seed = _seed_or_draw(config)
    name = config.instance_name or Path(config.instance_path).stem
    by_solver = {
        solver: ttt_campaign(
            inst,
            config.target,
            solver,
            config.runs,
            derive_seed(seed, index),
            config.workers,
            config.rts_params(),
            config.search_budget(),
            config.max_attempts,
            name,
        )
        for index, solver in enumerate(config.solvers)
    }
    summary, series = _ttt_summary(config, seed, by_solver)
    measurements = [m for runs in by_solver.values() for m in runs]

    if config.output_path:
        out = Path(config.output_path)
        out.mkdir(parents=True, exist_ok=True)
        write_runs_csv(out / 'runs.csv', measurements)
        for solver, solver_series in series.items():
            write_plot_data(out / f'{name}_{solver}.ttt', solver_series)
        write_json(out / 'summary.json', summary)
    elif config.output_format == 'csv':
        sys.stdout.write(measurements_frame(measurements).to_csv(index=False))
    elif config.output_format == 'plot':
        for solver, solver_series in series.items():
            sys.stdout.write(f'# {solver}\n' + '\n'.join(plot_rows(solver_series)) + '\n')
    else:
        sys.stdout.write(dump_json(summary).decode('utf-8') + '\n')

    unreached = [solver for solver in by_solver if solver not in series]
    if unreached:
        logger.error(
            'No successful runs for some solvers',
            extra={'solvers': unreached, 'censoring': {s: summary['solvers'][s]['censored'] for s in unreached}},
        )
        return ExitCode.TARGET_UNREACHED
    return ExitCode.OK


def cmd_report(config: CliConfig) -> ExitCode:
    runs = read_runs(config.inputs)
    if runs.empty:
        logger.error('Nothing to report', extra={'inputs': config.inputs})
        return ExitCode.TARGET_UNREACHED
    normalizers: dict[str, int] = {}
    if config.normalizer:
        normalizers = {str(name): config.normalizer for name in runs['instance'].unique()}
    rows = summarize_runs(runs, normalizers)
    if config.output_format == 'csv':
        _emit(config, summary_table(rows).to_csv(index=False))
    else:
        _emit(config, dump_json(rows) + b'\n')
    return ExitCode.OK


def cmd_scaling(config: CliConfig) -> ExitCode:
    seed = _seed_or_draw(config)
    report = scaling_study(config.sizes, config.runs, seed, config.rts_params(), config.search_budget())
    _emit(config, dump_json(report.model_dump()) + b'\n')
    return ExitCode.OK


def cmd_curve(config: CliConfig) -> ExitCode:
    assert config.instance_path is not None
    inst = read_instance(config.instance_path)
    name = config.instance_name or Path(config.instance_path).stem
    normalizer = config.normalizer or default_normalizer(name)
    if normalizer is None:
        raise ConfigError(f'No built-in normalizer for {name}, pass --normalizer')
    seed = _seed_or_draw(config)
    points = improvement_curve(
        inst,
        config.targets,
        normalizer,
        config.runs,
        seed,
        config.workers,
        config.rts_params(),
        config.search_budget(),
        config.max_attempts,
    )
    if config.output_format == 'csv':
        _emit(config, curve_frame(points).to_csv(index=False))
    elif config.output_format == 'plot':
        _emit(config, ''.join(f"{p['normalized_target']!r} {p['improvement_factor']!r}\n" for p in points))
    else:
        _emit(config, dump_json({'instance': name, 'seed': seed, 'normalizer': normalizer, 'points': points}) + b'\n')
    return ExitCode.OK


COMMANDS = {
    'solve': cmd_solve,
    'generate': cmd_generate,
    'ttt': cmd_ttt,
    'report': cmd_report,
    'scaling': cmd_scaling,
    'curve': cmd_curve,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        config, globals_ = load_config(argv)
    except ConfigError as e:
        setup_logging(settings.SERVICE_NAME, settings.LOG_LEVEL, settings.LOG_FORMAT, settings.SERVICE_VERSION)
        logger.error('Invalid configuration', extra={'error': str(e)})
        return ExitCode.CONFIG_ERROR

    setup_logging(
        service_name=settings.SERVICE_NAME,
        level=globals_.get('log_level', settings.LOG_LEVEL),
        log_format=settings.LOG_FORMAT,
        version=settings.SERVICE_VERSION,
    )
    try:
        return COMMANDS[config.subcommand](config)
    except ConfigError as e:
        logger.error('Invalid configuration', extra={'error': str(e)})
        return ExitCode.CONFIG_ERROR
    except ParseError as e:
        logger.error('Cannot parse input', extra={'error': str(e)})
        return ExitCode.PARSE_ERROR
    except SchemaMismatchError as e:
        logger.error('Run files do not share a schema', extra={'error': str(e)})
        return ExitCode.PARSE_ERROR
    except (ContractViolation, ValidationError) as e:
        logger.error('Invalid input', extra={'error': str(e)})
        return ExitCode.CONFIG_ERROR
    except StatisticsError as e:
        logger.error('Nothing to summarize', extra={'error': str(e)})
        return ExitCode.TARGET_UNREACHED
    except OSError as e:
        logger.error('I/O failure', extra={'error': str(e)})
        return ExitCode.IO_ERROR
    except Exception:
        logger.exception('Unexpected failure')
        raise


if __name__ == '__main__':
    sys.exit(main())
