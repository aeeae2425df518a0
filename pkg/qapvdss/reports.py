"""Persistence of experiment results: run CSVs, JSON summaries and TTT plot data."""

from collections.abc import Iterable, Mapping, Sequence
import logging
from pathlib import Path
from typing import Any

import orjson
import pandas as pd

from qapvdss.experiment import REFERENCE_INSTANCES
from qapvdss.schemas import TttMeasurement, TttSeries
from qapvdss.ttt import StatisticsError, improvement_factor, normalized_target, plot_rows, t50, ttt_series

logger = logging.getLogger(__name__)

RUN_COLUMNS = list(TttMeasurement.model_fields)
CURVE_COLUMNS = ['target', 'normalized_target', 't50_rts', 't50_hybrid', 'improvement_factor']
TIMING_FIELDS = frozenset({'time_s', 't50', 't50_rts', 't50_hybrid', 'improvement_factor', 'wall_time', 'phase_times'})


class SchemaMismatchError(ValueError):
    def __init__(self, source: str, columns: Sequence[str]):
        super().__init__(
            f'Run file {source} has columns {list(columns)}, expected {RUN_COLUMNS}'
        )
        self.source = source
        self.columns = list(columns)


def dump_json(payload: Any) -> bytes:
    return orjson.dumps(
        payload,
        option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY,
    )


def write_json(path: str | Path, payload: Any) -> None:
    Path(path).write_bytes(dump_json(payload) + b'\n')


def strip_timing(payload: Any) -> Any:
    """Copy of a summary without wall-clock derived fields."""
    if isinstance(payload, Mapping):
        return {k: strip_timing(v) for k, v in payload.items() if k not in TIMING_FIELDS}
    if isinstance(payload, list):
        return [strip_timing(v) for v in payload]
    return payload


def measurements_frame(measurements: Iterable[TttMeasurement]) -> pd.DataFrame:
    return pd.DataFrame([m.model_dump() for m in measurements], columns=RUN_COLUMNS)


def write_runs_csv(path: str | Path, measurements: Iterable[TttMeasurement]) -> None:
    measurements_frame(measurements).to_csv(path, index=False)


def read_runs(paths: Sequence[str | Path]) -> pd.DataFrame:
    frames = []
    for path in paths:
        try:
            frame = pd.read_csv(path)
        except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError):
            raise SchemaMismatchError(str(path), []) from None
        if list(frame.columns) != RUN_COLUMNS:
            raise SchemaMismatchError(str(path), list(frame.columns))
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=RUN_COLUMNS)
    merged = pd.concat(frames, ignore_index=True)
    merged['reached'] = merged['reached'].astype(bool)
    logger.debug('Run files merged', extra={'files': len(frames), 'rows': len(merged)})
    return merged


def write_plot_data(path: str | Path, series: TttSeries) -> None:
    Path(path).write_text('\n'.join(plot_rows(series)) + '\n', encoding='utf-8')


def summarize_runs(
    runs: pd.DataFrame, normalizers: Mapping[str, int] | None = None
) -> list[dict[str, Any]]:
    """One row per (instance, target): best found, best known, threshold and per-solver t50.

    Statistics depend only on the multiset of runs, so merging run files in
    any order gives the same summary.
    """
    normalizers = dict(normalizers or {})
    rows = []
    for (instance, target_key), group in runs.groupby(['instance', 'target'], sort=True):
        name = str(instance)
        target = int(target_key)
        reference = REFERENCE_INSTANCES.get(name.lower())
        normalizer = normalizers.get(name) or (reference.threshold if reference else None)
        row: dict[str, Any] = {
            'instance': name,
            'target': target,
            'best_found': int(group['final_cost'].min()),
            'best_known': reference.best_known if reference else None,
            'threshold': reference.threshold if reference else None,
            'normalized_target': normalized_target(target, normalizer) if normalizer else None,
            'solvers': {},
        }
        t50s = {}
        for solver, runs_of_solver in group.groupby('solver', sort=True):
            reached = runs_of_solver[runs_of_solver['reached']]
            entry: dict[str, Any] = {
                'runs': int(len(runs_of_solver)),
                'reached': int(len(reached)),
                'censored': int(len(runs_of_solver) - len(reached)),
                'attempts': int(runs_of_solver['attempts'].sum()),
                't50': None,
            }
            if len(reached):
                entry['t50'] = t50(ttt_series(sorted(reached['time_s'].tolist())))
                t50s[str(solver)] = entry['t50']
            row['solvers'][str(solver)] = entry
        if 'rts' in t50s and 'hybrid' in t50s:
            row['improvement_factor'] = improvement_factor(t50s['rts'], t50s['hybrid'])
        rows.append(row)
    if not rows:
        raise StatisticsError('No runs to report')
    return rows


def summary_table(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    """Flat table view: instance, best found, best known, threshold, target, improvement."""
    return pd.DataFrame(
        [
            {
                'instance': row['instance'],
                'best_found': row['best_found'],
                'best_known': row['best_known'],
                'threshold': row['threshold'],
                'target': row['target'],
                'normalized_target': row['normalized_target'],
                'improvement_factor': row.get('improvement_factor'),
            }
            for row in rows
        ]
    )


def curve_frame(points: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    return pd.DataFrame([{column: point[column] for column in CURVE_COLUMNS} for point in points], columns=CURVE_COLUMNS)
