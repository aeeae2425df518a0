"""Time-to-target statistics.

The i-th shortest of m recorded times gets probability ``(i - 1/2) / m``;
``t50`` reads the empirical curve at 0.5 with linear interpolation between
bracketing points and clamping at both ends.
"""

from collections.abc import Sequence
import math

import numpy as np

from qapvdss.schemas import ImprovementReport, TttSeries


class StatisticsError(ValueError):
    pass


def ttt_series(times: Sequence[float]) -> TttSeries:
    """
    >>> ttt_series([3.0, 1.0]).points()
    [(1.0, 0.25), (3.0, 0.75)]
    """
    if not times:
        raise StatisticsError('A TTT series needs at least one recorded time')
    if any(not t > 0 or not math.isfinite(t) for t in times):
        raise StatisticsError(f'Recorded times must be positive and finite: {list(times)}')
    ordered = sorted(float(t) for t in times)
    m = len(ordered)
    return TttSeries(times=ordered, probabilities=[(i - 0.5) / m for i in range(1, m + 1)])


def t50(series: TttSeries) -> float:
    probabilities = series.probabilities
    if 0.5 <= probabilities[0]:
        return series.times[0]
    if 0.5 >= probabilities[-1]:
        return series.times[-1]
    return float(np.interp(0.5, probabilities, series.times))


def improvement_factor(t50_rts: float, t50_hybrid: float) -> float:
    if t50_rts <= 0 or t50_hybrid <= 0:
        raise StatisticsError(f'Improvement factor needs positive times, got {t50_rts}, {t50_hybrid}')
    return t50_rts / t50_hybrid


def improvement_report(rts_times: Sequence[float], hybrid_times: Sequence[float]) -> ImprovementReport:
    rts = t50(ttt_series(rts_times))
    hybrid = t50(ttt_series(hybrid_times))
    return ImprovementReport(t50_rts=rts, t50_hybrid=hybrid, factor=improvement_factor(rts, hybrid))


def normalized_target(tau: int, b: int) -> float:
    """``(tau - b) / b``; integer true division keeps the result correctly rounded."""
    if b <= 0:
        raise StatisticsError(f'Normalizer must be positive, got {b}')
    return (tau - b) / b


def fit_exponent(sizes: Sequence[int], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(N)."""
    if len(sizes) < 3:
        raise StatisticsError(f'Fitting an exponent needs at least 3 sizes, got {len(sizes)}')
    if len(sizes) != len(times):
        raise StatisticsError('sizes and times differ in length')
    if min(sizes) <= 0 or min(times) <= 0:
        raise StatisticsError('sizes and times must be positive')
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(times, dtype=float)), 1)
    return float(slope)


def plot_rows(series: TttSeries) -> list[str]:
    return [f'{t!r} {p!r}' for t, p in series.points()]
