import logging
from datetime import date
from typing import Callable, Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from models.errors import IngestError, ShapeMismatchError, UndefinedCorrelationError
from models.posterior import StateSeries
from models.run_config import WeatherSource

logger = logging.getLogger(__name__)

WINTER_MONTHS = (11, 12, 1, 2, 3)
SUMMER_MONTHS = (5, 6, 7, 8, 9)

SeriesLike = Union[StateSeries, Sequence[float], np.ndarray]


def state_weights(series: StateSeries) -> np.ndarray:
    """w_t proportional to min{1/std_t, median_t(1/std_t)}; std_t = 0 gets
    the capped (median) weight"""
    with np.errstate(divide='ignore'):
        inverse = 1.0 / np.asarray(series.std, dtype=float)
    cap = np.median(inverse)
    if not np.isfinite(cap):
        finite = inverse[np.isfinite(inverse)]
        if finite.size == 0:
            return np.ones_like(inverse)
        cap = np.median(finite)
    return np.minimum(inverse, cap)


def _values(series: SeriesLike) -> np.ndarray:
    if isinstance(series, StateSeries):
        return np.asarray(series.prob, dtype=float)
    return np.asarray(series, dtype=float)


def weighted_corr(series_a: SeriesLike, series_b: SeriesLike, weights: Optional[np.ndarray] = None) -> float:
    """Weighted Pearson correlation. With a StateSeries and no weights,
    weights come from the posterior standard deviations of s_t."""
    a, b = _values(series_a), _values(series_b)
    if weights is None:
        weights = state_weights(series_a) if isinstance(series_a, StateSeries) else np.ones_like(a)
    w = np.asarray(weights, dtype=float)
    if not (a.shape == b.shape == w.shape):
        raise ShapeMismatchError(f"series lengths differ: {a.shape}, {b.shape}, weights {w.shape}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")

    w = w / w.sum()
    da = a - np.sum(w * a)
    db = b - np.sum(w * b)
    var_a, var_b = np.sum(w * da * da), np.sum(w * db * db)
    if var_a <= 0.0 or var_b <= 0.0:
        raise UndefinedCorrelationError("a series has zero weighted variance")
    return float(np.clip(np.sum(w * da * db) / np.sqrt(var_a * var_b), -1.0, 1.0))


def corr_matrix(state_series: Dict[str, StateSeries], external: Optional[Dict[str, SeriesLike]] = None,
                mask: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Rows: state series then external series; columns: state series.

    State-vs-state cells weight each period by the product of both series'
    weights; external rows use the column series' weights. ``mask`` keeps a
    subset of periods (boolean array or index list).
    """
    external = external or {}
    names = list(state_series)
    lengths = {s.T for s in state_series.values()} | {len(_values(v)) for v in external.values()}
    if len(lengths) > 1:
        raise ShapeMismatchError(f"series have different lengths: {sorted(lengths)}")
    T = lengths.pop() if lengths else 0
    keep = np.ones(T, dtype=bool)
    if mask is not None:
        keep = np.zeros(T, dtype=bool)
        keep[np.asarray(mask)] = True

    weights = {name: state_weights(series)[keep] for name, series in state_series.items()}
    values = {name: series.prob[keep] for name, series in state_series.items()}

    table = pd.DataFrame(index=names + list(external), columns=names, dtype=float)
    for col in names:
        for row in names:
            if row == col:
                table.loc[row, col] = 1.0
            else:
                table.loc[row, col] = weighted_corr(values[row], values[col], weights[row] * weights[col])
        for row, series in external.items():
            table.loc[row, col] = weighted_corr(values[col], _values(series)[keep], weights[col])
    return table


def season_mask(first_week_start: Union[str, date], T: int, months: Iterable[int]) -> np.ndarray:
    """Periods whose mid-week day (Wednesday of a Sunday-Saturday week)
    falls in the given months"""
    starts = pd.date_range(pd.Timestamp(first_week_start), periods=T, freq='7D')
    midweek = starts + pd.Timedelta(days=3)
    return np.isin(midweek.month, list(months))


def weekly_aggregate(values: pd.Series, first_week_start: Union[str, date], T: int,
                     reducer: Union[str, Callable[[np.ndarray], float]] = 'mean') -> np.ndarray:
    """Reduce dated values per Sunday-Saturday week (NaN for empty weeks)"""
    values = values.dropna()
    stamps = pd.DatetimeIndex(pd.to_datetime(values.index))
    offset = np.asarray((stamps.normalize() - pd.Timestamp(first_week_start)).days // 7)
    inside = (offset >= 0) & (offset < T)
    reduced = values[inside].groupby(offset[inside]).agg(reducer)
    return reduced.reindex(range(T)).to_numpy(dtype=float)


def weekly_average(daily: pd.Series, first_week_start: Union[str, date], T: int) -> np.ndarray:
    """Mean of daily values per Sunday-Saturday week (NaN for empty weeks)"""
    return weekly_aggregate(daily, first_week_start, T, 'mean')


def harmonic_mean_visibility(distances: Sequence[float], floor: float = 0.25) -> float:
    """Harmonic mean of visibility distances, floored at 0.25 miles"""
    d = np.maximum(np.asarray(distances, dtype=float), floor)
    return float(d.size / np.sum(1.0 / d))


def fog_frost_indicator(air_temp: np.ndarray, dewpoint: np.ndarray, spread: float = 5.0,
                        freezing: float = 32.0) -> pd.DataFrame:
    """Hourly dummies: fog/frost when air - dewpoint <= 5 F, split into
    frost (dewpoint below freezing) and fog (otherwise)"""
    air_temp, dewpoint = np.asarray(air_temp, float), np.asarray(dewpoint, float)
    near = (air_temp - dewpoint) <= spread
    frost = near & (dewpoint < freezing)
    return pd.DataFrame({'fog_frost': near.astype(float),
                         'frost': frost.astype(float),
                         'fog': (near & ~frost).astype(float)})


def threshold_dummy(values: Sequence[float], threshold: float) -> np.ndarray:
    """1 where the value exceeds the threshold (e.g. snowfall > 0.0, > 0.1)"""
    return (np.asarray(values, dtype=float) > threshold).astype(float)


def weekly_weather(frame: pd.DataFrame, source: WeatherSource, first_week_start: Union[str, date],
                   T: int) -> np.ndarray:
    """One value per week from dated observations (``frame`` indexed by
    timestamp) using the transform named by ``source``"""
    if source.transform in ('fog_frost', 'fog', 'frost'):
        missing = sorted({'air_temp', 'dewpoint'} - set(frame.columns))
        if missing:
            raise IngestError(f"{source.path}: transform {source.transform} needs columns {missing}")
        observed = frame[['air_temp', 'dewpoint']].dropna()
        flags = fog_frost_indicator(observed['air_temp'], observed['dewpoint'])
        hourly = pd.Series(flags[source.transform].to_numpy(), index=observed.index)
        return weekly_aggregate(hourly, first_week_start, T, 'mean')

    column = source.column or frame.columns[0]
    if column not in frame.columns:
        raise IngestError(f"{source.path}: no column {column!r}")
    values = frame[column].dropna()
    if source.transform == 'threshold':
        values = pd.Series(threshold_dummy(values, source.threshold), index=values.index)
    reducer = harmonic_mean_visibility if source.transform == 'visibility' else 'mean'
    weekly = weekly_aggregate(values, first_week_start, T, reducer)
    logger.debug(f"{source.path}: {source.transform} of {column}, "
                 f"{int(np.isnan(weekly).sum())} of {T} weeks without observations")
    return weekly
