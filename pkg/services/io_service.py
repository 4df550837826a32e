import json
import logging
import os
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import yaml

from models.dataset import Dataset
from models.errors import IngestError
from models.posterior import PosteriorSample, StateSeries
from models.reports import FitReport, ParameterRow
from models.run_config import DatasetSchema
from services.diagnostics_service import GofModel
from utils.helpers import format_sig

logger = logging.getLogger(__name__)

WEEK_COLUMN = 'week'
OUTCOME_COLUMN = 'outcome'
FULL_PRECISION = '%.17g'


def _line(index: int) -> int:
    """File line of a data row; line 1 is the header"""
    return int(index) + 2


def _parse(frame: pd.DataFrame, column: str, parser: Callable[[str], Any], what: str) -> List[Any]:
    values = []
    for index, raw in frame[column].items():
        try:
            values.append(parser(raw.strip()))
        except (TypeError, ValueError):
            raise IngestError(f"column '{column}': {what} expected, got {raw!r}", row=_line(index))
    return values


def ingest(path: str, schema: DatasetSchema) -> Dataset:
    """Read a dataset CSV (header mandatory): week, outcome label, then the
    covariate columns declared in the schema (all remaining columns when
    none are declared). The intercept is injected."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise IngestError(f"dataset file not found: {path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise IngestError(f"cannot parse {path}: {e}")

    if not schema.covariates:
        declared = {column: 'quantitative' for column in frame.columns
                    if column not in (WEEK_COLUMN, OUTCOME_COLUMN)}
        schema = DatasetSchema(outcome_labels=schema.outcome_labels, covariates=declared,
                               n_periods=schema.n_periods, path=schema.path)
        logger.info(f"No covariates declared; using all remaining columns: {list(declared)}")

    required = [WEEK_COLUMN, OUTCOME_COLUMN] + list(schema.covariate_columns)
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise IngestError(f"missing column(s): {', '.join(missing)}", row=1)

    weeks = _parse(frame, WEEK_COLUMN, int, 'integer week')
    T = schema.n_periods or (max(weeks) if weeks else 1)
    for index, week in zip(frame.index, weeks):
        if not 1 <= week <= T:
            raise IngestError(f"week {week} outside [1, {T}]", row=_line(index))

    labels = schema.label_index()
    outcomes = []
    for index, label in frame[OUTCOME_COLUMN].items():
        label = label.strip()
        if label not in labels:
            raise IngestError(f"unknown outcome label '{label}' (expected one of "
                              f"{', '.join(schema.outcome_labels)})", row=_line(index))
        outcomes.append(labels[label])

    columns = [np.ones(len(frame))]
    for column, role in schema.covariates.items():
        values = np.array(_parse(frame, column, float, 'number'), dtype=float)
        if role == 'dummy':
            bad = np.flatnonzero((values != 0.0) & (values != 1.0))
            if bad.size:
                raise IngestError(f"dummy column '{column}' must be 0 or 1, got {values[bad[0]]:g}",
                                  row=_line(frame.index[bad[0]]))
        columns.append(values)

    dataset = Dataset(T=T, I=len(schema.outcome_labels),
                      period=np.array(weeks, dtype=np.int64) - 1,
                      outcome=np.array(outcomes, dtype=np.int64) - 1,
                      X=np.column_stack(columns).reshape(len(frame), len(columns)),
                      covariate_names=('intercept',) + schema.covariate_columns,
                      outcome_labels=schema.outcome_labels)
    _log_summary(path, dataset)
    return dataset


def _log_summary(path: str, dataset: Dataset):
    per_period = dataset.records_per_period()
    histogram = np.bincount(per_period) if per_period.size else np.zeros(1, dtype=int)
    logger.info(f"Ingested {path}: T={dataset.T}, I={dataset.I}, D={dataset.D}, "
                f"N={dataset.outcome_summary()}")
    logger.info(f"Records per period: min={per_period.min()}, max={per_period.max()}, "
                f"empty periods={int(histogram[0])}")


def write_dataset_csv(dataset: Dataset, path: str) -> str:
    """Inverse of ingest: full-precision covariates, intercept dropped"""
    frame = pd.DataFrame({WEEK_COLUMN: dataset.period + 1,
                          OUTCOME_COLUMN: np.asarray(dataset.outcome_labels, dtype=object)[dataset.outcome]})
    for d, name in enumerate(dataset.covariate_names[1:], start=1):
        frame[name] = dataset.X[:, d]
    _ensure_dir(path)
    frame.to_csv(path, index=False, float_format=FULL_PRECISION, encoding='utf-8')
    logger.info(f"Wrote dataset with {dataset.n_records} records to {path}")
    return path


def schema_for(dataset: Dataset) -> DatasetSchema:
    """Schema that ingests what write_dataset_csv wrote"""
    covariates = {}
    for d, name in enumerate(dataset.covariate_names[1:], start=1):
        column = dataset.X[:, d]
        covariates[name] = 'dummy' if np.all((column == 0.0) | (column == 1.0)) else 'quantitative'
    return DatasetSchema(outcome_labels=dataset.outcome_labels, covariates=covariates, n_periods=dataset.T)


def write_schema_yaml(dataset: Dataset, data_path: str, path: str) -> str:
    """Run configuration whose dataset section ingests ``data_path`` with
    the period count, labels and covariate roles of ``dataset``"""
    schema = schema_for(dataset)
    section = {
        'path': os.path.relpath(os.path.abspath(data_path), os.path.dirname(os.path.abspath(path))),
        'outcome_labels': list(schema.outcome_labels),
        'n_periods': int(dataset.T),
        'covariates': dict(schema.covariates),
    }
    _ensure_dir(path)
    with open(path, 'w', encoding='utf-8') as file:
        yaml.safe_dump({'dataset': section}, file, sort_keys=False)
    logger.info(f"Wrote dataset configuration (T={dataset.T}) to {path}")
    return path


def write_parameter_table(rows: Sequence[ParameterRow], path: str, digits: int = 6) -> str:
    frame = pd.DataFrame([{
        'parameter': row.parameter,
        'outcome': row.outcome,
        'covariate': row.covariate,
        'state': row.state,
        'estimate': format_sig(row.estimate, digits),
        'lower': format_sig(row.lower, digits),
        'upper': format_sig(row.upper, digits),
        'se': format_sig(row.se, digits),
    } for row in rows], columns=['parameter', 'outcome', 'covariate', 'state', 'estimate', 'lower', 'upper', 'se'])
    _ensure_dir(path)
    frame.to_csv(path, index=False, encoding='utf-8')
    return path


def write_state_series(series: StateSeries, path: str, digits: int = 6) -> str:
    """Plot-ready P(s_t=1|Y) per week"""
    frame = pd.DataFrame({WEEK_COLUMN: np.arange(1, series.T + 1),
                          'prob_state1': [format_sig(v, digits) for v in series.prob],
                          'std': [format_sig(v, digits) for v in series.std]})
    _ensure_dir(path)
    frame.to_csv(path, index=False, encoding='utf-8')
    return path


def write_draws(sample: PosteriorSample, path: str) -> str:
    """One row per kept draw, full precision"""
    keys = sample.keys()
    frames = []
    for c, chain in enumerate(sample.chains):
        frame = pd.DataFrame({'chain': c + 1, 'draw': np.arange(1, len(chain) + 1)})
        for key in keys:
            frame[sample.label(key)] = chain.values(key)
        frame['loglik'] = chain.loglik
        frames.append(frame)
    _ensure_dir(path)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format=FULL_PRECISION,
                                                encoding='utf-8')
    return path


def read_draws(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')


def _rounded(value: Any, digits: int) -> Any:
    if isinstance(value, dict):
        return {k: _rounded(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v, digits) for v in value]
    if isinstance(value, (bool, np.bool_, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return format_sig(value, digits)
    return value


def write_report_json(reports: Sequence[FitReport], comparison: Dict[str, Any], path: str,
                      digits: int = 6, extra: Optional[Dict[str, Any]] = None) -> str:
    payload = {'models': [_rounded(report.to_dict(), digits) for report in reports],
               'comparison': _rounded(comparison, digits)}
    if extra:
        payload.update(_rounded(extra, digits))
    _ensure_dir(path)
    with open(path, 'w', encoding='utf-8') as file:
        json.dump(payload, file, indent=2)
    return path


def read_series_csv(path: str, T: Optional[int] = None) -> np.ndarray:
    """Two-column CSV (week, value) to a length-T array; missing weeks are NaN"""
    try:
        frame = pd.read_csv(path, encoding='utf-8')
    except FileNotFoundError:
        raise IngestError(f"series file not found: {path}")
    if frame.shape[1] != 2:
        raise IngestError(f"{path}: expected two columns (week, value), found {frame.shape[1]}", row=1)
    weeks = pd.to_numeric(frame.iloc[:, 0], errors='coerce')
    bad = weeks.isna() | (weeks != weeks.round())
    if bad.any():
        raise IngestError(f"{path}: non-integer week", row=_line(frame.index[bad.to_numpy()][0]))
    weeks = weeks.astype(int).to_numpy()
    T = T or int(weeks.max())
    if weeks.min() < 1 or weeks.max() > T:
        raise IngestError(f"{path}: week outside [1, {T}]")
    values = np.full(T, np.nan)
    values[weeks - 1] = pd.to_numeric(frame.iloc[:, 1], errors='coerce').to_numpy(dtype=float)
    return values


def read_weather_csv(path: str) -> pd.DataFrame:
    """Dated observations: a date or timestamp first column, numeric value
    columns after it. Returns the values indexed by timestamp."""
    try:
        frame = pd.read_csv(path, encoding='utf-8')
    except FileNotFoundError:
        raise IngestError(f"weather file not found: {path}")
    if frame.shape[1] < 2:
        raise IngestError(f"{path}: expected a date column and at least one value column", row=1)
    stamps = pd.to_datetime(frame.iloc[:, 0], errors='coerce', format='mixed')
    if stamps.isna().any():
        raise IngestError(f"{path}: unparseable date {frame.iloc[:, 0][stamps.isna()].iloc[0]!r}",
                          row=_line(frame.index[stamps.isna().to_numpy()][0]))
    values = frame.iloc[:, 1:].apply(pd.to_numeric, errors='coerce')
    values.index = pd.DatetimeIndex(stamps)
    return values


def read_state_series(path: str) -> StateSeries:
    """Inverse of write_state_series"""
    frame = pd.read_csv(path, encoding='utf-8')
    return StateSeries(prob=frame['prob_state1'].to_numpy(dtype=float),
                       std=frame['std'].to_numpy(dtype=float),
                       label=os.path.splitext(os.path.basename(path))[0])


def _ensure_dir(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def read_parameter_table(path: str, dataset: Dataset) -> GofModel:
    """Point parameters from a parameter table written by write_parameter_table"""
    frame = pd.read_csv(path, dtype={'state': str}, keep_default_na=False, encoding='utf-8')
    shape = (dataset.I - 1, dataset.D)
    beta0, beta1 = np.zeros(shape), np.zeros(shape)
    outcomes = {label: i for i, label in enumerate(dataset.outcome_labels)}
    covariates = {name: d for d, name in enumerate(dataset.covariate_names)}
    transitions = {}
    for index, row in frame.iterrows():
        if row['parameter'] in ('p01', 'p10'):
            transitions[row['parameter']] = float(row['estimate'])
            continue
        if row['outcome'] not in outcomes or row['covariate'] not in covariates:
            raise IngestError(f"{path}: unknown coefficient {row['outcome']}/{row['covariate']}",
                              row=_line(index))
        i, d = outcomes[row['outcome']], covariates[row['covariate']]
        value = float(row['estimate'])
        if row['state'] in ('', '0'):
            beta0[i, d] = value
        if row['state'] in ('', '1'):
            beta1[i, d] = value
    if transitions:
        return GofModel(beta0, beta1, transitions['p01'], transitions['p10'], True)
    return GofModel(beta0, beta0, 0.5, 0.5, False)
