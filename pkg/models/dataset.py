from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from models.errors import DimensionError, ShapeMismatchError


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Accident records grouped into T periods.

    ``period`` and ``outcome`` are stored 0-based (period t in 1..T is
    stored as t-1, outcome i in 1..I as i-1). ``X`` carries the intercept
    in column 0.
    """
    T: int
    I: int
    period: np.ndarray
    outcome: np.ndarray
    X: np.ndarray
    covariate_names: Tuple[str, ...] = field(default=())
    outcome_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(0, 1) if X.size == 0 else X.reshape(-1, 1)
        object.__setattr__(self, 'X', _frozen_array(X, float))
        object.__setattr__(self, 'period', _frozen_array(self.period, np.int64).reshape(-1))
        object.__setattr__(self, 'outcome', _frozen_array(self.outcome, np.int64).reshape(-1))

        names = tuple(self.covariate_names) or tuple(
            ['intercept'] + [f"x{d}" for d in range(1, self.X.shape[1])])
        labels = tuple(self.outcome_labels) or tuple(str(i) for i in range(1, self.I + 1))
        object.__setattr__(self, 'covariate_names', names)
        object.__setattr__(self, 'outcome_labels', labels)
        self._validate()

    def _validate(self):
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if self.I < 2:
            raise ValueError(f"I must be at least 2, got {self.I}")
        n = self.X.shape[0]
        if self.period.shape[0] != n or self.outcome.shape[0] != n:
            raise ShapeMismatchError(
                f"period ({self.period.shape[0]}), outcome ({self.outcome.shape[0]}) "
                f"and covariate ({n}) record counts differ")
        if n and (self.period.min() < 0 or self.period.max() >= self.T):
            raise ValueError(f"period index outside [1, {self.T}]")
        if n and (self.outcome.min() < 0 or self.outcome.max() >= self.I):
            raise ValueError(f"outcome index outside [1, {self.I}]")
        if self.X.shape[1] < 1:
            raise DimensionError(1, 0)
        if n and not np.all(self.X[:, 0] == 1.0):
            raise ValueError("first covariate must be the intercept (all ones)")
        if len(self.covariate_names) != self.D:
            raise DimensionError(self.D, len(self.covariate_names), what='covariate name list')
        if len(self.outcome_labels) != self.I:
            raise ShapeMismatchError(f"{len(self.outcome_labels)} outcome labels for I={self.I}")

    @classmethod
    def from_records(cls, T: int, I: int, records: Iterable[Tuple[int, int, Sequence[float]]],
                     covariate_names: Sequence[str] = (), outcome_labels: Sequence[str] = (),
                     D: Optional[int] = None) -> 'Dataset':
        """Build from (t, i, x) triples with 1-based t and i"""
        records = list(records)
        if records:
            period = [r[0] - 1 for r in records]
            outcome = [r[1] - 1 for r in records]
            widths = {len(r[2]) for r in records}
            if len(widths) != 1:
                raise DimensionError(min(widths), max(widths))
            X = np.array([list(r[2]) for r in records], dtype=float)
        else:
            width = D or max(len(covariate_names), 1)
            period, outcome, X = [], [], np.zeros((0, width))
        return cls(T=T, I=I, period=period, outcome=outcome, X=X,
                   covariate_names=tuple(covariate_names), outcome_labels=tuple(outcome_labels))

    @property
    def D(self) -> int:
        return self.X.shape[1]

    @property
    def n_records(self) -> int:
        return self.X.shape[0]

    def records_per_period(self) -> np.ndarray:
        """N_t for t = 1..T"""
        return np.bincount(self.period, minlength=self.T)

    def outcome_counts(self) -> np.ndarray:
        return np.bincount(self.outcome, minlength=self.I)

    def outcome_summary(self) -> str:
        counts = self.outcome_counts()
        return f"{self.n_records}=" + "+".join(str(c) for c in counts)

    def with_outcomes(self, outcome: np.ndarray) -> 'Dataset':
        """Same covariates and periods, new outcomes"""
        return Dataset(T=self.T, I=self.I, period=self.period, outcome=outcome, X=self.X,
                       covariate_names=self.covariate_names, outcome_labels=self.outcome_labels)

    def subset(self, rows: np.ndarray) -> 'Dataset':
        return Dataset(T=self.T, I=self.I, period=self.period[rows], outcome=self.outcome[rows],
                       X=self.X[rows], covariate_names=self.covariate_names,
                       outcome_labels=self.outcome_labels)

    def equals(self, other: 'Dataset') -> bool:
        return (self.T == other.T and self.I == other.I
                and self.covariate_names == other.covariate_names
                and self.outcome_labels == other.outcome_labels
                and np.array_equal(self.period, other.period)
                and np.array_equal(self.outcome, other.outcome)
                and np.array_equal(self.X, other.X))
