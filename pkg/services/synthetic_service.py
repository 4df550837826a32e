import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import yaml

from models.dataset import Dataset
from models.errors import ConfigError, ShapeMismatchError
from models.model_spec import Inclusion, ModelSpec
from models.posterior import PosteriorSample
from models.theta import Theta
from services.diagnostics_service import draw_outcomes, simulate_states
from services.likelihood import log_outcome_probs
from services.posterior_service import state_series, summarize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CovariateColumn:
    """kind: 'constant' (value 1), 'bernoulli' (q) or 'uniform' (low, high)"""
    name: str
    kind: str = 'uniform'
    q: float = 0.5
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ('constant', 'bernoulli', 'uniform'):
            raise ValueError(f"unknown covariate sampler '{self.kind}' for {self.name}")
        if self.kind == 'bernoulli' and not 0.0 <= self.q <= 1.0:
            raise ValueError(f"Bernoulli probability for {self.name} outside [0,1]")
        if self.kind == 'uniform' and self.high < self.low:
            raise ValueError(f"uniform range for {self.name} is empty")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == 'constant':
            return np.ones(n)
        if self.kind == 'bernoulli':
            return (rng.random(n) < self.q).astype(float)
        return rng.uniform(self.low, self.high, n)


@dataclass
class SyntheticData:
    dataset: Dataset
    S: np.ndarray


@dataclass
class RecoveryReport:
    coverage: Dict[str, bool]
    errors: Dict[str, float]
    state_accuracy: Optional[float] = None

    @property
    def coverage_rate(self) -> float:
        return float(np.mean(list(self.coverage.values()))) if self.coverage else float('nan')


def generate(spec: ModelSpec, theta: Theta, T: int, records: Union[int, Sequence[int], float],
             covariates: Sequence[CovariateColumn], rng: np.random.Generator,
             poisson_rate: bool = False, outcome_labels: Sequence[str] = ()) -> SyntheticData:
    """Artificial dataset from a fully specified ML or MSML model.

    ``records`` is a per-period count, a list of T counts, or (with
    ``poisson_rate``) a Poisson mean per period. The first covariate column
    must be the constant intercept.
    """
    if len(covariates) != spec.D:
        raise ShapeMismatchError(f"{len(covariates)} covariate samplers for D={spec.D}")
    if covariates[0].kind != 'constant':
        raise ValueError("the first covariate column must be the constant intercept")
    theta.validate(spec)

    if poisson_rate:
        counts = rng.poisson(float(records), T)
    elif np.ndim(records) == 0:
        counts = np.full(T, int(records))
    else:
        counts = np.asarray(records, dtype=int)
        if counts.shape != (T,):
            raise ShapeMismatchError(f"{counts.shape[0]} record counts for T={T}")
    if np.any(counts < 0):
        raise ValueError("record counts must be non-negative")

    S = simulate_states(T, theta.p01, theta.p10, rng) if spec.switching else np.zeros(T, dtype=np.int8)
    period = np.repeat(np.arange(T), counts)
    n = period.size
    X = np.column_stack([column.draw(n, rng) for column in covariates]) if n else np.zeros((0, spec.D))

    probs0 = np.exp(log_outcome_probs(theta.beta0, X))
    if spec.switching:
        probs1 = np.exp(log_outcome_probs(theta.beta1, X))
        probs0 = np.where((S[period] == 1)[:, None], probs1, probs0)
    outcome = draw_outcomes(probs0, rng) if n else np.zeros(0, dtype=np.int64)

    dataset = Dataset(T=T, I=spec.I, period=period, outcome=outcome, X=X,
                      covariate_names=tuple(column.name for column in covariates),
                      outcome_labels=tuple(outcome_labels))
    logger.info(f"Generated {n} records over {T} periods, state-1 share {float(np.mean(S)) if T else 0.0:.3f}")
    return SyntheticData(dataset=dataset, S=S)


def _truth_value(theta: Theta, sample: PosteriorSample, key) -> float:
    if key.kind == 'p01':
        return theta.p01
    if key.kind == 'p10':
        return theta.p10
    source = theta.beta1 if key.state == 1 else theta.beta0
    return float(source[key.i, key.d])


def recovery_score(truth: Theta, sample: PosteriorSample, level: float = 0.95) -> RecoveryReport:
    """Credible-interval coverage of the true continuous parameters and the
    share of periods whose rounded P(s_t=1|Y) equals the true state"""
    shape = sample.spec.mask.shape
    if truth.beta0.shape != shape or truth.beta1.shape != shape:
        raise ShapeMismatchError(f"truth shape {truth.beta0.shape} does not match fit shape {shape}")
    if sample.spec.switching and truth.S.shape[0] != sample.T:
        raise ShapeMismatchError(f"truth has {truth.S.shape[0]} periods, fit has {sample.T}")

    intervals = summarize(sample, level)
    coverage, errors = {}, {}
    for key, interval in intervals.items():
        value = _truth_value(truth, sample, key)
        label = sample.label(key)
        coverage[label] = interval.contains(value)
        errors[label] = interval.mean - value

    accuracy = None
    if sample.spec.switching:
        predicted = np.round(state_series(sample).prob).astype(int)
        accuracy = float(np.mean(predicted == truth.S))
    return RecoveryReport(coverage=coverage, errors=errors, state_accuracy=accuracy)


@dataclass
class SyntheticDesign:
    """A generating model read from YAML for the ``generate`` command"""
    spec: ModelSpec
    theta: Theta
    T: int
    records: Union[int, float, List[int]]
    covariates: List[CovariateColumn]
    outcome_labels: List[str]
    poisson_rate: bool = False

    def generate(self, rng: np.random.Generator) -> SyntheticData:
        return generate(self.spec, self.theta, self.T, self.records, self.covariates, rng,
                        poisson_rate=self.poisson_rate, outcome_labels=self.outcome_labels)


def design_mask(beta0: np.ndarray, beta1: np.ndarray, switching: bool) -> np.ndarray:
    """Zero in both states: excluded; equal: shared; otherwise state-specific.
    Intercepts are always included."""
    mask = np.where(beta0 == beta1, int(Inclusion.SHARED), int(Inclusion.SPECIFIC))
    mask[(beta0 == 0.0) & (beta1 == 0.0)] = int(Inclusion.EXCLUDED)
    mask[:, 0] = np.maximum(mask[:, 0], int(Inclusion.SHARED))
    if not switching:
        mask[mask == Inclusion.SPECIFIC] = int(Inclusion.SHARED)
    return mask


def load_design(path: str) -> SyntheticDesign:
    """Read a generating model::

        T: 52
        records: 100
        outcome_labels: [fatality, injury, pdo]
        covariates:
          - {name: intercept, kind: constant}
          - {name: wet, kind: bernoulli, q: 0.3}
        beta0: [[-4.0, 0.5], [-1.5, 0.2]]
        beta1: [[-3.0, 0.5], [-1.0, 0.2]]   # omit for a single-state model
        p01: 0.15
        p10: 0.35
    """
    try:
        with open(path, 'r', encoding='utf-8') as file:
            data = yaml.safe_load(file) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read synthetic design {path}: {e}")
    try:
        beta0 = np.array(data['beta0'], dtype=float)
        switching = 'beta1' in data
        beta1 = np.array(data['beta1'], dtype=float) if switching else beta0
        covariates = [CovariateColumn(**column) for column in data['covariates']]
        I = beta0.shape[0] + 1
        labels = list(data.get('outcome_labels') or [str(i) for i in range(1, I + 1)])
        spec = ModelSpec(I=I, switching=switching, mask=design_mask(beta0, beta1, switching))
        T = int(data['T'])
        theta = Theta(beta0=beta0, beta1=beta1, p01=float(data.get('p01', 0.5)),
                      p10=float(data.get('p10', 0.5)), S=np.zeros(T, dtype=np.int8))
        theta.validate(spec, T)
        return SyntheticDesign(spec=spec, theta=theta, T=T, records=data['records'],
                               covariates=covariates, outcome_labels=labels,
                               poisson_rate=bool(data.get('poisson', False)))
    except KeyError as e:
        raise ConfigError(f"synthetic design {path} is missing {e}")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid synthetic design {path}: {e}")
