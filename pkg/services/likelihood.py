"""Outcome probabilities, stationary state probabilities and the
log-likelihood of the two-state switching multinomial logit."""
import logging
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from models.dataset import Dataset
from models.errors import DegenerateChainError, DimensionError
from models.model_spec import ModelSpec
from models.theta import Theta

logger = logging.getLogger(__name__)


def log_outcome_probs(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Log softmax of utilities (beta_i'x for i < I, 0 for the base outcome).

    X is (N, D); the result is (N, I). The maximum utility is subtracted
    before exponentiation so large utilities do not overflow.
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if beta.shape[1] != X.shape[1]:
        raise DimensionError(beta.shape[1], X.shape[1])
    utilities = np.zeros((X.shape[0], beta.shape[0] + 1))
    utilities[:, :-1] = X @ beta.T
    return utilities - logsumexp(utilities, axis=1, keepdims=True)


def outcome_probs(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Probability vector of length I for a single covariate vector"""
    x = np.asarray(x, dtype=float)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if x.ndim != 1 or x.shape[0] != beta.shape[1]:
        raise DimensionError(beta.shape[1], x.shape[0] if x.ndim == 1 else x.size)
    return np.exp(log_outcome_probs(beta, x.reshape(1, -1))[0])


def stationary_probs(p01: float, p10: float) -> Tuple[float, float]:
    """(p0_bar, p1_bar) solving the two stationarity equations"""
    if not (0.0 <= p01 <= 1.0 and 0.0 <= p10 <= 1.0):
        raise ValueError(f"transition probabilities must lie in [0,1]: {p01}, {p10}")
    total = p01 + p10
    if total <= 0.0:
        raise DegenerateChainError("p01 + p10 = 0: both states are absorbing")
    return p10 / total, p01 / total


def record_logliks(dataset: Dataset, beta: np.ndarray) -> np.ndarray:
    """log P of each record's observed outcome under one coefficient matrix"""
    if dataset.n_records == 0:
        return np.zeros(0)
    log_p = log_outcome_probs(beta, dataset.X)
    return log_p[np.arange(dataset.n_records), dataset.outcome]


def period_logliks(dataset: Dataset, beta0: np.ndarray, beta1: np.ndarray) -> np.ndarray:
    """(T, 2) per-period emission log-likelihoods under state 0 and state 1.
    Periods without records get 0 (emission weight 1)."""
    out = np.empty((dataset.T, 2))
    out[:, 0] = np.bincount(dataset.period, weights=record_logliks(dataset, beta0), minlength=dataset.T)
    if beta1 is beta0 or np.array_equal(beta0, beta1):
        out[:, 1] = out[:, 0]
    else:
        out[:, 1] = np.bincount(dataset.period, weights=record_logliks(dataset, beta1), minlength=dataset.T)
    return out


def log_likelihood(dataset: Dataset, spec: ModelSpec, theta: Theta) -> float:
    """Sum over records of log P of the observed outcome, with state s_t
    choosing the coefficients of period t. Non-switching specs use beta0
    throughout. Returns -inf when an observed outcome has probability 0."""
    if dataset.n_records == 0:
        return 0.0
    with np.errstate(divide='ignore', invalid='ignore'):
        if not spec.switching:
            total = float(np.sum(record_logliks(dataset, theta.beta0)))
        else:
            states = np.asarray(theta.S)[dataset.period]
            terms = record_logliks(dataset, theta.beta0)
            if np.any(states == 1):
                terms = np.where(states == 1, record_logliks(dataset, theta.beta1), terms)
            total = float(np.sum(terms))
    if np.isnan(total):
        return float('-inf')
    return total
