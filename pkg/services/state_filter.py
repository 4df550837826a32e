"""Forward filtering, backward sampling and smoothing for the two-state
chain over periods, all in log space. Emissions arrive as a (T, 2) array
of per-period log-likelihoods."""
from typing import Tuple

import numpy as np

from services.likelihood import stationary_probs


def log_transition_matrix(p01: float, p10: float) -> np.ndarray:
    """log P(s_t = column | s_{t-1} = row); zero probabilities map to -inf"""
    with np.errstate(divide='ignore'):
        return np.log(np.array([[1.0 - p01, p01], [p10, 1.0 - p10]]))


def forward_filter(log_emissions: np.ndarray, p01: float, p10: float) -> Tuple[np.ndarray, float]:
    """Filtered log P(s_t | y_1..y_t) for every t and the log marginal
    likelihood log f(Y | beta, p). s_1 starts from the stationary law."""
    T = log_emissions.shape[0]
    log_p = log_transition_matrix(p01, p10)
    with np.errstate(divide='ignore'):
        pred = np.log(np.array(stationary_probs(p01, p10)))
    filtered = np.empty((T, 2))
    log_marginal = 0.0
    for t in range(T):
        if t > 0:
            previous = filtered[t - 1]
            pred = np.logaddexp(previous[0] + log_p[0], previous[1] + log_p[1])
        joint = pred + log_emissions[t]
        norm = np.logaddexp(joint[0], joint[1])
        if not np.isfinite(norm):
            filtered[t] = pred
            log_marginal = float('-inf')
            continue
        filtered[t] = joint - norm
        log_marginal += float(norm)
    return filtered, log_marginal


def backward_sample(filtered: np.ndarray, p01: float, p10: float, rng: np.random.Generator) -> np.ndarray:
    """One exact draw of S given filtered log probabilities"""
    T = filtered.shape[0]
    log_p = log_transition_matrix(p01, p10)
    uniforms = rng.random(T)
    S = np.zeros(T, dtype=np.int8)
    if T == 0:
        return S
    S[T - 1] = uniforms[T - 1] < np.exp(filtered[T - 1, 1])
    for t in range(T - 2, -1, -1):
        weights = filtered[t] + log_p[:, S[t + 1]]
        norm = np.logaddexp(weights[0], weights[1])
        if not np.isfinite(norm):
            S[t] = 0
            continue
        S[t] = uniforms[t] < np.exp(weights[1] - norm)
    return S


def smoothed_state_probs(log_emissions: np.ndarray, p01: float, p10: float) -> np.ndarray:
    """P(s_t = 1 | Y, beta, p) by forward-backward"""
    T = log_emissions.shape[0]
    filtered, _ = forward_filter(log_emissions, p01, p10)
    log_p = log_transition_matrix(p01, p10)
    backward = np.zeros((T, 2))
    for t in range(T - 2, -1, -1):
        following = log_emissions[t + 1] + backward[t + 1]
        b = np.logaddexp(log_p[:, 0] + following[0], log_p[:, 1] + following[1])
        backward[t] = b - np.logaddexp(b[0], b[1])
    joint = filtered + backward
    joint -= np.logaddexp(joint[:, 0], joint[:, 1])[:, None]
    return np.exp(joint[:, 1])
