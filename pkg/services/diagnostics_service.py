"""Convergence diagnostics, the Monte Carlo Pearson chi-square test, and
exact marginal likelihoods used to validate the sampler."""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from models.dataset import Dataset
from models.errors import ShapeMismatchError, SingularCovarianceError, SparseDataError
from models.mle_fit import MleFit
from models.model_spec import ModelSpec
from models.posterior import PosteriorSample
from services.likelihood import log_outcome_probs, period_logliks, record_logliks, stationary_probs
from services.state_filter import forward_filter

logger = logging.getLogger(__name__)
diagnostics_logger = logging.getLogger('diagnostics')

MAX_ENUMERATION_T = 20


def _as_chain_array(chains, ndim: int) -> np.ndarray:
    array = np.asarray(chains, dtype=float)
    if array.ndim != ndim:
        raise ShapeMismatchError(f"expected a {ndim}-d array of chains, got shape {array.shape}")
    if array.shape[0] < 2:
        raise ValueError("at least two chains are required")
    if array.shape[1] < 2:
        raise ValueError("chains must have at least two draws")
    return array


def psrf(chains: Sequence[Sequence[float]]) -> float:
    """Gelman-Rubin potential scale reduction factor, chains shaped (m, n)"""
    chains = _as_chain_array(chains, 2)
    n = chains.shape[1]
    W = float(np.mean(np.var(chains, axis=1, ddof=1)))
    B_over_n = float(np.var(np.mean(chains, axis=1), ddof=1))
    if W == 0.0:
        return 1.0 if B_over_n == 0.0 else float('inf')
    V = (n - 1) / n * W + B_over_n
    return math.sqrt(V / W)


def mpsrf(chains: np.ndarray, names: Optional[Sequence[str]] = None) -> float:
    """Brooks-Gelman multivariate PSRF, chains shaped (m, n, p)"""
    chains = _as_chain_array(chains, 3)
    m, n, p = chains.shape
    if n <= p:
        raise ValueError(f"need more draws per chain ({n}) than dimensions ({p})")
    names = list(names) if names is not None else [f"coordinate {k}" for k in range(p)]

    centered = chains - chains.mean(axis=1, keepdims=True)
    W = np.einsum('cnp,cnq->pq', centered, centered) / (m * (n - 1))
    B_over_n = np.atleast_2d(np.cov(chains.mean(axis=1), rowvar=False, ddof=1))

    flat = np.flatnonzero(np.diag(W) <= 0.0)
    if flat.size:
        raise SingularCovarianceError(f"within-chain covariance is singular: {names[flat[0]]} does not vary")
    try:
        eigenvalues = linalg.eigh(B_over_n, W, eigvals_only=True)
    except linalg.LinAlgError:
        smallest = linalg.eigh(W)[1][:, 0]
        raise SingularCovarianceError(
            f"within-chain covariance is singular, degenerate along {names[int(np.argmax(np.abs(smallest)))]}")
    lam = max(float(eigenvalues[-1]), 0.0)
    return math.sqrt((n - 1) / n + (m + 1) / m * lam)


def sample_psrf(sample: PosteriorSample) -> Tuple[dict, float]:
    """PSRF per continuous parameter and the joint MPSRF (states excluded)"""
    keys, draws = sample.continuous_draws()
    labels = [sample.label(key) for key in keys]
    per_parameter = {label: psrf(draws[:, :, k]) for k, label in enumerate(labels)}
    joint = mpsrf(draws, labels)
    worst = max(per_parameter.values()) if per_parameter else 1.0
    if worst > 1.1 or joint > 1.1:
        diagnostics_logger.warning(f"Chains may not have converged: max PSRF {worst:.4f}, MPSRF {joint:.4f}")
    return per_parameter, joint


@dataclass(frozen=True, eq=False)
class GofModel:
    """Point parameters for the chi-square test"""
    beta0: np.ndarray
    beta1: np.ndarray
    p01: float
    p10: float
    switching: bool

    @classmethod
    def from_fit(cls, fit: Union[PosteriorSample, MleFit]) -> 'GofModel':
        """Posterior means for Bayesian fits, the MLE otherwise"""
        if isinstance(fit, MleFit):
            return cls(fit.beta_hat, fit.beta_hat, 0.5, 0.5, False)
        beta0, beta1 = fit.posterior_mean_betas()
        if not fit.spec.switching:
            return cls(beta0, beta0, 0.5, 0.5, False)
        p01, p10 = fit.posterior_mean_transitions()
        return cls(beta0, beta1, p01, p10, True)


def _cell_map(expected: np.ndarray, min_expected: float) -> np.ndarray:
    """Cell index per (t, i); cells below min_expected join the period's
    largest cell, and merged cells still below it are dropped (-1)"""
    T, I = expected.shape
    target = np.tile(np.arange(I), (T, 1))
    largest = np.argmax(expected, axis=1)
    small = expected < min_expected
    target[small] = np.broadcast_to(largest[:, None], (T, I))[small]
    flat = np.arange(T)[:, None] * I + target
    merged = np.bincount(flat.ravel(), weights=expected.ravel(), minlength=T * I)
    keep = merged[flat] >= min_expected
    return np.where(keep, flat, -1)


def _chi_square(observed: np.ndarray, expected: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Pearson statistic per row of observed (R, T*I) counts"""
    valid = cells.ravel() >= 0
    used, compact = np.unique(cells.ravel()[valid], return_inverse=True)
    aggregate = np.zeros((compact.size, used.size))
    aggregate[np.arange(compact.size), compact] = 1.0
    exp_cells = expected.ravel()[valid] @ aggregate
    obs_cells = observed[:, valid] @ aggregate
    diff = obs_cells - exp_cells
    return np.sum(diff * diff / exp_cells, axis=1)


def simulate_states(T: int, p01: float, p10: float, rng: np.random.Generator) -> np.ndarray:
    """Markov chain path with a stationary first state"""
    S = np.zeros(T, dtype=np.int8)
    if T == 0:
        return S
    uniforms = rng.random(T)
    S[0] = uniforms[0] < stationary_probs(p01, p10)[1]
    for t in range(1, T):
        S[t] = uniforms[t] < (1.0 - p10 if S[t - 1] else p01)
    return S


def draw_outcomes(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of an (N, I) probability matrix"""
    cumulative = np.cumsum(probs, axis=1)
    uniforms = rng.random(probs.shape[0])[:, None] * cumulative[:, -1:]
    return np.minimum((uniforms >= cumulative).sum(axis=1), probs.shape[1] - 1)


def gof_pvalue(fit: Union[PosteriorSample, MleFit, GofModel], dataset: Dataset, spec: ModelSpec,
               n_rep: int = 10_000, rng: Optional[np.random.Generator] = None,
               min_expected: float = 1.0) -> float:
    """Monte Carlo Pearson chi-square p-value over (period, outcome) cells.

    Expected counts average over the state process (stationary state
    probabilities), matching replicates whose states are regenerated from
    (p01, p10); replicate outcomes are drawn at the observed covariates.
    """
    if min_expected <= 0.0:
        raise ValueError("min_expected must be positive")
    model = fit if isinstance(fit, GofModel) else GofModel.from_fit(fit)
    if model.switching and not spec.switching:
        model = GofModel(model.beta0, model.beta0, 0.5, 0.5, False)
    rng = rng or np.random.default_rng(0)
    T, I = dataset.T, dataset.I
    probs0 = np.exp(log_outcome_probs(model.beta0, dataset.X))
    probs1 = np.exp(log_outcome_probs(model.beta1, dataset.X)) if model.switching else probs0

    weights = stationary_probs(model.p01, model.p10) if model.switching else (1.0, 0.0)
    expected_probs = weights[0] * probs0 + weights[1] * probs1
    expected = np.zeros((T, I))
    np.add.at(expected, dataset.period, expected_probs)

    cells = _cell_map(expected, min_expected)
    if not np.any(cells >= 0):
        raise SparseDataError(f"no cell has an expected count of at least {min_expected}")
    n_cells = T * I

    def counts(outcomes: np.ndarray) -> np.ndarray:
        return np.bincount(dataset.period * I + outcomes, minlength=n_cells)

    observed_stat = float(_chi_square(counts(dataset.outcome)[None, :].astype(float), expected, cells)[0])

    replicate_counts = np.empty((n_rep, n_cells))
    for r in range(n_rep):
        if model.switching:
            S = simulate_states(T, model.p01, model.p10, rng)
            probs = np.where((S[dataset.period] == 1)[:, None], probs1, probs0)
        else:
            probs = probs0
        replicate_counts[r] = counts(draw_outcomes(probs, rng))
    replicate_stats = _chi_square(replicate_counts, expected, cells)

    p_value = float(np.mean(replicate_stats >= observed_stat))
    logger.info(f"Pearson chi-square {observed_stat:.3f} over {n_rep} replicates: p={p_value:.4f}")
    return p_value


def exact_marginal_loglik(dataset: Dataset, spec: ModelSpec, beta0: np.ndarray, beta1: np.ndarray,
                          p01: float, p10: float) -> float:
    """log f(Y | beta, p) with S summed out by the forward recursion"""
    if not spec.switching:
        return float(np.sum(record_logliks(dataset, beta0)))
    _, log_marginal = forward_filter(period_logliks(dataset, beta0, beta1), p01, p10)
    return log_marginal


def _all_state_paths(T: int) -> np.ndarray:
    if T > MAX_ENUMERATION_T:
        raise ValueError(f"enumeration over 2^{T} state paths is limited to T <= {MAX_ENUMERATION_T}")
    return np.array(list(itertools.product((0, 1), repeat=T)), dtype=np.int64)


def _path_log_weights(dataset: Dataset, beta0, beta1, p01: float, p10: float) -> Tuple[np.ndarray, np.ndarray]:
    emissions = period_logliks(dataset, beta0, beta1)
    paths = _all_state_paths(dataset.T)
    with np.errstate(divide='ignore'):
        log_start = np.log(np.array(stationary_probs(p01, p10)))
        log_trans = np.log(np.array([[1.0 - p01, p01], [p10, 1.0 - p10]]))
    weights = log_start[paths[:, 0]] + emissions[np.arange(dataset.T), paths].sum(axis=1)
    if dataset.T > 1:
        weights += log_trans[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    return paths, weights


def enumerate_marginal_loglik(dataset: Dataset, beta0, beta1, p01: float, p10: float) -> float:
    """Brute-force log marginal likelihood over all 2^T state paths"""
    _, weights = _path_log_weights(dataset, beta0, beta1, p01, p10)
    return float(logsumexp(weights))


def enumerate_state_posterior(dataset: Dataset, beta0, beta1, p01: float, p10: float) -> np.ndarray:
    """Exact P(s_t=1 | Y, beta, p) by enumeration of all 2^T state paths"""
    paths, weights = _path_log_weights(dataset, beta0, beta1, p01, p10)
    posterior = np.exp(weights - logsumexp(weights))
    return posterior @ paths
