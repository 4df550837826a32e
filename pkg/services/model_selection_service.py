import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit, logsumexp

from models.errors import SampleSizeError
from models.posterior import PosteriorSample
from models.reports import MarginalLik

logger = logging.getLogger(__name__)

MIN_DRAWS = 100
# resampled indices held in memory at once
BOOTSTRAP_CHUNK = 1_000_000


def harmonic_mean_estimate(logliks: np.ndarray) -> float:
    """log f(Y|M) = -(logsumexp(-LL_j) - log J), in log space throughout"""
    logliks = np.asarray(logliks, dtype=float)
    return float(-(logsumexp(-logliks) - math.log(logliks.size)))


def harmonic_mean_log_ml(sample: Union[PosteriorSample, np.ndarray], n_bootstrap: int = 1000,
                         rng: Optional[np.random.Generator] = None) -> MarginalLik:
    """Harmonic-mean log marginal likelihood over pooled draws with a
    percentile bootstrap 95% interval"""
    logliks = sample.pooled('loglik') if isinstance(sample, PosteriorSample) else np.asarray(sample, float)
    J = logliks.size
    if J < MIN_DRAWS:
        raise SampleSizeError(f"{J} draws for the harmonic mean; at least {MIN_DRAWS} required")
    rng = rng or np.random.default_rng(0)

    estimate = harmonic_mean_estimate(logliks)
    resampled = np.empty(n_bootstrap)
    rows = max(1, BOOTSTRAP_CHUNK // J)
    for start in range(0, n_bootstrap, rows):
        stop = min(start + rows, n_bootstrap)
        indices = rng.integers(0, J, size=(stop - start, J))
        resampled[start:stop] = -(logsumexp(-logliks[indices], axis=1) - math.log(J))
    lower, upper = np.percentile(resampled, [2.5, 97.5])
    # percentile intervals of a skewed statistic can miss the point estimate
    lower, upper = min(float(lower), estimate), max(float(upper), estimate)
    logger.info(f"Harmonic-mean log ML {estimate:.4f} [{lower:.4f}, {upper:.4f}] from {J} draws")
    return MarginalLik(log_ml=estimate, ci95=(lower, upper), n_draws=J)


def _log_ml(value: Union[MarginalLik, float]) -> float:
    return value.log_ml if isinstance(value, MarginalLik) else float(value)


def bayes_factor(ml_a: Union[MarginalLik, float], ml_b: Union[MarginalLik, float]) -> float:
    """log Bayes factor of model b over model a; positive favors b"""
    a, b = _log_ml(ml_a), _log_ml(ml_b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"log marginal likelihoods must be finite, got {a} and {b}")
    return b - a


def posterior_model_probs(log_bf: float) -> Tuple[float, float]:
    """(P(M_a|Y), P(M_b|Y)) under equal prior model probabilities"""
    prob_b = float(expit(log_bf))
    return 1.0 - prob_b, prob_b
