from dataclasses import dataclass
from typing import Tuple

import numpy as np

from models.model_spec import ModelSpec

Z_95 = 1.96


@dataclass(frozen=True, eq=False)
class MleFit:
    beta_hat: np.ndarray
    se: np.ndarray
    loglik: float
    K: int
    aic: float
    cov: np.ndarray
    spec: ModelSpec
    n_iter: int = 0
    gradient_norm: float = 0.0

    @classmethod
    def build(cls, beta_hat: np.ndarray, cov: np.ndarray, loglik: float, spec: ModelSpec,
              n_iter: int = 0, gradient_norm: float = 0.0) -> 'MleFit':
        """Fill se from cov over included entries (row-major) and AIC = 2K - 2LL"""
        K = int(cov.shape[0])
        se = np.zeros_like(beta_hat, dtype=float)
        se[spec.included()] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        return cls(beta_hat=beta_hat, se=se, loglik=float(loglik), K=K,
                   aic=2.0 * K - 2.0 * float(loglik), cov=cov, spec=spec,
                   n_iter=n_iter, gradient_norm=gradient_norm)

    def confidence_interval(self, i: int, d: int) -> Tuple[float, float]:
        """Symmetric 95% interval, beta_hat +/- 1.96 se"""
        half = Z_95 * self.se[i, d]
        return self.beta_hat[i, d] - half, self.beta_hat[i, d] + half


@dataclass(frozen=True)
class MleConfig:
    max_iter: int = 200
    tolerance: float = 1e-6
    beta_bound: float = 50.0
    significance: float = 0.05

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tolerance <= 0 or self.beta_bound <= 0:
            raise ValueError("tolerance and beta_bound must be positive")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must lie in (0, 1)")
