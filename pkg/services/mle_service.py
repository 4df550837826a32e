import logging
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import norm

from models.dataset import Dataset
from models.errors import (CollinearityError, ConvergenceError, DegenerateInformationError,
                           SeparationError)
from models.mle_fit import MleConfig, MleFit
from models.model_spec import Inclusion, ModelSpec
from services.likelihood import log_outcome_probs

logger = logging.getLogger(__name__)


class MleEstimator:
    """Newton-Raphson maximum likelihood for the single-state multinomial
    logit, Wald tests, and AIC-guarded backward elimination."""

    def __init__(self, config: Optional[MleConfig] = None):
        self.config = config or MleConfig()

    def fit_ml(self, dataset: Dataset, spec: ModelSpec) -> MleFit:
        """Maximize the log-likelihood over the included coefficients"""
        if spec.switching:
            raise ValueError("fit_ml estimates single-state specs only")
        if dataset.n_records == 0:
            raise ValueError("cannot fit an empty dataset")
        self._check_collinearity(dataset, spec)

        shape = spec.mask.shape
        free = np.flatnonzero(spec.included().ravel())
        params = np.zeros(free.shape[0])
        loglik, grad, hess = self._evaluate(dataset, free, params, shape, derivatives=True)
        start_loglik = loglik

        n_iter = 0
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        while gnorm >= self.config.tolerance:
            if n_iter >= self.config.max_iter:
                raise ConvergenceError(f"Newton-Raphson did not converge in {n_iter} iterations",
                                       last_iterate=self._to_matrix(params, free, shape),
                                       gradient_norm=gnorm)
            n_iter += 1
            step = self._newton_step(grad, hess)

            # Step halving until the log-likelihood does not decrease
            scale = 1.0
            accepted = False
            for _ in range(40):
                candidate = params + scale * step
                cand_loglik = self._evaluate(dataset, free, candidate, shape)[0]
                if cand_loglik >= loglik:
                    accepted = True
                    break
                scale *= 0.5
            if not accepted:
                if float(grad @ step) < 1e-10:
                    # No further ascent is representable in floating point
                    break
                raise ConvergenceError("line search failed to improve the log-likelihood",
                                       last_iterate=self._to_matrix(params, free, shape),
                                       gradient_norm=gnorm)

            params = candidate
            if np.any(np.abs(params) > self.config.beta_bound):
                worst = int(np.argmax(np.abs(params)))
                i, d = np.unravel_index(free[worst], shape)
                raise SeparationError(
                    f"coefficient ({i + 1},{d + 1}) reached {params[worst]:.3g}, beyond bound "
                    f"{self.config.beta_bound}; data look separable")
            loglik, grad, hess = self._evaluate(dataset, free, params, shape, derivatives=True)
            gnorm = float(np.max(np.abs(grad)))

        try:
            cov = linalg.inv(-hess) if free.size else np.zeros((0, 0))
        except linalg.LinAlgError as e:
            raise DegenerateInformationError(f"observed information is singular: {e}")
        if np.any(np.diag(cov) < 0):
            raise DegenerateInformationError("observed information is not positive definite")

        fit = MleFit.build(self._to_matrix(params, free, shape), cov, loglik, spec,
                           n_iter=n_iter, gradient_norm=gnorm)
        logger.info(f"ML fit converged in {n_iter} iterations: LL={loglik:.4f} "
                    f"(start {start_loglik:.4f}), K={fit.K}, AIC={fit.aic:.4f}")
        return fit

    @staticmethod
    def wald_t(fit: MleFit, i: int, d: int) -> Tuple[float, float]:
        """t statistic and two-sided p-value from the normal reference"""
        if not fit.spec.is_included(i, d):
            raise ValueError(f"coefficient ({i + 1},{d + 1}) is not in the model")
        se = fit.se[i, d]
        if se <= 0.0:
            raise DegenerateInformationError(f"zero standard error for coefficient ({i + 1},{d + 1})")
        t_stat = float(fit.beta_hat[i, d] / se)
        return t_stat, float(2.0 * norm.sf(abs(t_stat)))

    def select_covariates(self, dataset: Dataset, candidate: ModelSpec) -> ModelSpec:
        """Backward elimination: try dropping the least significant
        coefficient (p > significance, ties by lowest (i, d)), keep the drop
        only if AIC does not increase; stop when no drop is kept."""
        spec = candidate
        fit = self.fit_ml(dataset, spec)
        while True:
            candidates = []
            for i, d in spec.entries():
                if d == 0:
                    continue
                _, p_value = self.wald_t(fit, i, d)
                if p_value > self.config.significance:
                    candidates.append((-p_value, i, d))
            candidates.sort()

            dropped = False
            for neg_p, i, d in candidates:
                trial_spec = spec.with_entry(i, d, Inclusion.EXCLUDED)
                trial = self.fit_ml(dataset, trial_spec)
                if trial.aic <= fit.aic:
                    logger.info(f"Dropped coefficient ({i + 1},{d + 1}): p={-neg_p:.4f}, "
                                f"AIC {fit.aic:.4f} -> {trial.aic:.4f}")
                    spec, fit = trial_spec, trial
                    dropped = True
                    break
            if not dropped:
                return spec

    def _check_collinearity(self, dataset: Dataset, spec: ModelSpec):
        used = np.any(spec.included(), axis=0)
        for d in range(1, dataset.D):
            if used[d] and np.ptp(dataset.X[:, d]) == 0.0:
                raise CollinearityError(
                    f"covariate '{dataset.covariate_names[d]}' is constant and collinear with the intercept")

    @staticmethod
    def _to_matrix(params: np.ndarray, free: np.ndarray, shape) -> np.ndarray:
        beta = np.zeros(shape[0] * shape[1])
        beta[free] = params
        return beta.reshape(shape)

    def _evaluate(self, dataset: Dataset, free: np.ndarray, params: np.ndarray, shape,
                  derivatives: bool = False):
        """Log-likelihood and optionally gradient and Hessian over free entries"""
        beta = self._to_matrix(params, free, shape)
        log_p = log_outcome_probs(beta, dataset.X)
        rows = np.arange(dataset.n_records)
        loglik = float(np.sum(log_p[rows, dataset.outcome]))
        if not derivatives:
            return loglik, None, None

        X = dataset.X
        n_rows, D = shape
        probs = np.exp(log_p[:, :-1])
        residual = -probs
        observed = dataset.outcome < n_rows
        residual[rows[observed], dataset.outcome[observed]] += 1.0
        grad_full = (residual.T @ X).ravel()

        hess_full = np.empty((n_rows * D, n_rows * D))
        for i in range(n_rows):
            for j in range(i, n_rows):
                weight = probs[:, i] * ((1.0 if i == j else 0.0) - probs[:, j])
                block = -(X * weight[:, None]).T @ X
                hess_full[i * D:(i + 1) * D, j * D:(j + 1) * D] = block
                hess_full[j * D:(j + 1) * D, i * D:(i + 1) * D] = block.T
        return loglik, grad_full[free], hess_full[np.ix_(free, free)]

    @staticmethod
    def _newton_step(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
        try:
            factor = linalg.cho_factor(-hess)
            return linalg.cho_solve(factor, grad)
        except linalg.LinAlgError:
            logger.warning("Hessian not negative definite, taking a gradient step")
            return grad / max(1.0, float(np.max(np.abs(grad))))
