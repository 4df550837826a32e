import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import Dataset
from models.errors import SampleSizeError
from models.mle_fit import MleFit
from models.model_spec import Inclusion, ModelSpec
from models.posterior import CredibleInterval, ParameterKey, PosteriorSample, StateSeries
from services.likelihood import log_outcome_probs
from services.mcmc_service import McmcSampler

logger = logging.getLogger(__name__)

MIN_POOLED_DRAWS = 100
RESTRICTION_LEVELS = (0.60, 0.85, 0.95)


class RestrictionOutcome(str, Enum):
    SWITCHING = 'switching'
    COLLAPSED = 'collapsed'
    STATE_NOT_REALIZED = 'state_not_realized'


@dataclass
class RestrictionResult:
    spec: ModelSpec
    sample: PosteriorSample
    outcome: RestrictionOutcome
    history: List[str] = field(default_factory=list)

    @property
    def collapsed(self) -> bool:
        return self.outcome != RestrictionOutcome.SWITCHING


def credible_interval(values: np.ndarray, level: float) -> CredibleInterval:
    """Equal-tail interval from linearly interpolated order statistics"""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    values = np.asarray(values, dtype=float)
    a = 1.0 - level
    lower, upper = np.quantile(values, [a / 2.0, 1.0 - a / 2.0])
    return CredibleInterval(level=level, lower=float(lower), upper=float(upper),
                            mean=float(np.mean(values)))


def summarize(sample: PosteriorSample, level: float = 0.95) -> Dict[ParameterKey, CredibleInterval]:
    """Credible intervals of every continuous parameter over pooled chains"""
    if sample.n_pooled < MIN_POOLED_DRAWS:
        raise SampleSizeError(f"{sample.n_pooled} pooled draws; at least {MIN_POOLED_DRAWS} required")
    return {key: credible_interval(sample.pooled_values(key), level) for key in sample.keys()}


def stationary_summary(sample: PosteriorSample, level: float = 0.95) -> Dict[str, CredibleInterval]:
    """Posterior of the stationary probabilities, computed draw by draw"""
    p01, p10 = sample.pooled('p01'), sample.pooled('p10')
    total = p01 + p10
    return {'pbar0': credible_interval(p10 / total, level),
            'pbar1': credible_interval(p01 / total, level)}


def state_series(sample: PosteriorSample, label: str = '') -> StateSeries:
    """P(s_t=1|Y) = E(s_t|Y) and the posterior std of s_t per period"""
    states = sample.pooled('S').astype(float)
    prob = states.mean(axis=0)
    return StateSeries(prob=prob, std=states.std(axis=0), label=label)


def averaged_outcome_probs(sample: PosteriorSample, dataset: Dataset, spec: ModelSpec) -> np.ndarray:
    """(2, I) outcome probabilities at posterior-mean betas, averaged over
    all records, for state 0 (row 0) and state 1 (row 1)"""
    beta0, beta1 = sample.posterior_mean_betas()
    if not spec.switching:
        beta1 = beta0
    return np.vstack([np.exp(log_outcome_probs(beta, dataset.X)).mean(axis=0) for beta in (beta0, beta1)])


def restrict_once(sample: PosteriorSample, spec: ModelSpec, level: float) -> Tuple[ModelSpec, List[str]]:
    """One restriction pass at the given credibility level.

    Coefficients whose interval contains 0 are excluded (state-specific
    pairs when both state intervals contain 0); intercepts are exempt.
    Then remaining state-specific pairs whose draw-by-draw difference has an
    interval containing 0 become shared.
    """
    changes = []
    beta0, beta1 = sample.pooled('beta0'), sample.pooled('beta1')
    label = lambda i, d: f"{sample.outcome_labels[i]}:{sample.covariate_names[d]}"

    for i, d in list(spec.entries()):
        if d == 0:
            continue
        if spec.mask[i, d] == Inclusion.SHARED:
            zero = credible_interval(beta0[:, i, d], level).contains(0.0)
        else:
            zero = (credible_interval(beta0[:, i, d], level).contains(0.0)
                    and credible_interval(beta1[:, i, d], level).contains(0.0))
        if zero:
            spec = spec.with_entry(i, d, Inclusion.EXCLUDED)
            changes.append(f"{label(i, d)} restricted to zero at {level:.0%}")

    for i, d in list(spec.entries(Inclusion.SPECIFIC)):
        if credible_interval(beta0[:, i, d] - beta1[:, i, d], level).contains(0.0):
            spec = spec.with_entry(i, d, Inclusion.SHARED)
            changes.append(f"{label(i, d)} restricted to be equal in both states at {level:.0%}")
    return spec, changes


def restrict_workflow(dataset: Dataset, spec: ModelSpec, sampler: McmcSampler,
                      levels: Sequence[float] = RESTRICTION_LEVELS, max_refits_per_pass: int = 3,
                      start: Optional[MleFit] = None) -> RestrictionResult:
    """Fit the switching model, then restrict at 60%, 85% and 95%
    credibility in turn, refitting after every change. Within a pass,
    restriction and refit repeat until the pass changes nothing (or
    max_refits_per_pass refits)."""
    if not spec.switching:
        spec = spec.as_switching()
    if start is None:
        start = sampler.start_fit(dataset, spec)
    history: List[str] = []
    sample = sampler.run_chains(dataset, spec, start=start)

    for level in levels:
        for _ in range(max_refits_per_pass):
            new_spec, changes = restrict_once(sample, spec, level)
            if not changes:
                break
            for change in changes:
                logger.info(change)
            history.extend(changes)
            spec = new_spec
            if not spec.has_state_specific():
                logger.info("All coefficients equal in both states: switching model collapses")
                return RestrictionResult(spec=spec, sample=sample, outcome=RestrictionOutcome.COLLAPSED,
                                         history=history)
            sample = sampler.run_chains(dataset, spec, start=start)

    series = state_series(sample)
    if not np.any(series.prob >= 0.5):
        logger.info("No period with P(s_t=1|Y) >= 0.5: the less frequent state is not realized")
        return RestrictionResult(spec=spec, sample=sample, outcome=RestrictionOutcome.STATE_NOT_REALIZED,
                                 history=history)
    return RestrictionResult(spec=spec, sample=sample, outcome=RestrictionOutcome.SWITCHING, history=history)
