import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from models.dataset import Dataset
from models.errors import DegenerateChainError, MsmlError
from models.mle_fit import MleFit
from models.model_spec import Inclusion, ModelSpec
from models.posterior import ChainDraws, PosteriorSample
from models.priors import McmcConfig, PriorSpec
from models.theta import Theta
from services.likelihood import log_likelihood, period_logliks, stationary_probs
from services.mle_service import MleEstimator
from services.state_filter import backward_sample, forward_filter
from utils.helpers import spawn_generators

logger = logging.getLogger(__name__)
diagnostics_logger = logging.getLogger('diagnostics')

_BATCH = 256
_MAX_TRANSITION_ATTEMPTS = 1_000_000


@dataclass(frozen=True, eq=False)
class Block:
    """Coefficients of outcome row i updated together: state 0, state 1,
    or (state None) the entries shared across states"""
    i: int
    state: Optional[int]
    columns: np.ndarray

    @property
    def name(self) -> str:
        prefix = 'beta' if self.state is None else f"beta{self.state}"
        return f"{prefix}[{self.i + 1}]"


class BlockUpdate(NamedTuple):
    theta: Theta
    accepted: bool
    loglik: float


def beta_blocks(spec: ModelSpec) -> List[Block]:
    blocks = []
    for i in range(spec.mask.shape[0]):
        row = spec.mask[i]
        if not spec.switching:
            blocks.append(Block(i, None, np.flatnonzero(row != Inclusion.EXCLUDED)))
            continue
        shared = np.flatnonzero(row == Inclusion.SHARED)
        specific = np.flatnonzero(row == Inclusion.SPECIFIC)
        if shared.size:
            blocks.append(Block(i, None, shared))
        if specific.size:
            blocks.append(Block(i, 0, specific))
            blocks.append(Block(i, 1, specific))
    return blocks


def sample_states(dataset: Dataset, spec: ModelSpec, beta0: np.ndarray, beta1: np.ndarray,
                  p01: float, p10: float, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of S from P(S | Y, beta, p) by forward filtering and
    backward sampling"""
    if not (0.0 <= p01 <= 1.0 and 0.0 <= p10 <= 1.0):
        raise ValueError(f"transition probabilities outside [0,1]: {p01}, {p10}")
    emissions = period_logliks(dataset, beta0, beta1)
    filtered, _ = forward_filter(emissions, p01, p10)
    return backward_sample(filtered, p01, p10, rng)


def transition_counts(S: np.ndarray) -> Tuple[int, int, int, int]:
    """(n00, n01, n10, n11) over consecutive periods"""
    S = np.asarray(S, dtype=np.int64)
    pairs = 2 * S[:-1] + S[1:]
    n00, n01, n10, n11 = np.bincount(pairs, minlength=4)[:4]
    return int(n00), int(n01), int(n10), int(n11)


def sample_transition_probs(S: np.ndarray, prior: PriorSpec, rng: np.random.Generator,
                            current: Optional[Tuple[float, float]] = None,
                            restrict: bool = True) -> Tuple[float, float]:
    """Conjugate Beta draws of (p01, p10) given the transition counts of S,
    redrawn until p01 <= p10.

    With ``current`` given, the draw is accepted with the ratio of the
    stationary probability of s_1 under the new and current values (and
    ``current`` is returned otherwise), so the update also respects the
    stationary start of the chain.
    """
    n00, n01, n10, n11 = transition_counts(S)
    a, b = prior.transition_a, prior.transition_b
    p01 = p10 = None
    drawn = 0
    while p01 is None:
        if drawn >= _MAX_TRANSITION_ATTEMPTS:
            raise DegenerateChainError(
                f"no draw with p01 <= p10 after {drawn} attempts (counts {n00},{n01},{n10},{n11})")
        cand01 = rng.beta(a + n01, b + n00, size=_BATCH)
        cand10 = rng.beta(a + n10, b + n11, size=_BATCH)
        drawn += _BATCH
        if not restrict:
            p01, p10 = float(cand01[0]), float(cand10[0])
            break
        ok = np.flatnonzero(cand01 <= cand10)
        if ok.size:
            p01, p10 = float(cand01[ok[0]]), float(cand10[ok[0]])

    if current is None or len(S) == 0:
        return p01, p10
    s1 = int(S[0])
    new_pbar = stationary_probs(p01, p10)[s1]
    old_pbar = stationary_probs(*current)[s1]
    if old_pbar <= 0.0 or rng.random() * old_pbar < new_pbar:
        return p01, p10
    return current


def _log_prior_beta(values: np.ndarray, prior: PriorSpec) -> float:
    return -0.5 * float(np.sum(values * values)) / (prior.sigma_beta ** 2)


def sample_beta_block(dataset: Dataset, spec: ModelSpec, theta: Theta, block: Block,
                      rng: np.random.Generator, step, prior: PriorSpec,
                      current_loglik: Optional[float] = None) -> BlockUpdate:
    """Gaussian random-walk Metropolis update of one coefficient block.
    Shared blocks move beta0 and beta1 together."""
    if current_loglik is None:
        current_loglik = log_likelihood(dataset, spec, theta)
    cols = block.columns
    source = theta.beta1 if block.state == 1 else theta.beta0
    old = source[block.i, cols]
    new = old + np.asarray(step, dtype=float) * rng.standard_normal(cols.size)

    beta0, beta1 = theta.beta0, theta.beta1
    if block.state in (None, 0):
        beta0 = beta0.copy()
        beta0[block.i, cols] = new
    if block.state in (None, 1):
        beta1 = beta1.copy()
        beta1[block.i, cols] = new
    proposal = theta.replace(beta0=beta0, beta1=beta1)

    new_loglik = log_likelihood(dataset, spec, proposal)
    if new_loglik == float('-inf'):
        return BlockUpdate(theta, False, current_loglik)
    log_ratio = new_loglik - current_loglik + _log_prior_beta(new, prior) - _log_prior_beta(old, prior)
    if math.log(max(rng.random(), 1e-300)) < log_ratio or log_ratio >= 0.0:
        return BlockUpdate(proposal, True, new_loglik)
    return BlockUpdate(theta, False, current_loglik)


class McmcSampler:
    """Multi-chain Metropolis-within-Gibbs sampler for ML and MSML specs"""

    def __init__(self, priors: Optional[PriorSpec] = None, config: Optional[McmcConfig] = None,
                 mle: Optional[MleEstimator] = None):
        self.priors = priors or PriorSpec()
        self.config = config or McmcConfig()
        self.mle = mle or MleEstimator()

    def run_chains(self, dataset: Dataset, spec: ModelSpec, start: Optional[MleFit] = None) -> PosteriorSample:
        """Independent chains from overdispersed starts; each sweep updates
        all beta blocks, then (p01, p10), then S"""
        if start is None:
            start = self.start_fit(dataset, spec)
        blocks = beta_blocks(spec)
        generators = spawn_generators(self.config.seed, self.config.n_chains)
        logger.info(f"Running {self.config.n_chains} chains: switching={spec.switching}, "
                    f"{len(blocks)} beta blocks, burn-in {self.config.n_burnin}, "
                    f"keep {self.config.n_keep} x thin {self.config.thinning}")

        def run(index: int) -> ChainDraws:
            return self._run_chain(dataset, spec, blocks, generators[index], start, index)

        if self.config.parallel_chains and self.config.n_chains > 1:
            with ThreadPoolExecutor(max_workers=self.config.n_chains) as pool:
                chains = list(pool.map(run, range(self.config.n_chains)))
        else:
            chains = [run(index) for index in range(self.config.n_chains)]

        return PosteriorSample(spec=spec, chains=tuple(chains),
                               covariate_names=dataset.covariate_names,
                               outcome_labels=dataset.outcome_labels)

    def start_fit(self, dataset: Dataset, spec: ModelSpec) -> Optional[MleFit]:
        try:
            return self.mle.fit_ml(dataset, spec.as_single_state())
        except (MsmlError, ValueError) as e:
            logger.warning(f"No MLE start available ({e}); starting chains from prior draws")
            return None

    def _initial_theta(self, dataset: Dataset, spec: ModelSpec, rng: np.random.Generator,
                       start: Optional[MleFit]) -> Theta:
        shape = spec.mask.shape
        included = spec.included()
        if start is not None:
            beta0 = start.beta_hat + rng.uniform(-2.0, 2.0, shape) * start.se
            beta1 = start.beta_hat + rng.uniform(-2.0, 2.0, shape) * start.se
        else:
            beta0 = rng.normal(0.0, self.priors.sigma_beta, shape)
            beta1 = rng.normal(0.0, self.priors.sigma_beta, shape)
        beta0 = np.where(included, beta0, 0.0)
        beta1 = np.where(included, beta1, 0.0)
        if not spec.switching:
            return Theta(beta0=beta0, beta1=beta0, p01=float('nan'), p10=float('nan'),
                         S=np.zeros(dataset.T, dtype=np.int8))
        shared = spec.mask == Inclusion.SHARED
        beta1 = np.where(shared, beta0, beta1)
        p01, p10 = np.sort(rng.uniform(0.0, 1.0, 2))
        S = sample_states(dataset, spec, beta0, beta1, float(p01), float(p10), rng)
        return Theta(beta0=beta0, beta1=beta1, p01=float(p01), p10=float(p10), S=S)

    def _base_steps(self, blocks: List[Block], start: Optional[MleFit]) -> List[np.ndarray]:
        steps = []
        for block in blocks:
            base = np.full(block.columns.size, self.config.initial_step)
            if start is not None:
                se = start.se[block.i, block.columns]
                base = np.where(se > 0.0, 2.38 * se / math.sqrt(block.columns.size), base)
            steps.append(base)
        return steps

    def _run_chain(self, dataset: Dataset, spec: ModelSpec, blocks: List[Block],
                   rng: np.random.Generator, start: Optional[MleFit], index: int) -> ChainDraws:
        config = self.config
        theta = self._initial_theta(dataset, spec, rng, start)
        loglik = log_likelihood(dataset, spec, theta)
        base_steps = self._base_steps(blocks, start)
        log_scales = np.zeros(len(blocks))
        accepted = np.zeros(len(blocks))

        n_total = config.n_burnin + config.n_keep * config.thinning
        shape = spec.mask.shape
        draws_beta0 = np.empty((config.n_keep,) + shape)
        draws_beta1 = np.empty((config.n_keep,) + shape)
        draws_p01 = np.empty(config.n_keep)
        draws_p10 = np.empty(config.n_keep)
        draws_S = np.empty((config.n_keep, dataset.T), dtype=np.int8)
        draws_ll = np.empty(config.n_keep)
        kept = 0

        for sweep in range(n_total):
            burning = sweep < config.n_burnin
            for b, block in enumerate(blocks):
                update = sample_beta_block(dataset, spec, theta, block, rng,
                                           math.exp(log_scales[b]) * base_steps[b],
                                           self.priors, current_loglik=loglik)
                theta, loglik = update.theta, update.loglik
                if burning:
                    # Robbins-Monro adaptation, frozen once burn-in ends
                    gain = (sweep + 1) ** -0.6
                    log_scales[b] += gain * (float(update.accepted) - config.target_acceptance)
                else:
                    accepted[b] += update.accepted

            if spec.switching:
                p01, p10 = sample_transition_probs(theta.S, self.priors, rng,
                                                   current=(theta.p01, theta.p10))
                S = sample_states(dataset, spec, theta.beta0, theta.beta1, p01, p10, rng)
                theta = theta.replace(p01=p01, p10=p10, S=S)
                loglik = log_likelihood(dataset, spec, theta)

            if not burning and (sweep - config.n_burnin + 1) % config.thinning == 0:
                draws_beta0[kept] = theta.beta0
                draws_beta1[kept] = theta.beta1
                draws_p01[kept] = theta.p01
                draws_p10[kept] = theta.p10
                draws_S[kept] = theta.S
                draws_ll[kept] = loglik
                kept += 1

        n_post = config.n_keep * config.thinning
        acceptance = {block.name: float(accepted[b] / n_post) for b, block in enumerate(blocks)}
        low, high = config.acceptance_band
        for name, rate in acceptance.items():
            if not low <= rate <= high:
                diagnostics_logger.warning(f"Chain {index}: acceptance rate {rate:.3f} for {name} "
                                           f"outside [{low}, {high}] after adaptation")
        logger.info(f"Chain {index} finished: acceptance {acceptance}")

        return ChainDraws(beta0=draws_beta0, beta1=draws_beta1, p01=draws_p01, p10=draws_p10,
                          S=draws_S, loglik=draws_ll, acceptance=acceptance,
                          step_scales={block.name: math.exp(log_scales[b]) * base_steps[b]
                                       for b, block in enumerate(blocks)})
