import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from models.dataset import Dataset
from models.model_spec import Inclusion, ModelSpec
from models.priors import McmcConfig, PriorSpec
from models.theta import Theta
from services.diagnostics_service import enumerate_state_posterior
from services.likelihood import log_likelihood, stationary_probs
from services import mcmc_service
from services.mcmc_service import (Block, McmcSampler, beta_blocks, sample_beta_block, sample_states,
                                   sample_transition_probs, transition_counts)
from services.mle_service import MleEstimator


def test_transition_counts_alternating():
    S = np.array([0, 1] * 5)
    assert transition_counts(S) == (0, 5, 4, 0)


def test_transition_draws_for_all_zero_states():
    rng = np.random.default_rng(0)
    draws = np.array([sample_transition_probs(np.zeros(208, dtype=np.int8), PriorSpec(), rng)
                      for _ in range(5000)])
    assert draws[:, 0].mean() == pytest.approx(1 / 209, abs=3e-4)
    assert np.all(draws[:, 0] <= draws[:, 1])


def test_label_restriction_enforced_on_symmetric_counts():
    S = np.array([0, 0, 1, 1] * 5)
    rng = np.random.default_rng(1)
    free = np.array([sample_transition_probs(S, PriorSpec(), rng, restrict=False) for _ in range(2000)])
    restricted = np.array([sample_transition_probs(S, PriorSpec(), rng) for _ in range(2000)])
    assert np.any(free[:, 0] > free[:, 1])
    assert np.all(restricted[:, 0] <= restricted[:, 1])


def test_prior_only_transition_moments():
    rng = np.random.default_rng(2)
    draws = np.array([sample_transition_probs(np.zeros(1, dtype=np.int8), PriorSpec(), rng)
                      for _ in range(4000)])
    # uniform on the triangle p01 <= p10
    se = np.sqrt(1 / 18 / 4000)
    assert abs(draws[:, 0].mean() - 1 / 3) < 3 * se
    assert abs(draws[:, 1].mean() - 2 / 3) < 3 * se


def test_transition_update_keeps_current_or_moves_validly():
    rng = np.random.default_rng(3)
    S = np.array([1, 1, 0, 0, 0, 1, 0, 0], dtype=np.int8)
    current = (0.2, 0.5)
    for _ in range(200):
        p01, p10 = sample_transition_probs(S, PriorSpec(), rng, current=current)
        assert 0.0 <= p01 <= p10 <= 1.0
        current = (p01, p10)


def _toy(T, seed=0, per_period=3):
    rng = np.random.default_rng(seed)
    records = [(t, int(rng.integers(1, 4)), [1.0, float(rng.normal())])
               for t in range(1, T + 1) for _ in range(per_period)]
    return Dataset.from_records(T, 3, records)


def test_equal_coefficients_give_prior_state_chain():
    data = _toy(20)
    spec = ModelSpec.full(3, 2, switching=True)
    beta = np.array([[0.3, -0.2], [0.1, 0.4]])
    p01, p10 = 0.2, 0.4
    rng = np.random.default_rng(4)
    draws = np.array([sample_states(data, spec, beta, beta, p01, p10, rng) for _ in range(4000)])
    pbar1 = stationary_probs(p01, p10)[1]
    assert draws.mean() == pytest.approx(pbar1, abs=0.015)
    leaving = draws[:, 1:][draws[:, :-1] == 0]
    assert abs(leaving.mean() - p01) < 4 * np.sqrt(p01 * (1 - p01) / leaving.size)


def test_state_draws_match_enumeration():
    data = _toy(8, seed=6)
    spec = ModelSpec.full(3, 2, switching=True)
    beta0 = np.array([[-1.0, 0.8], [0.5, -0.3]])
    beta1 = np.array([[1.0, -0.6], [-0.4, 0.9]])
    rng = np.random.default_rng(8)
    n = 20000
    draws = np.array([sample_states(data, spec, beta0, beta1, 0.25, 0.45, rng) for _ in range(n)])
    exact = enumerate_state_posterior(data, beta0, beta1, 0.25, 0.45)
    band = 4 * np.sqrt(exact * (1 - exact) / n) + 1e-12
    assert np.all(np.abs(draws.mean(axis=0) - exact) <= band)


def test_absorbing_state_zero():
    data = _toy(10)
    spec = ModelSpec.full(3, 2, switching=True)
    beta0 = np.zeros((2, 2))
    beta1 = np.array([[2.0, 0.0], [-2.0, 0.0]])
    S = sample_states(data, spec, beta0, beta1, 0.0, 0.5, np.random.default_rng(0))
    assert not S.any()


def test_zero_step_proposal_always_accepted(toy_dataset):
    spec = ModelSpec.full(3, 2, switching=True)
    theta = Theta(beta0=np.array([[0.1, 0.2], [0.3, 0.4]]), beta1=np.array([[-0.1, 0.2], [0.3, -0.4]]),
                  p01=0.2, p10=0.3, S=[0, 1, 0])
    block = Block(0, 1, np.array([0, 1]))
    update = sample_beta_block(toy_dataset, spec, theta, block, np.random.default_rng(0), 0.0, PriorSpec())
    assert update.accepted
    assert update.loglik == pytest.approx(log_likelihood(toy_dataset, spec, theta))


def test_shared_block_moves_both_states(toy_dataset):
    mask = [[Inclusion.SPECIFIC, Inclusion.SHARED], [Inclusion.SPECIFIC, Inclusion.EXCLUDED]]
    spec = ModelSpec(I=3, switching=True, mask=mask)
    theta = Theta(beta0=np.array([[0.1, 0.2], [0.3, 0.0]]), beta1=np.array([[-0.1, 0.2], [0.5, 0.0]]),
                  p01=0.2, p10=0.3, S=[0, 1, 1])
    shared = next(b for b in beta_blocks(spec) if b.state is None)
    rng = np.random.default_rng(5)
    for _ in range(50):
        theta = sample_beta_block(toy_dataset, spec, theta, shared, rng, 0.5, PriorSpec()).theta
        theta.validate(spec)
    assert theta.beta0[0, 1] == theta.beta1[0, 1]


def test_beta_blocks_layout():
    mask = [[Inclusion.SPECIFIC, Inclusion.SHARED, Inclusion.EXCLUDED]]
    names = [b.name for b in beta_blocks(ModelSpec(I=2, switching=True, mask=mask))]
    assert names == ['beta[1]', 'beta0[1]', 'beta1[1]']
    single = beta_blocks(ModelSpec(I=2, switching=False, mask=mask))
    assert [b.name for b in single] == ['beta[1]']
    assert single[0].columns.tolist() == [0, 1]


def test_runs_are_deterministic_given_seed(switching_data):
    spec, _, data = switching_data
    config = McmcConfig(n_chains=2, n_burnin=30, n_keep=30, seed=11)
    a = McmcSampler(config=config).run_chains(data.dataset, spec)
    b = McmcSampler(config=config).run_chains(data.dataset, spec)
    assert a.equals(b)


def test_draws_respect_theta_invariants(switching_data):
    spec, _, data = switching_data
    sample = McmcSampler(config=McmcConfig(n_chains=2, n_burnin=50, n_keep=80, thinning=2, seed=3)) \
        .run_chains(data.dataset, spec)
    assert sample.n_pooled == 160
    for chain in sample.chains:
        assert np.all(chain.p01 <= chain.p10)
        shared = spec.mask == Inclusion.SHARED
        assert np.array_equal(chain.beta0[:, shared], chain.beta1[:, shared])
        assert set(np.unique(chain.S)) <= {0, 1}
    theta = sample.theta(1, 10)
    theta.validate(spec, data.dataset.T)
    assert sample.chains[0].loglik[10] == pytest.approx(log_likelihood(data.dataset, spec, sample.theta(0, 10)))


def test_single_state_posterior_means_close_to_mle(ml_data):
    spec, _, data = ml_data
    fit = MleEstimator().fit_ml(data.dataset, spec)
    config = McmcConfig(n_chains=2, n_burnin=500, n_keep=1000, seed=21)
    sample = McmcSampler(config=config).run_chains(data.dataset, spec, start=fit)
    beta_mean, _ = sample.posterior_mean_betas()
    assert np.all(np.abs(beta_mean - fit.beta_hat) <= 0.3 * fit.se + 1e-12)
    assert np.all(np.isnan(sample.pooled('p01')))
    assert not sample.pooled('S').any()


def test_overdispersed_start_within_two_se(ml_data):
    spec, _, data = ml_data
    fit = MleEstimator().fit_ml(data.dataset, spec)
    sampler = McmcSampler()
    rng = np.random.default_rng(0)
    for _ in range(20):
        theta = sampler._initial_theta(data.dataset, spec.as_switching(), rng, fit)
        assert np.all(np.abs(theta.beta0 - fit.beta_hat) <= 2 * fit.se + 1e-12)
        assert theta.p01 <= theta.p10


def test_acceptance_warning_outside_band(ml_data, caplog, monkeypatch):
    spec, _, data = ml_data
    sampler = McmcSampler(priors=PriorSpec(sigma_beta=1.0),
                          config=McmcConfig(n_chains=1, n_burnin=1, n_keep=50, initial_step=100.0, seed=1))
    monkeypatch.setattr(sampler, 'start_fit', lambda dataset, spec: None)
    with caplog.at_level(logging.WARNING, logger='diagnostics'):
        sampler.run_chains(data.dataset, spec)
    assert any('acceptance rate' in record.message for record in caplog.records)


@pytest.mark.slow
def test_prior_only_run_recovers_prior_moments():
    data = Dataset.from_records(5, 3, [], D=2)
    spec = ModelSpec.full(3, 2, switching=True)
    sampler = McmcSampler(priors=PriorSpec(sigma_beta=1.0),
                          config=McmcConfig(n_chains=1, n_burnin=2000, n_keep=20000, thinning=2, seed=5))
    sample = sampler.run_chains(data, spec)
    betas = sample.pooled('beta0').reshape(sample.n_pooled, -1)
    assert_allclose(betas.var(axis=0), 1.0, rtol=0.15)
    assert sample.pooled('p01').mean() == pytest.approx(1 / 3, abs=0.03)
    assert sample.pooled('p10').mean() == pytest.approx(2 / 3, abs=0.03)


def test_step_scales_frozen_after_burnin(ml_data, monkeypatch):
    spec, _, data = ml_data
    steps = []
    original = mcmc_service.sample_beta_block

    def recording(dataset, spec, theta, block, rng, step, prior, current_loglik=None):
        steps.append((block.name, np.array(step, dtype=float)))
        return original(dataset, spec, theta, block, rng, step, prior, current_loglik=current_loglik)

    monkeypatch.setattr(mcmc_service, 'sample_beta_block', recording)
    config = McmcConfig(n_chains=1, n_burnin=60, n_keep=40, thinning=2, seed=4)
    sample = McmcSampler(config=config).run_chains(data.dataset, spec)

    n_blocks = len(beta_blocks(spec))
    assert len(steps) == n_blocks * (60 + 40 * 2)
    burnin, kept = steps[:n_blocks * 60], steps[n_blocks * 60:]
    chain = sample.chains[0]
    for name, frozen in chain.step_scales.items():
        during = [step for block, step in burnin if block == name]
        after = [step for block, step in kept if block == name]
        assert len(after) == 80
        assert any(not np.array_equal(during[0], step) for step in during)
        for step in after:
            assert_allclose(step, frozen, rtol=0, atol=0)


@pytest.mark.slow
def test_block_update_matches_grid_posterior():
    # 10 of 30 records in outcome 1, intercept only, N(0, 1) prior
    records = [(1, 1, [1.0])] * 10 + [(1, 2, [1.0])] * 20
    data = Dataset.from_records(1, 2, records, covariate_names=('intercept',))
    spec = ModelSpec.full(2, 1)
    prior = PriorSpec(sigma_beta=1.0)
    theta = Theta.single_state(np.zeros((1, 1)), 1)
    block = beta_blocks(spec)[0]
    rng = np.random.default_rng(2024)

    loglik = log_likelihood(data, spec, theta)
    n_draws, thin = 100_000, 3
    draws = np.empty(n_draws)
    for sweep in range(1000 + n_draws * thin):
        update = sample_beta_block(data, spec, theta, block, rng, 0.9, prior, current_loglik=loglik)
        theta, loglik = update.theta, update.loglik
        if sweep >= 1000 and (sweep - 1000) % thin == 0:
            draws[(sweep - 1000) // thin] = theta.beta0[0, 0]

    grid = np.linspace(-6.0, 4.0, 20001)
    log_post = 10 * grid - 30 * np.logaddexp(0.0, grid) - 0.5 * grid ** 2
    density = np.exp(log_post - log_post.max())
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    cdf /= cdf[-1]
    result = stats.kstest(draws, lambda x: np.interp(x, grid, cdf))
    assert result.statistic < 0.02
