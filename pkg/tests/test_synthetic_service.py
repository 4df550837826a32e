import math

import numpy as np
import pytest

from models.errors import ConfigError, ShapeMismatchError
from models.model_spec import Inclusion, ModelSpec
from models.posterior import ChainDraws, PosteriorSample
from models.priors import McmcConfig
from models.theta import Theta
from services.likelihood import log_outcome_probs
from services.mcmc_service import McmcSampler, transition_counts
from services.synthetic_service import (CovariateColumn, design_mask, generate, load_design,
                                        recovery_score)
from tests.conftest import COVARIATES, LABELS, switching_truth

INTERCEPT = CovariateColumn('intercept', 'constant')


def _intercept_model(beta, switching=False, p01=0.5, p10=0.5, T=10):
    beta = np.asarray(beta, dtype=float)
    spec = ModelSpec.full(beta.shape[0] + 1, 1, switching, Inclusion.SHARED)
    theta = Theta(beta0=beta, beta1=beta, p01=p01, p10=p10, S=np.zeros(T, dtype=np.int8))
    return spec, theta


def test_fair_chain_transition_frequencies():
    spec, theta = _intercept_model([[0.0]], switching=True, T=10_000)
    data = generate(spec, theta, 10_000, 0, [INTERCEPT], np.random.default_rng(0))
    n00, n01, n10, n11 = transition_counts(data.S)
    for stay, leave in ((n00, n01), (n11, n10)):
        n = stay + leave
        assert abs(leave / n - 0.5) < 4 * math.sqrt(0.25 / n)


def test_pdo_heavy_shares():
    beta = [[math.log(143 / 15582)], [math.log(3369 / 15582)]]
    spec, theta = _intercept_model(beta, T=100)
    data = generate(spec, theta, 100, 200, [INTERCEPT], np.random.default_rng(1), outcome_labels=('f', 'i', 'p'))
    shares = data.dataset.outcome_counts() / data.dataset.n_records
    expected = np.array([143, 3369, 15582]) / 19094
    sigma = np.sqrt(expected * (1 - expected) / data.dataset.n_records)
    assert np.all(np.abs(shares - expected) <= 4 * sigma)


def test_outcome_frequencies_follow_model_probabilities():
    spec = ModelSpec.full(3, 2, False, Inclusion.SHARED)
    theta = Theta.single_state(np.array([[-1.0, 1.0], [0.5, -0.5]]), 50)
    columns = [INTERCEPT, CovariateColumn('x', 'uniform', low=-2.0, high=2.0)]
    data = generate(spec, theta, 50, 400, columns, np.random.default_rng(2)).dataset
    expected = np.exp(log_outcome_probs(theta.beta0, data.X)).mean(axis=0)
    shares = data.outcome_counts() / data.n_records
    assert np.all(np.abs(shares - expected) <= 4 * np.sqrt(expected * (1 - expected) / data.n_records))


def test_zero_records_per_period():
    spec, theta = _intercept_model([[0.0]], T=5)
    data = generate(spec, theta, 5, 0, [INTERCEPT], np.random.default_rng(3))
    assert data.dataset.T == 5
    assert data.dataset.n_records == 0


def test_poisson_and_listed_counts():
    spec, theta = _intercept_model([[0.0]], T=4)
    listed = generate(spec, theta, 4, [3, 0, 2, 5], [INTERCEPT], np.random.default_rng(4))
    assert listed.dataset.records_per_period().tolist() == [3, 0, 2, 5]
    poisson = generate(spec, theta, 4, 20.0, [INTERCEPT], np.random.default_rng(5), poisson_rate=True)
    assert poisson.dataset.T == 4
    with pytest.raises(ShapeMismatchError):
        generate(spec, theta, 4, [1, 2], [INTERCEPT], np.random.default_rng(6))


def test_generate_is_deterministic(switching_data):
    spec, theta, data = switching_data
    columns = [INTERCEPT, CovariateColumn('wet', 'uniform', low=-1.0, high=1.0)]
    again = generate(spec, theta, 60, 80, columns, np.random.default_rng(2024), outcome_labels=('fatality', 'injury', 'pdo'))
    assert again.dataset.equals(data.dataset)
    assert np.array_equal(again.S, data.S)


def test_covariate_sampler_validation():
    with pytest.raises(ValueError):
        CovariateColumn('x', 'gamma')
    with pytest.raises(ValueError):
        CovariateColumn('x', 'bernoulli', q=1.5)
    spec, theta = _intercept_model([[0.0]])
    with pytest.raises(ValueError):
        generate(spec, theta, 10, 5, [CovariateColumn('x', 'uniform')], np.random.default_rng(0))


def _point_mass(spec, theta, n=200, chains=2):
    return PosteriorSample(spec=spec, chains=tuple(
        ChainDraws(beta0=np.repeat(theta.beta0[None], n, axis=0), beta1=np.repeat(theta.beta1[None], n, axis=0),
                   p01=np.full(n, theta.p01), p10=np.full(n, theta.p10),
                   S=np.repeat(theta.S[None], n, axis=0), loglik=np.zeros(n))
        for _ in range(chains)))


def test_point_mass_sample_recovers_truth(switching_data):
    spec, theta, _ = switching_data
    report = recovery_score(theta, _point_mass(spec, theta))
    assert report.coverage_rate == 1.0
    assert report.state_accuracy == 1.0
    assert max(abs(error) for error in report.errors.values()) < 1e-12


def test_recovery_shape_mismatch(switching_data):
    spec, theta, _ = switching_data
    other = Theta(beta0=np.zeros((2, 3)), beta1=np.zeros((2, 3)), p01=0.1, p10=0.2, S=theta.S)
    with pytest.raises(ShapeMismatchError):
        recovery_score(other, _point_mass(spec, theta))


def test_design_mask_levels():
    beta0 = np.array([[-1.0, 0.5, 0.0, 0.3]])
    beta1 = np.array([[-1.0, 0.9, 0.0, 0.3]])
    assert design_mask(beta0, beta1, True).tolist() == [[1, 2, 0, 1]]
    assert design_mask(beta0, beta0, False).tolist() == [[1, 1, 0, 1]]


def test_load_design(tmp_path):
    path = tmp_path / 'design.yaml'
    path.write_text(
        "T: 12\n"
        "records: 30\n"
        "outcome_labels: [fatality, injury, pdo]\n"
        "covariates:\n"
        "  - {name: intercept, kind: constant}\n"
        "  - {name: wet, kind: bernoulli, q: 0.3}\n"
        "beta0: [[-3.0, 0.5], [-1.0, 0.2]]\n"
        "beta1: [[-2.0, 0.5], [-0.5, 0.2]]\n"
        "p01: 0.1\n"
        "p10: 0.4\n", encoding='utf-8')
    design = load_design(str(path))
    assert design.spec.switching
    assert design.spec.mask.tolist() == [[2, 1], [2, 1]]
    data = design.generate(np.random.default_rng(0))
    assert data.dataset.n_records == 360
    assert data.dataset.outcome_labels == ('fatality', 'injury', 'pdo')


def test_load_design_rejects_label_violation(tmp_path):
    path = tmp_path / 'design.yaml'
    path.write_text("T: 5\nrecords: 2\ncovariates: [{name: intercept, kind: constant}]\n"
                    "beta0: [[0.0]]\nbeta1: [[1.0]]\np01: 0.6\np10: 0.2\n", encoding='utf-8')
    with pytest.raises(ConfigError):
        load_design(str(path))


@pytest.mark.slow
def test_switching_parameters_recovered():
    coverage, accuracy = [], []
    for seed in range(5):
        spec, theta = switching_truth(60)
        data = generate(spec, theta, 60, 80, COVARIATES, np.random.default_rng(300 + seed), outcome_labels=LABELS)
        sampler = McmcSampler(config=McmcConfig(n_chains=2, n_burnin=1000, n_keep=1000, seed=17 + seed))
        report = recovery_score(theta.replace(S=data.S), sampler.run_chains(data.dataset, spec))
        coverage.append(report.coverage_rate)
        accuracy.append(report.state_accuracy)
    assert np.mean(coverage) >= 0.90
    assert np.mean(accuracy) >= 0.75
