import math

import numpy as np
import pytest

from models.dataset import Dataset
from models.errors import SingularCovarianceError, SparseDataError
from models.model_spec import Inclusion, ModelSpec
from models.priors import McmcConfig
from models.theta import Theta
from services.diagnostics_service import (GofModel, _cell_map, enumerate_marginal_loglik, exact_marginal_loglik,
                                          gof_pvalue, mpsrf, psrf, sample_psrf, simulate_states)
from services.likelihood import record_logliks, stationary_probs
from services.mcmc_service import McmcSampler
from services.mle_service import MleEstimator
from services.synthetic_service import CovariateColumn, generate


def test_psrf_identical_short_chains():
    assert psrf([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]) == pytest.approx(math.sqrt(2 / 3), abs=1e-12)


def test_converged_normal_chains():
    chains = np.random.default_rng(0).standard_normal((4, 4000, 3))
    assert max(psrf(chains[:, :, k]) for k in range(3)) < 1.01
    assert mpsrf(chains) < 1.01


def test_separated_chains_flagged():
    rng = np.random.default_rng(1)
    chains = rng.standard_normal((4, 500)) + np.array([[0.0], [0.0], [3.0], [3.0]])
    assert psrf(chains) > 1.1


def test_psrf_requires_two_chains():
    with pytest.raises(ValueError):
        psrf([[1.0, 2.0, 3.0]])


def test_mpsrf_singular_covariance_names_parameter():
    chains = np.random.default_rng(2).standard_normal((3, 200, 2))
    chains[:, :, 1] = 4.0
    with pytest.raises(SingularCovarianceError, match='p10'):
        mpsrf(chains, names=['p01', 'p10'])


def test_sample_psrf_labels_every_parameter(switching_data):
    spec, _, data = switching_data
    sample = McmcSampler(config=McmcConfig(n_chains=2, n_burnin=1, n_keep=60, seed=4)).run_chains(data.dataset, spec)
    per_parameter, joint = sample_psrf(sample)
    assert set(per_parameter) == {sample.label(key) for key in sample.keys()}
    assert joint > 0.0


def test_cell_merging():
    cells = _cell_map(np.array([[0.5, 3.0, 2.0], [0.2, 0.3, 0.4]]), 1.0)
    assert cells.tolist() == [[1, 1, 2], [-1, -1, -1]]


def test_simulated_states_have_stationary_share():
    S = simulate_states(200_000, 0.1, 0.3, np.random.default_rng(3))
    assert S.mean() == pytest.approx(stationary_probs(0.1, 0.3)[1], abs=0.01)


def _ml_dataset(seed, T=12, per_period=40):
    spec = ModelSpec.full(3, 2, switching=False, level=Inclusion.SHARED)
    theta = Theta.single_state(np.array([[-1.0, 0.5], [0.4, -0.8]]), T)
    columns = [CovariateColumn('intercept', 'constant'), CovariateColumn('x', 'bernoulli', q=0.4)]
    return spec, theta, generate(spec, theta, T, per_period, columns, np.random.default_rng(seed)).dataset


def test_gof_true_model_not_rejected():
    spec, theta, data = _ml_dataset(5)
    model = GofModel(theta.beta0, theta.beta0, 0.5, 0.5, False)
    p_value = gof_pvalue(model, data, spec, n_rep=500, rng=np.random.default_rng(6))
    assert 0.001 < p_value <= 1.0


def test_gof_wrong_model_rejected():
    spec, _, data = _ml_dataset(7, per_period=200)
    wrong = GofModel(np.array([[2.0, 0.0], [-2.0, 0.0]]), None, 0.5, 0.5, False)
    assert gof_pvalue(wrong, data, spec, n_rep=300, rng=np.random.default_rng(8)) < 0.01


def test_gof_from_mle_fit_is_deterministic():
    spec, _, data = _ml_dataset(9)
    fit = MleEstimator().fit_ml(data, spec)
    a = gof_pvalue(fit, data, spec, n_rep=200, rng=np.random.default_rng(10))
    b = gof_pvalue(fit, data, spec, n_rep=200, rng=np.random.default_rng(10))
    assert a == b


def test_gof_switching_model(switching_data):
    spec, theta, data = switching_data
    model = GofModel(theta.beta0, theta.beta1, theta.p01, theta.p10, True)
    p_value = gof_pvalue(model, data.dataset, spec, n_rep=300, rng=np.random.default_rng(11))
    assert 0.0 <= p_value <= 1.0


def test_gof_sparse_data():
    data = Dataset.from_records(1, 2, [(1, 1, [1.0])])
    spec = ModelSpec.full(2, 1, switching=False, level=Inclusion.SHARED)
    with pytest.raises(SparseDataError):
        gof_pvalue(GofModel(np.zeros((1, 1)), np.zeros((1, 1)), 0.5, 0.5, False), data, spec,
                   n_rep=10, min_expected=5.0)


def test_exact_marginal_for_single_state(toy_dataset):
    spec = ModelSpec.full(3, 2, switching=False, level=Inclusion.SHARED)
    beta = np.array([[0.2, -0.1], [0.4, 0.3]])
    expected = float(np.sum(record_logliks(toy_dataset, beta)))
    assert exact_marginal_loglik(toy_dataset, spec, beta, beta, 0.1, 0.2) == pytest.approx(expected)
    # equal state coefficients: the state path does not matter
    assert enumerate_marginal_loglik(toy_dataset, beta, beta, 0.1, 0.2) == pytest.approx(expected, abs=1e-10)


def test_enumeration_limit():
    data = Dataset.from_records(21, 2, [(1, 1, [1.0])])
    with pytest.raises(ValueError):
        enumerate_marginal_loglik(data, np.zeros((1, 1)), np.zeros((1, 1)), 0.2, 0.3)


@pytest.mark.slow
def test_gof_calibration():
    rejections = []
    for seed in range(200):
        spec, _, data = _ml_dataset(1000 + seed, T=10, per_period=30)
        fit = MleEstimator().fit_ml(data, spec)
        rejections.append(gof_pvalue(fit, data, spec, n_rep=1000, rng=np.random.default_rng(seed)) < 0.05)
    assert 0.01 <= np.mean(rejections) <= 0.12


def test_gof_rejects_ml_fit_of_switching_data(switching_data):
    spec, _, data = switching_data
    single = spec.as_single_state()
    fit = MleEstimator().fit_ml(data.dataset, single)
    assert gof_pvalue(fit, data.dataset, single, n_rep=300, rng=np.random.default_rng(15)) < 0.01


def test_distant_chains_give_huge_psrf():
    rng = np.random.default_rng(12)
    chains = np.vstack([rng.standard_normal(1000), 100.0 + rng.standard_normal(1000)])
    assert psrf(chains) > 10.0


def test_stuck_chains():
    assert psrf([[1.0, 1.0], [1.0, 1.0]]) == 1.0
    assert psrf([[1.0, 1.0], [2.0, 2.0]]) == float('inf')


def test_psrf_invariant_to_shift_and_scale():
    chains = np.random.default_rng(13).standard_normal((3, 300)) + np.array([[0.0], [0.2], [0.5]])
    assert psrf(chains + 7.0) == pytest.approx(psrf(chains), rel=1e-10)
    assert psrf(chains * -3.0) == pytest.approx(psrf(chains), rel=1e-10)


def test_mpsrf_one_dimension_matches_scalar_formula():
    chains = np.random.default_rng(14).standard_normal((4, 400)) + np.array([[0.0], [0.1], [0.3], [0.0]])
    m, n = chains.shape
    scalar = psrf(chains) ** 2 - (n - 1) / n
    joint = mpsrf(chains[:, :, None]) ** 2 - (n - 1) / n
    assert joint == pytest.approx((m + 1) / m * scalar, rel=1e-8)


def test_mpsrf_identical_chains():
    chain = np.random.default_rng(15).standard_normal((300, 2))
    chains = np.stack([chain, chain])
    assert mpsrf(chains) == pytest.approx(math.sqrt(299 / 300), abs=1e-12)


def test_exact_marginal_single_period_mixture():
    data = Dataset.from_records(1, 2, [(1, 1, [1.0]), (1, 2, [1.0])])
    spec = ModelSpec.full(2, 1, switching=True)
    beta0, beta1 = np.array([[0.0]]), np.array([[math.log(3.0)]])
    pbar0, pbar1 = stationary_probs(0.2, 0.6)
    by_hand = math.log(pbar0 * 0.25 + pbar1 * (0.75 * 0.25))
    assert exact_marginal_loglik(data, spec, beta0, beta1, 0.2, 0.6) == pytest.approx(by_hand, abs=1e-12)
