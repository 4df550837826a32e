import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from models.dataset import Dataset
from models.errors import DegenerateChainError, DimensionError
from models.model_spec import Inclusion, ModelSpec
from models.theta import Theta
from services.likelihood import (log_likelihood, log_outcome_probs, outcome_probs, period_logliks,
                                 stationary_probs)


def test_outcome_probs_uniform_for_zero_beta():
    assert_allclose(outcome_probs(np.zeros((2, 1)), [1.0]), [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_outcome_probs_log_coefficients():
    beta = np.array([[math.log(2.0)], [math.log(3.0)]])
    assert_allclose(outcome_probs(beta, [1.0]), [2 / 6, 3 / 6, 1 / 6], rtol=1e-12)


def test_outcome_probs_large_utilities_do_not_overflow():
    probs = outcome_probs(np.array([[4.0], [4.0]]), [250.0])
    assert np.all(np.isfinite(probs))
    assert_allclose(probs.sum(), 1.0, atol=1e-12)
    assert_allclose(probs, [0.5, 0.5, 0.0], atol=1e-300)


def test_outcome_probs_shift_invariance():
    rng = np.random.default_rng(3)
    beta, x = rng.normal(size=(3, 4)), rng.normal(size=4)
    utilities = np.append(beta @ x, 0.0) + 17.5
    direct = np.exp(utilities) / np.exp(utilities).sum()
    assert_allclose(outcome_probs(beta, x), direct, rtol=1e-12)


def test_outcome_probs_dimension_mismatch():
    with pytest.raises(DimensionError) as excinfo:
        outcome_probs(np.zeros((2, 3)), [1.0, 2.0])
    assert excinfo.value.expected == 3
    assert excinfo.value.actual == 2


@pytest.mark.parametrize('p01, p10, expected', [
    (0.5, 0.5, (0.5, 0.5)),
    (0.151, 0.330, (0.6861, 0.3139)),
    (0.0767, 0.613, (0.8888, 0.1112)),
])
def test_stationary_probs(p01, p10, expected):
    assert_allclose(stationary_probs(p01, p10), expected, atol=1e-4)


def test_stationary_probs_satisfy_balance_equations():
    for p01, p10 in [(0.151, 0.330), (0.02, 0.9), (0.4, 0.41)]:
        pbar0, pbar1 = stationary_probs(p01, p10)
        assert_allclose(pbar0, pbar0 * (1 - p01) + pbar1 * p10, atol=1e-12)
        assert_allclose(pbar1, pbar0 * p01 + pbar1 * (1 - p10), atol=1e-12)
        assert pbar0 + pbar1 == pytest.approx(1.0, abs=1e-15)
        assert pbar0 >= pbar1


def test_stationary_probs_degenerate_chain():
    with pytest.raises(DegenerateChainError):
        stationary_probs(0.0, 0.0)


def test_log_likelihood_single_bernoulli_term():
    data = Dataset.from_records(1, 2, [(1, 1, [1.0])])
    spec = ModelSpec.full(2, 1, switching=False, level=Inclusion.SHARED)
    theta = Theta.single_state(np.array([[math.log(3.0)]]), 1)
    assert log_likelihood(data, spec, theta) == pytest.approx(math.log(0.75), abs=1e-12)


def test_log_likelihood_uniform_emission(toy_dataset):
    spec = ModelSpec.full(3, 2, switching=False, level=Inclusion.SHARED)
    theta = Theta.single_state(np.zeros((2, 2)), 3)
    assert log_likelihood(toy_dataset, spec, theta) == pytest.approx(6 * math.log(1 / 3), abs=1e-12)


def test_log_likelihood_mixed_states_matches_naive_loop(toy_dataset):
    spec = ModelSpec.full(3, 2, switching=True)
    beta0 = np.array([[-1.0, 0.4], [0.2, -0.3]])
    beta1 = np.array([[0.5, 1.1], [-0.7, 0.9]])
    theta = Theta(beta0=beta0, beta1=beta1, p01=0.2, p10=0.6, S=[0, 1, 1])

    naive = 0.0
    for t, i, x in zip(toy_dataset.period, toy_dataset.outcome, toy_dataset.X):
        beta = beta1 if theta.S[t] == 1 else beta0
        naive += math.log(outcome_probs(beta, x)[i])
    assert log_likelihood(toy_dataset, spec, theta) == pytest.approx(naive, abs=1e-12)


def test_equal_state_coefficients_reduce_to_single_state(toy_dataset):
    beta = np.array([[-0.4, 0.3], [0.9, -1.2]])
    single = log_likelihood(toy_dataset, ModelSpec.full(3, 2, False, Inclusion.SHARED),
                            Theta.single_state(beta, 3))
    switching_spec = ModelSpec.full(3, 2, switching=True)
    for S in ([0, 0, 0], [1, 0, 1], [1, 1, 1]):
        theta = Theta(beta0=beta, beta1=beta, p01=0.3, p10=0.5, S=S)
        assert log_likelihood(toy_dataset, switching_spec, theta) == pytest.approx(single, abs=1e-12)


def test_log_likelihood_invariant_to_record_order(toy_dataset):
    spec = ModelSpec.full(3, 2, switching=True)
    theta = Theta(beta0=np.array([[0.1, 0.2], [0.3, 0.4]]), beta1=np.array([[-0.5, 0.6], [0.7, -0.8]]),
                  p01=0.2, p10=0.4, S=[1, 0, 1])
    order = np.random.default_rng(0).permutation(toy_dataset.n_records)
    shuffled = toy_dataset.subset(order)
    assert log_likelihood(shuffled, spec, theta) == pytest.approx(log_likelihood(toy_dataset, spec, theta),
                                                                  abs=1e-12)


def test_log_likelihood_impossible_outcome_is_negative_infinity():
    data = Dataset.from_records(1, 2, [(1, 2, [1.0])])
    spec = ModelSpec.full(2, 1, switching=False, level=Inclusion.SHARED)
    theta = Theta.single_state(np.array([[np.inf]]), 1)
    assert log_likelihood(data, spec, theta) == float('-inf')


def test_period_logliks_sum_per_period(toy_dataset):
    beta0 = np.zeros((2, 2))
    out = period_logliks(toy_dataset, beta0, beta0)
    assert_allclose(out[:, 0], np.array([3, 1, 2]) * math.log(1 / 3), atol=1e-12)
    assert_allclose(out[:, 0], out[:, 1])


def test_log_outcome_probs_rows_normalize():
    X = np.column_stack([np.ones(5), np.linspace(-3, 3, 5)])
    log_p = log_outcome_probs(np.array([[1.0, 2.0], [-1.0, 0.5]]), X)
    assert_allclose(np.exp(log_p).sum(axis=1), 1.0, atol=1e-12)
