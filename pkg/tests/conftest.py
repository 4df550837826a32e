import numpy as np
import pytest

from models.dataset import Dataset
from models.model_spec import Inclusion, ModelSpec
from models.priors import McmcConfig
from models.theta import Theta
from services.synthetic_service import CovariateColumn, generate

LABELS = ('fatality', 'injury', 'pdo')


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_dataset():
    """T=3, I=3, D=2 toy set with mixed outcomes in every period"""
    records = [
        (1, 1, [1.0, 0.5]),
        (1, 3, [1.0, -1.0]),
        (1, 2, [1.0, 2.0]),
        (2, 3, [1.0, 0.0]),
        (3, 2, [1.0, 1.5]),
        (3, 3, [1.0, -0.5]),
    ]
    return Dataset.from_records(3, 3, records, covariate_names=('intercept', 'wet'), outcome_labels=LABELS)


@pytest.fixture
def small_mcmc():
    return McmcConfig(n_chains=2, n_burnin=300, n_keep=300, thinning=1, seed=7)


def switching_truth(T: int):
    """Two clearly separated states on intercepts, shared slope"""
    beta0 = np.array([[-3.0, 0.5], [-0.5, 0.8]])
    beta1 = np.array([[-1.0, 0.5], [0.8, 0.8]])
    mask = np.array([[Inclusion.SPECIFIC, Inclusion.SHARED], [Inclusion.SPECIFIC, Inclusion.SHARED]])
    spec = ModelSpec(I=3, switching=True, mask=mask)
    theta = Theta(beta0=beta0, beta1=beta1, p01=0.1, p10=0.3, S=np.zeros(T, dtype=np.int8))
    return spec, theta


COVARIATES = [CovariateColumn('intercept', 'constant'), CovariateColumn('wet', 'uniform', low=-1.0, high=1.0)]


@pytest.fixture
def switching_data():
    spec, theta = switching_truth(60)
    data = generate(spec, theta, 60, 80, COVARIATES, np.random.default_rng(2024), outcome_labels=LABELS)
    return spec, theta.replace(S=data.S), data


@pytest.fixture
def ml_data():
    beta = np.array([[-2.0, 0.7], [0.3, -0.6]])
    spec = ModelSpec.full(3, 2, switching=False, level=Inclusion.SHARED)
    theta = Theta.single_state(beta, 40)
    data = generate(spec, theta, 40, 60, COVARIATES, np.random.default_rng(99), outcome_labels=LABELS)
    return spec, theta, data
