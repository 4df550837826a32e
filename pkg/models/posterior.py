from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from models.errors import ShapeMismatchError
from models.model_spec import Inclusion, ModelSpec
from models.theta import Theta


class ParameterKey(NamedTuple):
    """A continuous parameter: kind 'beta' with (i, d, state) or 'p01'/'p10'.
    state is None for coefficients shared across states (and for ML)."""
    kind: str
    i: int = -1
    d: int = -1
    state: Optional[int] = None

    def label(self, covariate_names: Sequence[str], outcome_labels: Sequence[str]) -> str:
        if self.kind != 'beta':
            return self.kind
        prefix = 'beta' if self.state is None else f"beta{self.state}"
        return f"{prefix}[{outcome_labels[self.i]},{covariate_names[self.d]}]"


def parameter_keys(spec: ModelSpec) -> List[ParameterKey]:
    keys = []
    for i, d in spec.entries():
        if spec.switching and spec.mask[i, d] == Inclusion.SPECIFIC:
            keys.append(ParameterKey('beta', i, d, 0))
            keys.append(ParameterKey('beta', i, d, 1))
        else:
            keys.append(ParameterKey('beta', i, d, None))
    if spec.switching:
        keys.extend([ParameterKey('p01'), ParameterKey('p10')])
    return keys


@dataclass(frozen=True, eq=False)
class ChainDraws:
    """Kept (post burn-in, thinned) draws of one chain"""
    beta0: np.ndarray
    beta1: np.ndarray
    p01: np.ndarray
    p10: np.ndarray
    S: np.ndarray
    loglik: np.ndarray
    acceptance: Dict[str, float] = field(default_factory=dict)
    step_scales: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.loglik.shape[0]

    def values(self, key: ParameterKey) -> np.ndarray:
        if key.kind == 'p01':
            return self.p01
        if key.kind == 'p10':
            return self.p10
        source = self.beta1 if key.state == 1 else self.beta0
        return source[:, key.i, key.d]


@dataclass(frozen=True, eq=False)
class PosteriorSample:
    spec: ModelSpec
    chains: Tuple[ChainDraws, ...]
    covariate_names: Tuple[str, ...] = ()
    outcome_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'chains', tuple(self.chains))
        if not self.covariate_names:
            object.__setattr__(self, 'covariate_names', tuple(f"x{d}" for d in range(self.spec.D)))
        if not self.outcome_labels:
            object.__setattr__(self, 'outcome_labels', tuple(str(i) for i in range(1, self.spec.I + 1)))

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_pooled(self) -> int:
        return sum(len(chain) for chain in self.chains)

    @property
    def T(self) -> int:
        return self.chains[0].S.shape[1] if self.chains else 0

    def pooled(self, name: str) -> np.ndarray:
        return np.concatenate([getattr(chain, name) for chain in self.chains], axis=0)

    def keys(self) -> List[ParameterKey]:
        return parameter_keys(self.spec)

    def label(self, key: ParameterKey) -> str:
        return key.label(self.covariate_names, self.outcome_labels)

    def pooled_values(self, key: ParameterKey) -> np.ndarray:
        return np.concatenate([chain.values(key) for chain in self.chains])

    def continuous_draws(self) -> Tuple[List[ParameterKey], np.ndarray]:
        """Keys and draws of all continuous parameters, shape (chains, n, p)"""
        keys = self.keys()
        lengths = {len(chain) for chain in self.chains}
        if len(lengths) != 1:
            raise ShapeMismatchError(f"chains have unequal lengths {sorted(lengths)}")
        stacked = np.stack([np.column_stack([chain.values(key) for key in keys])
                            for chain in self.chains])
        return keys, stacked

    def theta(self, chain: int, j: int) -> Theta:
        draws = self.chains[chain]
        return Theta(beta0=draws.beta0[j], beta1=draws.beta1[j],
                     p01=draws.p01[j], p10=draws.p10[j], S=draws.S[j])

    def posterior_mean_betas(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.pooled('beta0').mean(axis=0), self.pooled('beta1').mean(axis=0)

    def posterior_mean_transitions(self) -> Tuple[float, float]:
        return float(np.mean(self.pooled('p01'))), float(np.mean(self.pooled('p10')))

    def max_loglik(self) -> float:
        """Maximum log-likelihood observed across kept draws"""
        return float(np.max(self.pooled('loglik')))

    def acceptance_rates(self) -> Dict[str, float]:
        """Per-block acceptance averaged over chains"""
        blocks = sorted({name for chain in self.chains for name in chain.acceptance})
        return {name: float(np.mean([chain.acceptance[name] for chain in self.chains
                                     if name in chain.acceptance]))
                for name in blocks}

    def equals(self, other: 'PosteriorSample') -> bool:
        if not self.spec.equals(other.spec) or self.n_chains != other.n_chains:
            return False
        names = ('beta0', 'beta1', 'p01', 'p10', 'S', 'loglik')
        return all(np.array_equal(getattr(a, name), getattr(b, name), equal_nan=name in ('p01', 'p10'))
                   for a, b in zip(self.chains, other.chains) for name in names)


@dataclass(frozen=True)
class CredibleInterval:
    level: float
    lower: float
    upper: float
    mean: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True, eq=False)
class StateSeries:
    """Posterior P(s_t=1|Y) and std of s_t for t = 1..T"""
    prob: np.ndarray
    std: np.ndarray
    label: str = ''

    @property
    def T(self) -> int:
        return self.prob.shape[0]
