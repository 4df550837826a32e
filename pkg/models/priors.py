from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class PriorSpec:
    """Independent N(0, sigma_beta^2) on free betas; Beta(a, b) on p01 and
    p10 truncated to p01 <= p10; Markov prior on S with a stationary start."""
    sigma_beta: float = 100.0
    transition_a: float = 1.0
    transition_b: float = 1.0

    def __post_init__(self):
        if self.sigma_beta <= 0:
            raise ValueError(f"sigma_beta must be positive, got {self.sigma_beta}")
        if self.transition_a <= 0 or self.transition_b <= 0:
            raise ValueError("Beta prior parameters must be positive")


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 4
    n_burnin: int = 2000
    n_keep: int = 2000
    thinning: int = 1
    initial_step: float = 0.1
    target_acceptance: float = 0.3
    acceptance_band: Tuple[float, float] = (0.1, 0.6)
    parallel_chains: bool = False
    seed: Optional[int] = 20090401

    def __post_init__(self):
        for name in ('n_chains', 'n_burnin', 'n_keep'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.thinning < 1:
            raise ValueError(f"thinning must be at least 1, got {self.thinning}")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must lie in (0, 1)")
