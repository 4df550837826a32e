from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from models.mle_fit import MleConfig
from models.priors import McmcConfig, PriorSpec

COVARIATE_ROLES = ('dummy', 'quantitative')
WEATHER_TRANSFORMS = ('mean', 'threshold', 'visibility', 'fog_frost', 'fog', 'frost')


@dataclass(frozen=True)
class DatasetSchema:
    """How a dataset CSV maps onto a Dataset: outcome labels in index
    order (last one is the base category) and covariate roles"""
    outcome_labels: Tuple[str, ...] = ('fatality', 'injury', 'pdo')
    covariates: Dict[str, str] = field(default_factory=dict)
    n_periods: Optional[int] = None
    path: Optional[str] = None

    def __post_init__(self):
        if len(self.outcome_labels) < 2:
            raise ValueError("at least two outcome labels are required")
        if len(set(self.outcome_labels)) != len(self.outcome_labels):
            raise ValueError(f"duplicate outcome labels: {list(self.outcome_labels)}")
        bad = {k: v for k, v in self.covariates.items() if v not in COVARIATE_ROLES}
        if bad:
            raise ValueError(f"unknown covariate roles {bad}; expected one of {COVARIATE_ROLES}")
        if self.n_periods is not None and self.n_periods < 1:
            raise ValueError("n_periods must be positive")

    @property
    def covariate_columns(self) -> Tuple[str, ...]:
        return tuple(self.covariates)

    def label_index(self) -> Dict[str, int]:
        """Outcome label -> 1-based index"""
        return {label: i + 1 for i, label in enumerate(self.outcome_labels)}


@dataclass(frozen=True)
class WeatherSource:
    """Dated weather observations reduced to one value per week.

    ``mean`` averages ``column``; ``threshold`` gives the share of
    observations above ``threshold``; ``visibility`` the floored harmonic
    mean; ``fog_frost``/``fog``/``frost`` the share of hours flagged from
    ``air_temp`` and ``dewpoint`` columns.
    """
    path: str
    transform: str = 'mean'
    column: Optional[str] = None
    threshold: float = 0.0

    def __post_init__(self):
        if self.transform not in WEATHER_TRANSFORMS:
            raise ValueError(f"unknown weather transform {self.transform!r}; expected one of {WEATHER_TRANSFORMS}")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSchema = field(default_factory=DatasetSchema)
    candidate_covariates: Optional[Tuple[str, ...]] = None
    switching: bool = True
    mle: MleConfig = field(default_factory=MleConfig)
    priors: PriorSpec = field(default_factory=PriorSpec)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    restriction_levels: Tuple[float, ...] = (0.60, 0.85, 0.95)
    max_refits_per_pass: int = 3
    n_bootstrap: int = 1000
    gof_n_rep: int = 10000
    gof_min_expected: float = 1.0
    first_week_start: Optional[str] = None
    external_series: Dict[str, str] = field(default_factory=dict)
    preprocess: Dict[str, WeatherSource] = field(default_factory=dict)
    significant_digits: int = 6
    level: float = 0.95

    def __post_init__(self):
        if list(self.restriction_levels) != sorted(self.restriction_levels):
            raise ValueError("restriction levels must be increasing")
        if any(not 0.0 < a < 1.0 for a in self.restriction_levels):
            raise ValueError("restriction levels must lie in (0, 1)")
        if not 0.0 < self.level < 1.0:
            raise ValueError("report level must lie in (0, 1)")
        if self.gof_n_rep < 1 or self.n_bootstrap < 1:
            raise ValueError("gof n_rep and marginal n_bootstrap must be positive")
        if self.significant_digits < 1:
            raise ValueError("significant_digits must be positive")
        if self.preprocess and not self.first_week_start:
            raise ValueError("correlation.preprocess needs correlation.first_week_start")
