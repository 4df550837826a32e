from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple


@dataclass(frozen=True)
class MarginalLik:
    log_ml: float
    ci95: Tuple[float, float]
    n_draws: int


@dataclass
class ParameterRow:
    parameter: str
    outcome: str
    covariate: str
    state: str
    estimate: float
    lower: float
    upper: float
    se: Optional[float] = None


@dataclass
class FitReport:
    """Everything reported for one fitted model"""
    model: str
    method: str
    K: int
    parameters: List[ParameterRow] = field(default_factory=list)
    loglik: Optional[float] = None
    aic: Optional[float] = None
    max_loglik: Optional[float] = None
    marginal: Optional[MarginalLik] = None
    gof_pvalue: Optional[float] = None
    psrf: Dict[str, float] = field(default_factory=dict)
    mpsrf: Optional[float] = None
    acceptance: Dict[str, float] = field(default_factory=dict)
    stationary: Optional[Dict[str, Any]] = None
    averaged_outcome_probs: Optional[Dict[str, List[float]]] = None
    outcome: Optional[str] = None
    spec: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop('parameters')
        return data
