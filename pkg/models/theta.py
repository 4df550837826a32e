from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.errors import ShapeMismatchError
from models.model_spec import Inclusion, ModelSpec


@dataclass(frozen=True, eq=False)
class Theta:
    beta0: np.ndarray
    beta1: np.ndarray
    p01: float
    p10: float
    S: np.ndarray

    def __post_init__(self):
        for name in ('beta0', 'beta1'):
            array = np.array(getattr(self, name), dtype=float, copy=True)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        S = np.array(self.S, dtype=np.int8, copy=True).reshape(-1)
        S.setflags(write=False)
        object.__setattr__(self, 'S', S)
        object.__setattr__(self, 'p01', float(self.p01))
        object.__setattr__(self, 'p10', float(self.p10))

    @classmethod
    def single_state(cls, beta: np.ndarray, T: int) -> 'Theta':
        """ML parameters: both states share beta, S all zeros"""
        return cls(beta0=beta, beta1=beta, p01=0.5, p10=0.5, S=np.zeros(T, dtype=np.int8))

    def beta(self, state: int) -> np.ndarray:
        return self.beta1 if state == 1 else self.beta0

    def replace(self, beta0: Optional[np.ndarray] = None, beta1: Optional[np.ndarray] = None,
                p01: Optional[float] = None, p10: Optional[float] = None,
                S: Optional[np.ndarray] = None) -> 'Theta':
        return Theta(beta0=self.beta0 if beta0 is None else beta0,
                     beta1=self.beta1 if beta1 is None else beta1,
                     p01=self.p01 if p01 is None else p01,
                     p10=self.p10 if p10 is None else p10,
                     S=self.S if S is None else S)

    def validate(self, spec: ModelSpec, T: Optional[int] = None):
        """Raise if inconsistent with spec (shape, masking, sharing, p01 <= p10)"""
        shape = spec.mask.shape
        if self.beta0.shape != shape or self.beta1.shape != shape:
            raise ShapeMismatchError(
                f"beta shapes {self.beta0.shape}/{self.beta1.shape} do not match spec {shape}")
        excluded = spec.mask == Inclusion.EXCLUDED
        if np.any(self.beta0[excluded] != 0.0) or np.any(self.beta1[excluded] != 0.0):
            raise ValueError("excluded coefficients must be exactly zero")
        shared = spec.mask == Inclusion.SHARED
        if not spec.switching:
            shared = ~excluded
        if np.any(self.beta0[shared] != self.beta1[shared]):
            raise ValueError("shared coefficients must be equal across states")
        if spec.switching:
            if not (0.0 <= self.p01 <= 1.0 and 0.0 <= self.p10 <= 1.0):
                raise ValueError(f"transition probabilities outside [0,1]: {self.p01}, {self.p10}")
            if self.p01 > self.p10:
                raise ValueError(f"label restriction p01 <= p10 violated: {self.p01} > {self.p10}")
        if T is not None and self.S.shape[0] != T:
            raise ShapeMismatchError(f"state vector has length {self.S.shape[0]}, expected T={T}")
        if np.any((self.S != 0) & (self.S != 1)):
            raise ValueError("states must be 0 or 1")
