from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from app.core.exceptions import DomainError


ArrayLike = Union[float, np.ndarray]


class ModelKind(str, Enum):
    VASICEK = "vasicek"
    CIR = "cir"


@dataclass(frozen=True)
class VasicekParams:
    """
    Vasicek coefficients dX = (theta + beta X) dt + sqrt(a) dW.

    Fields may be arrays (one entry per path) as long as they broadcast
    against the time arguments of the Riccati functions.
    """
    a: ArrayLike
    beta: ArrayLike

    def __post_init__(self):
        if np.any(np.asarray(self.a) < 0):
            raise DomainError(f"Vasicek volatility level must be >= 0, got {self.a}")
        if np.any(np.asarray(self.beta) >= 0):
            raise DomainError(f"mean-reversion speed beta must be < 0, got {self.beta}")

    @property
    def kind(self) -> ModelKind:
        return ModelKind.VASICEK

    @property
    def level(self) -> ArrayLike:
        return self.a


@dataclass(frozen=True)
class CirParams:
    """CIR coefficients dX = (theta + beta X) dt + sqrt(alpha X) dW"""
    alpha: ArrayLike
    beta: ArrayLike

    def __post_init__(self):
        if np.any(np.asarray(self.alpha) <= 0):
            raise DomainError(f"CIR volatility coefficient alpha must be > 0, got {self.alpha}")
        if np.any(np.asarray(self.beta) >= 0):
            raise DomainError(f"mean-reversion speed beta must be < 0, got {self.beta}")

    @property
    def gamma(self) -> ArrayLike:
        return np.sqrt(np.square(self.beta) + 2.0 * np.asarray(self.alpha))

    @property
    def kind(self) -> ModelKind:
        return ModelKind.CIR

    @property
    def level(self) -> ArrayLike:
        return self.alpha


ModelParams = Union[VasicekParams, CirParams]


def make_params(kind: ModelKind, level: ArrayLike, beta: ArrayLike) -> ModelParams:
    if ModelKind(kind) is ModelKind.VASICEK:
        return VasicekParams(a=level, beta=beta)
    return CirParams(alpha=level, beta=beta)


@dataclass(frozen=True)
class RiccatiPair:
    """
    Riccati functions at time(s) t.

    psi_prime(0) = -1 and phi(0) = psi(0) = 0 for both models. phi_prime and
    phi_second are F(psi) and its t-derivative.
    """
    phi: ArrayLike
    phi_prime: ArrayLike
    phi_second: ArrayLike
    psi: ArrayLike
    psi_prime: ArrayLike
    psi_second: ArrayLike
