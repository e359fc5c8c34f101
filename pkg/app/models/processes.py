from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import ConfigError
from app.models.params import ModelKind, ModelParams, make_params


class ParamProcessKind(str, Enum):
    CONSTANT = "constant"
    RAMP = "ramp"
    CIR = "cir"
    GBM = "gbm"


class ParamProcessSpec(BaseModel):
    """
    Law of the coefficient process Y(t) = (level(t), beta(t)).

    level is a (Vasicek) or alpha (CIR). The kinds are
      constant: level and beta frozen at (level0, beta0)
      ramp:     level(t) = level0 * (ramp_start + ramp_slope * t), beta frozen
      cir:      d level = (cir_m + cir_mu * level) dt + cir_sigma sqrt(level) dW~, beta frozen
      gbm:      -beta and level follow independent geometric Brownian motions
    """
    model_config = ConfigDict(frozen=True)

    kind: ParamProcessKind = ParamProcessKind.CONSTANT
    model: ModelKind = ModelKind.VASICEK
    level0: float = Field(ge=0)
    beta0: float = Field(lt=0)

    ramp_start: float = 1.0
    ramp_slope: float = 3.0

    cir_m: Optional[float] = None
    cir_mu: Optional[float] = None
    cir_sigma: Optional[float] = None

    gbm_mu1: float = 0.0
    gbm_sigma1: float = Field(default=0.0, ge=0)
    gbm_mu2: float = 0.0
    gbm_sigma2: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def check_kind_fields(self) -> "ParamProcessSpec":
        problems = []
        if self.model is ModelKind.CIR and self.level0 <= 0:
            problems.append("CIR volatility coefficient level0 must be > 0")
        if self.kind is ParamProcessKind.CIR:
            if self.cir_m is None or self.cir_mu is None or self.cir_sigma is None:
                problems.append("cir parameter process needs cir_m, cir_mu and cir_sigma")
            else:
                if self.cir_m < 0:
                    problems.append(f"cir_m must be >= 0, got {self.cir_m}")
                if self.cir_mu > 0:
                    problems.append(f"cir_mu must be <= 0, got {self.cir_mu}")
                if self.cir_sigma < 0:
                    problems.append(f"cir_sigma must be >= 0, got {self.cir_sigma}")
        if self.kind is ParamProcessKind.RAMP and self.ramp_start <= 0:
            problems.append("ramp_start must be > 0")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def is_deterministic(self) -> bool:
        return self.kind in (ParamProcessKind.CONSTANT, ParamProcessKind.RAMP)

    def initial_state(self) -> np.ndarray:
        """Coefficient vector (level, beta) at t = 0"""
        level = self.level0
        if self.kind is ParamProcessKind.RAMP:
            level = self.level0 * self.ramp_start
        return np.array([level, self.beta0], dtype=float)

    def params_for(self, y: np.ndarray) -> ModelParams:
        """Model parameters for coefficient rows y[..., 0] = level, y[..., 1] = beta"""
        y = np.asarray(y, dtype=float)
        try:
            return make_params(self.model, y[..., 0], y[..., 1])
        except ValueError as e:
            raise ConfigError(f"parameter state outside the {self.model.value} domain: {e}") from e

    @classmethod
    def preset(cls, name: str, level0: float, beta0: float, **overrides) -> "ParamProcessSpec":
        """
        Named parameter-process models.

        vasicek-v1..v4 and cir-1..4: constant, ramp Y = 1 + 3t, mean-reverting
        CIR level with m = 4 level0 and mu = -1, GBM pair.
        """
        key = name.lower()
        if key.startswith("vasicek-v"):
            model, number = ModelKind.VASICEK, key[len("vasicek-v"):]
            cir_sigma = 3e-3
        elif key.startswith("cir-"):
            model, number = ModelKind.CIR, key[len("cir-"):]
            cir_sigma = 5e-2
        else:
            raise ConfigError(f"unknown parameter-process preset {name!r}")

        fields = dict(model=model, level0=level0, beta0=beta0)
        if number == "1":
            fields["kind"] = ParamProcessKind.CONSTANT
        elif number == "2":
            fields["kind"] = ParamProcessKind.RAMP
        elif number == "3":
            fields.update(kind=ParamProcessKind.CIR, cir_m=4.0 * level0, cir_mu=-1.0, cir_sigma=cir_sigma)
        elif number == "4":
            fields.update(kind=ParamProcessKind.GBM, gbm_sigma1=0.3, gbm_sigma2=0.5)
        else:
            raise ConfigError(f"unknown parameter-process preset {name!r}")
        fields.update(overrides)
        return cls(**fields)
