from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings
from app.models.curves import ForwardCurve, TimeGrid
from app.models.params import ModelKind
from app.models.processes import ParamProcessSpec


def required_nodes(delta: float, n_steps: int, maturities: Tuple[float, ...] = ()) -> int:
    """Grid nodes an initial curve needs for n_steps steps plus the reported maturities"""
    longest = max(maturities, default=0.0)
    return n_steps + int(np.ceil(longest / delta - 1e-9)) + 2


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model: ModelKind = ModelKind.VASICEK
    delta: float = Field(default=settings.DELTA, gt=0)
    n_steps: int = Field(ge=0)
    n_paths: int = Field(ge=1)
    param_spec: ParamProcessSpec
    seed: int = settings.SEED
    # checked by instance in the validator below
    initial_curve: Any
    report_maturities: Tuple[float, ...] = ()
    block_size: int = Field(default=settings.BLOCK_SIZE, ge=1)
    threads: int = Field(default=settings.THREADS, ge=1)
    clamp_theta: bool = False
    noise_substeps: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_consistency(self) -> "SimConfig":
        if not isinstance(self.initial_curve, ForwardCurve):
            raise ValueError("initial_curve must be a ForwardCurve")
        problems = []
        if self.param_spec.model is not self.model:
            problems.append(
                f"parameter process is for {self.param_spec.model.value}, model is {self.model.value}"
            )
        if not np.isclose(self.initial_curve.grid.step, self.delta, rtol=1e-9, atol=0.0):
            problems.append(
                f"initial curve step {self.initial_curve.grid.step} differs from delta {self.delta}"
            )
        if any(tau <= 0 for tau in self.report_maturities):
            problems.append("report maturities must be positive")
        needed = required_nodes(self.delta, self.n_steps, self.report_maturities)
        if self.initial_curve.grid.count < needed:
            problems.append(
                f"initial curve has {self.initial_curve.grid.count} nodes, "
                f"horizon plus longest maturity needs {needed}"
            )
        if self.model is ModelKind.CIR and self.initial_curve.values[0] < 0:
            problems.append("CIR short rate must be nonnegative")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def horizon(self) -> float:
        return self.n_steps * self.delta

    def times(self) -> np.ndarray:
        return self.delta * np.arange(self.n_steps + 1, dtype=float)


@dataclass
class CrcState:
    """
    State of a block of paths sharing one grid.

    h and dh hold the forward curve and its tau-derivative per path (rows),
    x the factor (= short rate = h[:, 0]), y the coefficient rows (level, beta).
    The curves lose one node per step.
    """
    model: ModelKind
    step: float
    h: np.ndarray
    dh: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta_head: np.ndarray
    n: int = 0
    t: float = 0.0
    rejected: np.ndarray = field(default=None)
    rejection_step: np.ndarray = field(default=None)
    rejection_theta: np.ndarray = field(default=None)
    path_offset: int = 0

    def __post_init__(self):
        n_paths = self.h.shape[0]
        if self.rejected is None:
            self.rejected = np.zeros(n_paths, dtype=bool)
        if self.rejection_step is None:
            self.rejection_step = np.full(n_paths, -1, dtype=np.int64)
        if self.rejection_theta is None:
            self.rejection_theta = np.full(n_paths, np.nan)

    @classmethod
    def initial(
        cls,
        model: ModelKind,
        curve: ForwardCurve,
        y0: np.ndarray,
        n_paths: int,
        path_offset: int = 0,
    ) -> "CrcState":
        h = np.tile(curve.values, (n_paths, 1))
        dh = np.tile(curve.deriv_values, (n_paths, 1))
        return cls(
            model=ModelKind(model),
            step=curve.grid.step,
            h=h,
            dh=dh,
            x=h[:, 0].copy(),
            y=np.tile(np.asarray(y0, dtype=float), (n_paths, 1)),
            theta_head=np.full((n_paths, 2), np.nan),
            path_offset=path_offset,
        )

    @classmethod
    def single(cls, model: ModelKind, curve: ForwardCurve, y0: np.ndarray) -> "CrcState":
        return cls.initial(model, curve, y0, 1)

    @property
    def n_paths(self) -> int:
        return self.h.shape[0]

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.step, self.h.shape[1])

    def curve(self, path: int = 0) -> ForwardCurve:
        return ForwardCurve(self.grid, self.h[path].copy(), self.dh[path].copy())

    def alive(self) -> np.ndarray:
        return ~self.rejected

    def first_rejection(self) -> Optional[int]:
        hits = np.flatnonzero(self.rejected)
        return int(hits[0]) if hits.size else None
