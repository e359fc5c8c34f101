from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import RangeError, ShapeError, ValidationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time-to-maturity grid tau_n = n * step, n = 0..count-1"""
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError(f"grid step must be positive, got {self.step}")
        if self.count < 2:
            raise ValidationError(f"grid needs at least 2 nodes, got {self.count}")

    @property
    def nodes(self) -> np.ndarray:
        return self.step * np.arange(self.count, dtype=float)

    @property
    def horizon(self) -> float:
        return self.step * (self.count - 1)

    def covering(self, horizon: float) -> "TimeGrid":
        """Grid with the same step whose last node is at or beyond horizon"""
        return TimeGrid(self.step, int(np.ceil(horizon / self.step - 1e-9)) + 1)

    def same_as(self, other: "TimeGrid") -> bool:
        return self.count == other.count and np.isclose(self.step, other.step, rtol=1e-12, atol=0.0)

    def truncated(self, count: int) -> "TimeGrid":
        if count > self.count:
            raise RangeError(f"cannot truncate a {self.count}-node grid to {count} nodes")
        return TimeGrid(self.step, count)


@dataclass(frozen=True)
class YieldCurve:
    maturities: np.ndarray
    yields: np.ndarray

    def __post_init__(self):
        maturities = np.asarray(self.maturities, dtype=float)
        yields = np.asarray(self.yields, dtype=float)
        if maturities.ndim != 1 or maturities.shape != yields.shape:
            raise ShapeError("maturities and yields must be 1-d arrays of equal length")
        if np.any(maturities <= 0) or np.any(np.diff(maturities) <= 0):
            raise ValidationError("maturities must be positive and strictly increasing")
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "yields", yields)

    def __len__(self) -> int:
        return len(self.maturities)


@dataclass(frozen=True)
class GridFunction:
    """A function sampled on a TimeGrid"""
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise ShapeError(f"expected {self.grid.count} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class HullWhiteExtension(GridFunction):
    """Time-dependent drift theta on a grid"""

    def __post_init__(self):
        super().__post_init__()
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("Hull-White extension must be finite")

    @property
    def is_admissible_cir(self) -> bool:
        return bool(np.all(self.values >= 0))


@dataclass(frozen=True)
class ForwardCurve:
    """Forward rates h(tau_n) plus their tau-derivative on the same grid"""
    grid: TimeGrid
    values: np.ndarray
    deriv_values: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        deriv = self.deriv_values
        if deriv is None:
            # second-order differences when no analytic derivative is known
            deriv = np.gradient(values, self.grid.step, edge_order=2)
        deriv = np.asarray(deriv, dtype=float)
        if values.shape != (self.grid.count,) or deriv.shape != (self.grid.count,):
            raise ShapeError(
                f"forward curve on {self.grid.count} nodes got values {values.shape}, "
                f"derivatives {deriv.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "deriv_values", deriv)

    @property
    def short_rate(self) -> float:
        return float(self.values[0])

    @classmethod
    def flat(cls, rate: float, grid: TimeGrid) -> "ForwardCurve":
        return cls(grid, np.full(grid.count, float(rate)), np.zeros(grid.count))
