from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import OrderingError, RangeError, ShapeError, ValidationError
from app.models.curves import YieldCurve


def maturity_label(tau: float) -> str:
    return f"tau_{tau:g}"


@dataclass
class YieldPanel:
    """
    Yield time series r(t_n, tau_i).

    frame has a DatetimeIndex named "date" and one float column per
    maturity (column labels are the maturities in years). Consecutive rows
    are delta apart in model time; calendar gaps are ignored.
    """
    frame: pd.DataFrame
    delta: float = settings.DELTA

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError(f"panel step must be positive, got {self.delta}")
        frame = self.frame.copy()
        frame.columns = pd.Index([float(c) for c in frame.columns])
        if not isinstance(frame.index, pd.DatetimeIndex):
            frame.index = pd.DatetimeIndex(frame.index)
        frame.index.name = "date"
        maturities = frame.columns.to_numpy()
        if maturities.size == 0 or np.any(maturities <= 0) or np.any(np.diff(maturities) <= 0):
            raise ValidationError("panel maturities must be positive and strictly increasing")
        if not frame.index.is_monotonic_increasing or frame.index.has_duplicates:
            raise OrderingError("panel dates must be strictly increasing")
        self.frame = frame.astype(float)

    @classmethod
    def from_arrays(
        cls,
        dates: Sequence,
        maturities: Sequence[float],
        yields: np.ndarray,
        delta: float = settings.DELTA,
    ) -> "YieldPanel":
        yields = np.asarray(yields, dtype=float)
        if yields.shape != (len(dates), len(maturities)):
            raise ShapeError(
                f"yield matrix {yields.shape} does not match {len(dates)} dates x {len(maturities)} maturities"
            )
        frame = pd.DataFrame(yields, index=pd.DatetimeIndex(dates, name="date"), columns=list(maturities))
        return cls(frame, delta)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def maturities(self) -> np.ndarray:
        return self.frame.columns.to_numpy(dtype=float)

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy()

    @property
    def n_dates(self) -> int:
        return len(self.frame)

    @property
    def n_maturities(self) -> int:
        return self.frame.shape[1]

    def maturity_index(self, tau: float) -> int:
        hits = np.flatnonzero(np.isclose(self.maturities, tau, rtol=0.0, atol=1e-9))
        if hits.size == 0:
            raise RangeError(f"maturity {tau} not in panel (have {self.maturities.tolist()})")
        return int(hits[0])

    def column(self, tau: float) -> pd.Series:
        return self.frame.iloc[:, self.maturity_index(tau)]

    def increments(self) -> pd.DataFrame:
        """Row-to-row yield changes; row n holds r(t_n) - r(t_{n-1}), row 0 is NaN"""
        return self.frame.diff()

    def curve_at(self, t_index: int) -> YieldCurve:
        if not 0 <= t_index < self.n_dates:
            raise RangeError(f"date index {t_index} outside [0, {self.n_dates})")
        row = self.values[t_index]
        keep = np.isfinite(row)
        return YieldCurve(self.maturities[keep], row[keep])

    def date_index(self, date) -> int:
        stamp = pd.Timestamp(date)
        hits = np.flatnonzero(self.dates == stamp)
        if hits.size == 0:
            raise RangeError(f"date {stamp.date()} not in panel")
        return int(hits[0])
