from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.core.exceptions import RangeError
from app.models.params import ModelKind


@dataclass
class PathEnsemble:
    """
    Recorded paths of a simulation.

    Arrays are indexed [path, step] (and [path, step, maturity] for yields).
    Entries after a path's rejection step are NaN.
    """
    model: ModelKind
    times: np.ndarray
    short_rate: np.ndarray
    discount: np.ndarray
    yields: np.ndarray
    maturities: np.ndarray
    levels: np.ndarray
    betas: np.ndarray
    rejected: np.ndarray
    rejection_step: np.ndarray
    rejection_theta: np.ndarray
    seed: int = 0

    @property
    def n_paths(self) -> int:
        return self.short_rate.shape[0]

    @property
    def n_steps(self) -> int:
        return self.short_rate.shape[1] - 1

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.rejected))

    @property
    def survivors(self) -> np.ndarray:
        return ~self.rejected

    def step_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise RangeError(f"time {t} is not a recorded step")
        return idx

    def maturity_index(self, tau: float) -> int:
        hits = np.flatnonzero(np.isclose(self.maturities, tau, rtol=0.0, atol=1e-12))
        if hits.size == 0:
            raise RangeError(f"maturity {tau} was not recorded")
        return int(hits[0])

    def short_rate_at(self, t: float) -> np.ndarray:
        return self.short_rate[self.survivors, self.step_index(t)]

    def bond_prices_at(self, t: float, tau: float) -> np.ndarray:
        """P(t, t + tau) on surviving paths from the recorded yields"""
        n, k = self.step_index(t), self.maturity_index(tau)
        return np.exp(-tau * self.yields[self.survivors, n, k])

    def discounted_bond_at(self, t: float, maturity: float) -> np.ndarray:
        """P(t, T) / B(t) on surviving paths for calendar maturity T"""
        n = self.step_index(t)
        tau = maturity - self.times[n]
        prices = np.ones(int(self.survivors.sum())) if tau <= 1e-12 else self.bond_prices_at(t, tau)
        return prices / self.discount[self.survivors, n]

    def to_frame(self) -> pd.DataFrame:
        """Columnar view: one row per (path, step)"""
        n_paths, n_cols = self.short_rate.shape
        frame = pd.DataFrame({
            "path": np.repeat(np.arange(n_paths), n_cols),
            "step": np.tile(np.arange(n_cols), n_paths),
            "t": np.tile(self.times, n_paths),
            "r": self.short_rate.ravel(),
            "B": self.discount.ravel(),
        })
        for k, tau in enumerate(self.maturities):
            frame[f"r_{tau:g}"] = self.yields[:, :, k].ravel()
        frame["level"] = self.levels.ravel()
        frame["beta"] = self.betas.ravel()
        frame["rejected"] = np.repeat(self.rejected.astype(int), n_cols)
        return frame


@dataclass
class MgfEstimate:
    eta: float
    t: float
    estimate: float
    standard_error: float
    n_used: int
    n_rejected: int
    se_defined: bool = True


@dataclass
class MomentReport:
    t: float
    n_paths: int
    n_rejected: int
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    se_mean: float
    se_sd: float
    se_skewness: float
    se_excess_kurtosis: float
    skew_defined: bool = True
    se_valid: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "stat": ["mean", "sd", "skewness", "excess_kurtosis"],
            "value": [self.mean, self.sd, self.skewness, self.excess_kurtosis],
            "se": [self.se_mean, self.se_sd, self.se_skewness, self.se_excess_kurtosis],
        })


@dataclass
class ConvergenceReport:
    deltas: np.ndarray
    estimates: np.ndarray
    errors: np.ndarray
    standard_errors: np.ndarray
    noise_floor: np.ndarray
    slope: float
    intercept: float
    intercept_se: float
    reference: str
    oracle: Optional[float] = None
    eta: float = 0.0
    reliable: bool = True
    notes: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "delta": self.deltas,
            "estimate": self.estimates,
            "error": self.errors,
            "se": self.standard_errors,
            "noise_floor": self.noise_floor.astype(int),
        })

    def summary(self) -> Dict[str, object]:
        return {
            "eta": self.eta,
            "slope": self.slope,
            "intercept": self.intercept,
            "intercept_se": self.intercept_se,
            "reference": self.reference,
            "oracle": self.oracle,
            "reliable": self.reliable,
        }
