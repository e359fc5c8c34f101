from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import pytest

from app.models.curves import ForwardCurve, TimeGrid
from app.models.panel import YieldPanel
from app.models.params import CirParams, VasicekParams
from app.models.processes import ParamProcessSpec
from app.models.state import SimConfig, required_nodes
from app.repo import get_panel_repo
from app.services.affine import riccati

DELTA = 1.0 / 240.0

# 3 months to 30 years
PANEL_MATURITIES = (0.25, 0.5, 0.75) + tuple(float(y) for y in range(1, 31))


def flat_curve(rate: float, delta: float = DELTA, count: int = 2401) -> ForwardCurve:
    return ForwardCurve.flat(rate, TimeGrid(delta, count))


def stationary_curve(p, theta: float, x: float, grid: TimeGrid) -> ForwardCurve:
    """Analytic forward curve of the model with constant theta started at x"""
    rp = riccati(p, grid.nodes)
    values = -theta * rp.psi - rp.phi_prime - rp.psi_prime * x
    deriv = -theta * rp.psi_prime - rp.phi_second - rp.psi_second * x
    return ForwardCurve(grid, values, deriv)


def inverted_forwards(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """h = 0.02 - 0.03 tau exp(-tau): h'(0) = -0.03 drives the CIR drift negative at beta = -0.5"""
    values = 0.02 - 0.03 * tau * np.exp(-tau)
    deriv = -0.03 * (1.0 - tau) * np.exp(-tau)
    return values, deriv


def inverted_yields(tau: np.ndarray) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return 0.02 - 0.03 * (1.0 - (1.0 + tau) * np.exp(-tau)) / tau


def sim_config(
    preset: str,
    level: float,
    beta: float,
    n_steps: int,
    n_paths: int,
    curve: ForwardCurve | None = None,
    maturities: Sequence[float] = (),
    delta: float = DELTA,
    rate: float = 0.02,
    **kwargs,
) -> SimConfig:
    spec = ParamProcessSpec.preset(preset, level, beta)
    if curve is None:
        curve = flat_curve(rate, delta, required_nodes(delta, n_steps, tuple(maturities)))
    return SimConfig(
        model=spec.model,
        delta=delta,
        n_steps=n_steps,
        n_paths=n_paths,
        param_spec=spec,
        initial_curve=curve,
        report_maturities=tuple(maturities),
        **kwargs,
    )


def make_panel(values: np.ndarray, maturities: Sequence[float], delta: float = DELTA) -> YieldPanel:
    dates = pd.bdate_range("2020-01-01", periods=values.shape[0])
    return YieldPanel.from_arrays(dates, maturities, values, delta=delta)


@pytest.fixture
def vasicek_params() -> VasicekParams:
    return VasicekParams(a=1e-4, beta=-0.5)


@pytest.fixture
def cir_params() -> CirParams:
    return CirParams(alpha=5e-3, beta=-0.5)


@pytest.fixture
def inverted_curve() -> ForwardCurve:
    grid = TimeGrid(DELTA, 1201)
    values, deriv = inverted_forwards(grid.nodes)
    return ForwardCurve(grid, values, deriv)


@pytest.fixture
def inverted_panel_csv(tmp_path: Path) -> Path:
    """Two dates of the inverted curve over the standard maturities"""
    maturities = np.array(PANEL_MATURITIES)
    row = inverted_yields(maturities)
    panel = make_panel(np.vstack([row, row]), PANEL_MATURITIES)
    return get_panel_repo().write_yield_panel(panel, tmp_path / "inverted.csv")


@pytest.fixture
def flat_panel_csv(tmp_path: Path) -> Path:
    """150 dates of a noisy single-factor panel around 2%"""
    rng = np.random.default_rng(11)
    maturities = np.array(PANEL_MATURITIES)
    loading = (1.0 - np.exp(-0.5 * maturities)) / (0.5 * maturities)
    shocks = np.cumsum(rng.standard_normal(150)) * 6e-4
    values = 0.02 + np.outer(shocks, loading) + 1e-4 * np.log1p(maturities)
    panel = make_panel(values, PANEL_MATURITIES)
    return get_panel_repo().write_yield_panel(panel, tmp_path / "panel.csv")

