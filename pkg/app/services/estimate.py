"""
Rolling-window estimators from realized covariations of yields.

Row n of a panel holds the yields at t_n; the window ending at t_n uses the
M increments r(t_m) - r(t_{m-1}) for m = n-M+1..n, so t_n needs n >= M.
"""
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq, fsolve

from app.core.config import settings
from app.core.exceptions import (
    DomainError,
    EstimatorUndefinedError,
    InsufficientDataError,
    RangeError,
)
from app.core.logger import logger, log_error
from app.models.panel import YieldPanel
from app.models.params import CirParams, ModelKind, VasicekParams
from app.models.processes import ParamProcessKind, ParamProcessSpec
from app.services.affine import riccati

# log(-beta) search interval of the exact Vasicek fit
_LOG_SPEED_RANGE = (-12.0, 8.0)


def _check_window(panel: YieldPanel, t_index: int, M: int):
    if M < 1:
        raise RangeError(f"window length must be positive, got {M}")
    if t_index < M or t_index >= panel.n_dates:
        raise RangeError(
            f"window of {M} increments ending at row {t_index} needs {M} <= t_index < {panel.n_dates}"
        )


def realized_covariation(panel: YieldPanel, i: int, j: int, t_index: int, M: int) -> float:
    """Sum over the last M increments of dr(tau_i) * dr(tau_j); NaN if the window has gaps"""
    _check_window(panel, t_index, M)
    values = panel.values
    window = values[t_index - M: t_index + 1]
    inc = np.diff(window, axis=0)
    return float(np.sum(inc[:, i] * inc[:, j]))


def _rolling_sum(x: np.ndarray, M: int) -> np.ndarray:
    """Window sums aligned to the window's last row; the first M rows are NaN"""
    out = np.full(x.shape[0], np.nan)
    if x.shape[0] > M:
        out[M:] = sliding_window_view(x[1:], M).sum(axis=-1)
    return out


def _rolling_covariation(panel: YieldPanel, i: int, j: int, M: int) -> np.ndarray:
    inc = np.diff(panel.values, axis=0, prepend=np.nan)
    return _rolling_sum(inc[:, i] * inc[:, j], M)


def _loading(p, tau: float) -> np.ndarray:
    """Yield loading psi(tau) / tau of the factor"""
    return np.asarray(riccati(p, tau).psi, dtype=float) / tau


# -- Vasicek ------------------------------------------------------------------

def _vasicek_printed(qv1, qv2, tau2, delta, M):
    a_hat = qv1 / (delta * M)
    beta_hat = -(1.0 / tau2) * np.sqrt(delta * M * a_hat / qv2)
    return a_hat, beta_hat


def _vasicek_exact(qv1, qv2, tau1, tau2, delta, M, t_index=None):
    target = np.sqrt(qv2 / qv1)

    def ratio(log_speed):
        p = VasicekParams(a=1.0, beta=-np.exp(log_speed))
        return float(_loading(p, tau2) / _loading(p, tau1))

    lo, hi = _LOG_SPEED_RANGE
    f_lo, f_hi = ratio(lo) - target, ratio(hi) - target
    if f_lo * f_hi > 0:
        raise EstimatorUndefinedError(
            f"covariation ratio {target:.6g} outside ({tau1 / tau2:.6g}, 1)", t_index
        )
    beta = -np.exp(brentq(lambda s: ratio(s) - target, lo, hi, xtol=1e-14))
    loading1 = float(_loading(VasicekParams(a=1.0, beta=beta), tau1))
    return qv1 / (delta * M) / loading1 ** 2, beta


def estimate_vasicek_at(
    panel: YieldPanel,
    tau1: float,
    tau2: float,
    t_index: int,
    M: int,
    exact: bool = False,
) -> Tuple[float, float]:
    """
    (a_hat, beta_hat) for the window ending at t_index.

    The default estimators assume tau1 << 1 << tau2. exact solves the
    windowed covariation relations at tau1 and tau2 for (a, beta) instead.
    """
    i, j = panel.maturity_index(tau1), panel.maturity_index(tau2)
    qv1 = realized_covariation(panel, i, i, t_index, M)
    qv2 = realized_covariation(panel, j, j, t_index, M)
    if not np.isfinite(qv1) or not np.isfinite(qv2):
        raise EstimatorUndefinedError("missing values in estimation window", t_index)
    if qv1 <= 0 or qv2 <= 0:
        raise EstimatorUndefinedError(
            f"zero realized covariation (tau1: {qv1:.3g}, tau2: {qv2:.3g})", t_index
        )
    if exact:
        return _vasicek_exact(qv1, qv2, tau1, tau2, panel.delta, M, t_index)
    a_hat, beta_hat = _vasicek_printed(qv1, qv2, tau2, panel.delta, M)
    return float(a_hat), float(beta_hat)


# -- CIR ----------------------------------------------------------------------

def _cir_printed(qv1, qv2, level_sum, tau2, delta):
    alpha_hat = qv1 / (delta * level_sum)
    ratio = qv2 / (delta * level_sum)
    root = np.sqrt(alpha_hat)
    beta_hat = root / 2.0 * tau2 * np.sqrt(ratio) - root / tau2 / np.sqrt(ratio)
    return alpha_hat, beta_hat


def _cir_exact(qv1, qv2, level_sum, tau1, tau2, delta, start, t_index=None):
    targets = np.array([qv1, qv2]) / (delta * level_sum)

    def residual(z):
        p = CirParams(alpha=np.exp(z[0]), beta=-np.exp(z[1]))
        model = p.alpha * np.array([_loading(p, tau1) ** 2, _loading(p, tau2) ** 2])
        return np.log(model) - np.log(targets)

    alpha0, beta0 = start
    if not (alpha0 > 0 and beta0 < 0):
        alpha0, beta0 = targets[0], -1.0
    try:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            z, info, ier, msg = fsolve(
                residual, [np.log(alpha0), np.log(-beta0)], full_output=True, xtol=1e-12
            )
    except DomainError as e:
        raise EstimatorUndefinedError(f"exact CIR fit left the parameter domain: {e}", t_index) from e
    if ier != 1 or np.max(np.abs(info["fvec"])) > 1e-8:
        raise EstimatorUndefinedError(f"exact CIR fit did not converge: {msg}", t_index)
    return float(np.exp(z[0])), float(-np.exp(z[1]))


def estimate_cir_at(
    panel: YieldPanel,
    tau1: float,
    tau2: float,
    t_index: int,
    M: int,
    exact: bool = False,
) -> Tuple[float, float]:
    """(alpha_hat, beta_hat) for the window ending at t_index; tau1 yields proxy the short rate"""
    i, j = panel.maturity_index(tau1), panel.maturity_index(tau2)
    qv1 = realized_covariation(panel, i, i, t_index, M)
    qv2 = realized_covariation(panel, j, j, t_index, M)
    level_sum = float(np.sum(panel.values[t_index - M + 1: t_index + 1, i]))
    if not (np.isfinite(qv1) and np.isfinite(qv2) and np.isfinite(level_sum)):
        raise EstimatorUndefinedError("missing values in estimation window", t_index)
    if level_sum <= 0:
        raise EstimatorUndefinedError(f"nonpositive short-rate sum {level_sum:.3g}", t_index)
    if qv1 <= 0 or qv2 <= 0:
        raise EstimatorUndefinedError(
            f"zero realized covariation (tau1: {qv1:.3g}, tau2: {qv2:.3g})", t_index
        )
    alpha_hat, beta_hat = _cir_printed(qv1, qv2, level_sum, tau2, panel.delta)
    if exact:
        return _cir_exact(qv1, qv2, level_sum, tau1, tau2, panel.delta, (alpha_hat, beta_hat), t_index)
    if not beta_hat < 0:
        raise EstimatorUndefinedError(f"estimated beta {beta_hat:.6g} is not negative", t_index)
    return float(alpha_hat), float(beta_hat)


# -- series -------------------------------------------------------------------

def _estimate_series(
    panel: YieldPanel,
    model: ModelKind,
    tau1: float,
    tau2: float,
    M: int,
    exact: bool,
) -> pd.DataFrame:
    level_col = "a_hat" if model is ModelKind.VASICEK else "alpha_hat"
    logger.info(
        f"Estimating {model.value} parameters - dates: {panel.n_dates}, window: {M}, "
        f"tau1: {tau1}, tau2: {tau2}, exact: {exact}"
    )
    if panel.n_dates <= M:
        raise InsufficientDataError(f"panel has {panel.n_dates} dates, window needs more than {M}")
    try:
        i, j = panel.maturity_index(tau1), panel.maturity_index(tau2)
        qv1 = _rolling_covariation(panel, i, i, M)
        qv2 = _rolling_covariation(panel, j, j, M)
        rows = np.arange(M, panel.n_dates)
        qv1, qv2 = qv1[rows], qv2[rows]
        with np.errstate(divide="ignore", invalid="ignore"):
            if model is ModelKind.VASICEK:
                valid = np.isfinite(qv1) & np.isfinite(qv2) & (qv1 > 0) & (qv2 > 0)
                level, beta = _vasicek_printed(qv1, qv2, tau2, panel.delta, M)
            else:
                sums = _rolling_sum(panel.values[:, i], M)[rows]
                valid = (
                    np.isfinite(qv1) & np.isfinite(qv2) & np.isfinite(sums)
                    & (qv1 > 0) & (qv2 > 0) & (sums > 0)
                )
                level, beta = _cir_printed(qv1, qv2, sums, tau2, panel.delta)
                if not exact:
                    valid &= beta < 0
        level = np.where(valid, level, np.nan)
        beta = np.where(valid, beta, np.nan)

        if exact:
            for k in np.flatnonzero(valid):
                fit = estimate_vasicek_at if model is ModelKind.VASICEK else estimate_cir_at
                try:
                    level[k], beta[k] = fit(panel, tau1, tau2, int(rows[k]), M, exact=True)
                except EstimatorUndefinedError as e:
                    logger.debug(f"exact fit undefined at row {rows[k]}: {e}")
                    valid[k] = False
                    level[k], beta[k] = np.nan, np.nan

        gaps = int((~valid).sum())
        if gaps:
            logger.warning(f"{gaps} of {rows.size} estimation windows undefined")
        return pd.DataFrame({
            "date": panel.dates[rows],
            level_col: level,
            "beta_hat": beta,
            "window_valid": valid,
        })
    except Exception as e:
        log_error(e, f"Error in {model.value} estimation")
        raise


def estimate_vasicek(
    panel: YieldPanel,
    tau1: float = settings.TAU1,
    tau2: float = settings.TAU2,
    M: int = settings.WINDOW,
    exact: bool = False,
) -> pd.DataFrame:
    """Rolling (a_hat, beta_hat); columns date, a_hat, beta_hat, window_valid"""
    return _estimate_series(panel, ModelKind.VASICEK, tau1, tau2, M, exact)


def estimate_cir(
    panel: YieldPanel,
    tau1: float = settings.TAU1,
    tau2: float = settings.TAU2,
    M: int = settings.WINDOW,
    exact: bool = False,
) -> pd.DataFrame:
    """Rolling (alpha_hat, beta_hat); columns date, alpha_hat, beta_hat, window_valid"""
    return _estimate_series(panel, ModelKind.CIR, tau1, tau2, M, exact)


# -- parameter-process fits ---------------------------------------------------

def fit_gbm(series, delta: float = settings.DELTA) -> Tuple[float, float]:
    """
    Log-return maximum likelihood fit of dY = mu Y dt + sigma Y dW.

    Returns:
        (mu, sigma)
    """
    values = np.asarray(series, dtype=float)
    if values.ndim != 1 or values.size < 3:
        raise InsufficientDataError(f"GBM fit needs at least 3 observations, got {values.size}")
    if not np.all(values > 0):
        raise DomainError("GBM fit needs a strictly positive series")
    log_inc = np.diff(np.log(values))
    m, v = log_inc.mean(), log_inc.var(ddof=0)
    sigma = float(np.sqrt(v / delta))
    mu = float(m / delta + 0.5 * sigma ** 2)
    return mu, sigma


def fit_param_process(
    estimates: pd.DataFrame,
    delta: float = settings.DELTA,
    window: Optional[int] = None,
) -> ParamProcessSpec:
    """
    GBM-pair parameter process from an estimator series.

    -beta_hat and the level column are fitted separately over the last
    `window` valid rows; the process starts at the last valid estimate.
    """
    model = ModelKind.VASICEK if "a_hat" in estimates.columns else ModelKind.CIR
    level_col = "a_hat" if model is ModelKind.VASICEK else "alpha_hat"
    valid = estimates[estimates["window_valid"].astype(bool)]
    if window is not None:
        valid = valid.tail(window)
    logger.info(f"Fitting GBM parameter process on {len(valid)} {model.value} estimates")
    mu1, sigma1 = fit_gbm(-valid["beta_hat"].to_numpy(), delta)
    mu2, sigma2 = fit_gbm(valid[level_col].to_numpy(), delta)
    last = valid.iloc[-1]
    return ParamProcessSpec(
        kind=ParamProcessKind.GBM,
        model=model,
        level0=float(last[level_col]),
        beta0=float(last["beta_hat"]),
        gbm_mu1=mu1,
        gbm_sigma1=sigma1,
        gbm_mu2=mu2,
        gbm_sigma2=sigma2,
    )


# -- covariation rank ---------------------------------------------------------

def covariation_matrix_rank(
    panel: YieldPanel,
    t_index: int,
    M: int = settings.WINDOW,
    rel_threshold: float = settings.RANK_THRESHOLD,
) -> Tuple[np.ndarray, int]:
    """Windowed covariation matrix over all maturities and its numerical rank"""
    _check_window(panel, t_index, M)
    inc = np.diff(panel.values[t_index - M: t_index + 1], axis=0)
    if not np.all(np.isfinite(inc)):
        raise EstimatorUndefinedError("missing values in covariation window", t_index)
    matrix = inc.T @ inc
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[0] == 0:
        return matrix, 0
    return matrix, int(np.count_nonzero(singular > rel_threshold * singular[0]))


def rank_series(
    panel: YieldPanel,
    M: int = settings.WINDOW,
    rel_threshold: float = settings.RANK_THRESHOLD,
) -> pd.DataFrame:
    """Rank of the covariation matrix for every window; columns date, rank, window_valid"""
    logger.info(f"Rolling covariation rank - dates: {panel.n_dates}, maturities: {panel.n_maturities}, window: {M}")
    rows = np.arange(M, panel.n_dates)
    ranks = np.zeros(rows.size, dtype=int)
    valid = np.ones(rows.size, dtype=bool)
    for k, n in enumerate(rows):
        try:
            ranks[k] = covariation_matrix_rank(panel, int(n), M, rel_threshold)[1]
        except EstimatorUndefinedError:
            valid[k] = False
            ranks[k] = -1
    return pd.DataFrame({"date": panel.dates[rows], "rank": ranks, "window_valid": valid})
