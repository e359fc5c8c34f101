"""
Consistent-recalibration stepping for Hull-White extended Vasicek and CIR
models, and the path-ensemble driver.

One step recalibrates theta(0), theta(delta) from the current curve, draws
the next short rate, moves the forward curve and its derivative one node to
the left, then advances the coefficient process. All arrays carry one row
per path so a block of paths steps together.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, Optional

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import AdmissibilityError, ConfigError
from app.core.logger import logger, log_error, log_rejection
from app.models.curves import ForwardCurve, TimeGrid
from app.models.panel import YieldPanel
from app.models.params import CirParams, ModelKind, VasicekParams
from app.models.processes import ParamProcessSpec
from app.models.state import CrcState, SimConfig, required_nodes
from app.schemas.reports import PathEnsemble
from app.services.affine import riccati
from app.services.curves import integrate_forwards
from app.services.samplers import (
    NORMAL_SHORT_RATE,
    UNIFORM_SHORT_RATE,
    RngStream,
    StepNoise,
    cir_step_order2,
    param_step,
    vasicek_step_exact,
)
from app.services.volterra import head_cir, head_vasicek

# CIR parameter processes may touch zero; the Riccati functions stay finite there
ALPHA_FLOOR = np.finfo(float).tiny


def _step_params(state: CrcState, spec: ParamProcessSpec):
    """Per-path coefficients shaped (paths, 1), or scalars when every path shares them"""
    if spec.is_deterministic:
        alive = np.flatnonzero(~state.rejected)
        row = int(alive[0]) if alive.size else 0
        level, beta = float(state.y[row, 0]), float(state.y[row, 1])
    else:
        level, beta = state.y[:, :1], state.y[:, 1:]
    if state.model is ModelKind.CIR:
        return CirParams(alpha=np.maximum(level, ALPHA_FLOOR), beta=beta)
    return VasicekParams(a=level, beta=beta)


def _column(value) -> np.ndarray:
    return np.reshape(np.asarray(value, dtype=float), (-1,))


def _advance_curves(state: CrcState, p, theta0, theta_delta, r_next):
    """
    Forward curve and derivative at t + delta on the shifted grid:

        h'(tau) = h(tau + delta) + phi'(tau + delta) - phi'(tau)
                  + psi'(tau + delta) x - psi'(tau) r_next
                  + delta/2 (theta0 psi'(tau + delta) + theta_delta psi'(tau))

    and the same with phi'', psi'' for the derivative. The short end is
    pinned to r_next.
    """
    delta = state.step
    rp = riccati(p, state.grid.nodes)
    x = state.x[:, None]
    r_new = r_next[:, None]
    th0, th1 = theta0[:, None], theta_delta[:, None]

    def moved(curve, phi_d, psi_d):
        phi_d = np.broadcast_to(phi_d, curve.shape)
        psi_d = np.broadcast_to(psi_d, curve.shape)
        return (
            curve[:, 1:]
            + phi_d[:, 1:] - phi_d[:, :-1]
            + psi_d[:, 1:] * x - psi_d[:, :-1] * r_new
            + 0.5 * delta * (th0 * psi_d[:, 1:] + th1 * psi_d[:, :-1])
        )

    h = moved(state.h, rp.phi_prime, rp.psi_prime)
    dh = moved(state.dh, rp.phi_second, rp.psi_second)
    h[:, 0] = r_next
    return h, dh


def _finish_step(state, spec, noise, h, dh, r_next, theta0, theta_delta, rejected=None):
    y_next = param_step(spec, state.y, state.t, state.step, noise, model=state.model)
    rejected = state.rejected if rejected is None else rejected
    if rejected.any():
        y_next = np.where(rejected[:, None], state.y, y_next)
        h[rejected] = np.nan
        dh[rejected] = np.nan
        r_next = np.where(rejected, np.nan, r_next)
    return replace(
        state,
        h=h,
        dh=dh,
        x=r_next,
        y=y_next,
        theta_head=np.column_stack([theta0, theta_delta]),
        n=state.n + 1,
        t=state.t + state.step,
        rejected=rejected,
    )


def crc_step_vasicek(state: CrcState, noise: StepNoise, spec: ParamProcessSpec) -> CrcState:
    """
    One recalibrated Vasicek step.

    Args:
        state: block of paths at t_n
        noise: this step's variates, one row per path
        spec: law of the coefficient process

    Returns:
        the block at t_{n+1}
    """
    delta = state.step
    p = _step_params(state, spec)
    a, beta = _column(p.a), _column(p.beta)
    theta0, theta_delta = head_vasicek(
        a, beta, state.h[:, 0], state.h[:, 1], state.dh[:, 0], state.dh[:, 1], delta
    )
    i_theta_delta = -0.5 * delta * (np.exp(beta * delta) * theta0 + theta_delta)
    r_next = vasicek_step_exact(
        state.x, VasicekParams(a=a, beta=beta), i_theta_delta, delta,
        noise.normals[..., NORMAL_SHORT_RATE],
    )
    r_next = np.broadcast_to(r_next, state.x.shape).astype(float)
    h, dh = _advance_curves(state, p, theta0, theta_delta, r_next)
    return _finish_step(state, spec, noise, h, dh, r_next, theta0, theta_delta)


def crc_step_cir(
    state: CrcState,
    noise: StepNoise,
    spec: ParamProcessSpec,
    clamp_theta: bool = False,
    strict: bool = False,
) -> CrcState:
    """
    One recalibrated CIR step.

    Paths whose calibrated theta(0) or theta(delta) is negative are rejected:
    they are frozen with NaN state and recorded with the offending theta.
    strict raises AdmissibilityError for the first such path instead;
    clamp_theta clips theta at zero and keeps the path (exploratory runs only,
    this changes the law).
    """
    delta = state.step
    p = _step_params(state, spec)
    alive = ~state.rejected
    x = np.where(alive, state.x, 0.0)
    psi_prime_step = _column(riccati(p, delta).psi_prime)
    theta0, theta_delta = head_cir(
        psi_prime_step, _column(p.beta), state.h[:, 0], state.h[:, 1], state.dh[:, 0], x, delta
    )

    with np.errstate(invalid="ignore"):
        bad = alive & ((theta0 < 0) | (theta_delta < 0))
    rejected = state.rejected
    rejection_step = state.rejection_step
    rejection_theta = state.rejection_theta
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        worst = float(min(theta0[first], theta_delta[first]))
        if strict:
            raise AdmissibilityError(t=state.t, theta0=worst, path=state.path_offset + first)
        if clamp_theta:
            theta0 = np.where(alive, np.maximum(theta0, 0.0), theta0)
            theta_delta = np.where(alive, np.maximum(theta_delta, 0.0), theta_delta)
        else:
            rejected = rejected | bad
            rejection_step = np.where(bad, state.n, rejection_step)
            rejection_theta = np.where(bad, np.minimum(theta0, theta_delta), rejection_theta)
            for i in np.flatnonzero(bad):
                log_rejection(state.path_offset + int(i), state.t, float(min(theta0[i], theta_delta[i])))

    live = ~rejected
    safe0 = np.where(live, theta0, 0.0)
    safe1 = np.where(live, theta_delta, 0.0)
    step_params = CirParams(alpha=_column(p.alpha), beta=_column(p.beta))
    r_next = cir_step_order2(
        np.where(live, x, 0.0), step_params, safe0, safe1, delta,
        noise.uniforms[..., UNIFORM_SHORT_RATE],
        t=state.t,
    )
    r_next = np.broadcast_to(r_next, state.x.shape).astype(float)
    h, dh = _advance_curves(replace(state, x=np.where(live, x, 0.0)), p, safe0, safe1, r_next)
    nxt = _finish_step(state, spec, noise, h, dh, r_next, theta0, theta_delta, rejected=rejected)
    nxt.rejection_step = rejection_step
    nxt.rejection_theta = rejection_theta
    return nxt


class CrcEngine:
    """Runs a SimConfig block by block and assembles the PathEnsemble"""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.maturities = np.asarray(cfg.report_maturities, dtype=float)
        needed = required_nodes(cfg.delta, cfg.n_steps, cfg.report_maturities)
        curve: ForwardCurve = cfg.initial_curve
        self.curve = ForwardCurve(
            curve.grid.truncated(needed),
            curve.values[:needed],
            curve.deriv_values[:needed],
        )
        self.y0 = cfg.param_spec.initial_state()
        logger.info(
            f"CrcEngine initialized - model: {cfg.model.value}, paths: {cfg.n_paths}, "
            f"steps: {cfg.n_steps}, delta: {cfg.delta:.6g}, parameters: {cfg.param_spec.kind.value}"
        )

    def step(self, state: CrcState, noise: StepNoise) -> CrcState:
        if self.cfg.model is ModelKind.VASICEK:
            return crc_step_vasicek(state, noise, self.cfg.param_spec)
        return crc_step_cir(state, noise, self.cfg.param_spec, clamp_theta=self.cfg.clamp_theta)

    def _record_yields(self, state: CrcState) -> np.ndarray:
        out = np.empty((state.n_paths, self.maturities.size))
        for k, tau in enumerate(self.maturities):
            out[:, k] = integrate_forwards(state.h, state.step, tau) / tau
        return out

    def run_block(self, start: int, stop: int) -> Dict[str, np.ndarray]:
        cfg = self.cfg
        n_steps, size = cfg.n_steps, stop - start
        noise = StepNoise.stack([
            RngStream(cfg.seed, i).noise_tape(n_steps, cfg.noise_substeps) for i in range(start, stop)
        ])
        state = CrcState.initial(cfg.model, self.curve, self.y0, size, path_offset=start)

        short_rate = np.empty((size, n_steps + 1))
        discount = np.empty((size, n_steps + 1))
        yields = np.empty((size, n_steps + 1, self.maturities.size))
        levels = np.empty((size, n_steps + 1))
        betas = np.empty((size, n_steps + 1))

        def record(n: int):
            short_rate[:, n] = state.x
            yields[:, n] = self._record_yields(state)
            levels[:, n] = state.y[:, 0]
            betas[:, n] = state.y[:, 1]

        record(0)
        discount[:, 0] = 1.0
        for n in range(n_steps):
            state = self.step(state, noise.at(n))
            record(n + 1)
            discount[:, n + 1] = discount[:, n] * np.exp(
                0.5 * cfg.delta * (short_rate[:, n] + short_rate[:, n + 1])
            )
        logger.debug(f"block [{start}, {stop}) done, {int(state.rejected.sum())} rejected")

        after = state.rejected[:, None] & (np.arange(n_steps + 1)[None, :] > state.rejection_step[:, None])
        for arr in (short_rate, discount, levels, betas):
            arr[after] = np.nan
        yields[after] = np.nan
        return {
            "short_rate": short_rate,
            "discount": discount,
            "yields": yields,
            "levels": levels,
            "betas": betas,
            "rejected": state.rejected.copy(),
            "rejection_step": state.rejection_step.copy(),
            "rejection_theta": state.rejection_theta.copy(),
        }

    def run(self) -> PathEnsemble:
        cfg = self.cfg
        bounds = [
            (start, min(start + cfg.block_size, cfg.n_paths))
            for start in range(0, cfg.n_paths, cfg.block_size)
        ]
        try:
            if cfg.threads > 1 and len(bounds) > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    blocks = list(pool.map(lambda b: self.run_block(*b), bounds))
            else:
                blocks = [self.run_block(*b) for b in bounds]
        except Exception as e:
            log_error(e, "Error in simulate_paths")
            raise

        ensemble = PathEnsemble(
            model=cfg.model,
            times=cfg.times(),
            maturities=self.maturities.copy(),
            seed=cfg.seed,
            **{key: np.concatenate([b[key] for b in blocks]) for key in blocks[0]},
        )
        if ensemble.n_rejected:
            logger.warning(
                f"{ensemble.n_rejected} of {ensemble.n_paths} paths rejected "
                f"(calibrated CIR drift negative)"
            )
        logger.info(f"Simulated {ensemble.n_paths} paths over {cfg.n_steps} steps")
        return ensemble


def simulate_paths(cfg: SimConfig) -> PathEnsemble:
    return CrcEngine(cfg).run()


def generate_synthetic_panel(
    cfg: SimConfig,
    start_date: str = "2004-01-02",
    path: int = 0,
) -> YieldPanel:
    """
    Yield panel from one simulated path: row n holds r(t_n, tau) for the
    configured report maturities, dated on consecutive business days.
    """
    if not cfg.report_maturities:
        raise ConfigError("synthetic panel needs report maturities")
    if not 0 <= path < cfg.n_paths:
        raise ConfigError(f"path {path} outside [0, {cfg.n_paths})")
    logger.info(f"Generating synthetic panel: {cfg.n_steps + 1} dates x {len(cfg.report_maturities)} maturities")
    ensemble = simulate_paths(cfg)
    dates = pd.bdate_range(start=start_date, periods=cfg.n_steps + 1)
    return YieldPanel.from_arrays(dates, cfg.report_maturities, ensemble.yields[path], delta=cfg.delta)


def default_initial_curve(
    delta: float,
    n_steps: int,
    maturities=(),
    rate: Optional[float] = None,
) -> ForwardCurve:
    """Flat curve long enough for n_steps plus the longest maturity"""
    rate = settings.FLAT_RATE if rate is None else rate
    return ForwardCurve.flat(rate, TimeGrid(delta, required_nodes(delta, n_steps, tuple(maturities))))
