"""
Closed-form oracles for the Vasicek example with deterministic coefficients,
Monte Carlo statistics over path ensembles and step-size convergence studies.
"""
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import quad, trapezoid

from app.core.config import settings
from app.core.exceptions import ConfigError, DomainError, EmptyEnsembleError, RangeError
from app.core.logger import logger, log_error
from app.models.curves import ForwardCurve
from app.models.params import VasicekParams
from app.models.state import SimConfig
from app.schemas.reports import ConvergenceReport, MgfEstimate, MomentReport, PathEnsemble
from app.services.crc import default_initial_curve, simulate_paths

CurveFactory = Callable[[float, int], ForwardCurve]

REFERENCES = ("oracle", "intercept")


def xi_deterministic(t, Y0: float, m: float, mu: float, beta: float):
    """
    xi(t) = int_0^t Y(s) exp(2 beta (t - s)) ds for dY = (m + mu Y) dt, Y(0) = Y0.

    Works on scalar or array t.
    """
    if mu > 0:
        raise DomainError(f"mu must be <= 0, got {mu}")
    if not beta < 0:
        raise DomainError(f"beta must be < 0, got {beta}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise RangeError("xi is defined for t >= 0")
    two_beta = 2.0 * beta
    e2 = np.exp(two_beta * t)
    if mu == 0:
        out = Y0 * np.expm1(two_beta * t) / two_beta + m * (np.expm1(two_beta * t) - two_beta * t) / (4.0 * beta ** 2)
    elif np.isclose(mu, two_beta, rtol=1e-12, atol=0.0):
        # removable singularity of the general branch
        out = Y0 * t * e2 + (m / mu) * (t * e2 - np.expm1(two_beta * t) / two_beta)
    else:
        gap = two_beta - mu
        out = Y0 * (e2 - np.exp(mu * t)) / gap + m * (
            -two_beta * np.expm1(mu * t) - mu + mu * e2
        ) / (two_beta * mu * gap)
    return float(out) if out.ndim == 0 else out


def _grid_integral(fc: ForwardCurve, t: float, integrand: Callable[[np.ndarray], np.ndarray]) -> float:
    """Trapezoid integral over [0, t] on the curve's nodes, linear interpolation at an off-grid t"""
    if t < 0 or t > fc.grid.horizon + 1e-12:
        raise RangeError(f"t = {t} outside the initial curve's coverage [0, {fc.grid.horizon}]")
    if t == 0:
        return 0.0
    nodes = fc.grid.nodes
    s = nodes[nodes < t - 1e-12]
    s = np.append(s, t)
    return float(trapezoid(integrand(s), s))


def example_short_rate_law(
    t: float,
    h0: ForwardCurve,
    p: VasicekParams,
    m: float = 0.0,
    mu: float = 0.0,
) -> Tuple[float, float]:
    """
    Mean and variance of the Gaussian short rate r(t) when the Vasicek level
    follows dY = (m + mu Y) dt from Y(0) = p.a and beta is fixed.

    The drift part uses the trapezoid rule on h0's grid, the xi part adaptive
    quadrature. The variance is xi(t).
    """
    a, beta = float(p.a), float(p.beta)
    nodes = h0.grid.nodes

    def curve_drift(s):
        h = np.interp(s, nodes, h0.values)
        dh = np.interp(s, nodes, h0.deriv_values)
        return np.exp(beta * (t - s)) * (dh - beta * h)

    drift = _grid_integral(h0, t, curve_drift)
    if t > 0:
        xi_part, _ = quad(
            lambda s: math.exp(beta * (t - s)) * xi_deterministic(s, a, m, mu, beta),
            0.0, t, epsabs=1e-14, epsrel=1e-12,
        )
    else:
        xi_part = 0.0
    mean = math.exp(beta * t) * h0.short_rate + drift + xi_part
    return mean, xi_deterministic(t, a, m, mu, beta)


def mgf_v2_exact(eta: float, t: float, h0: ForwardCurve, a0: float, beta0: float) -> float:
    """E[exp(eta r(t))] when the Vasicek level ramps as a0 (1 + 3t)"""
    mean, variance = example_short_rate_law(t, h0, VasicekParams(a=a0, beta=beta0), m=3.0 * a0, mu=0.0)
    return math.exp(eta * mean + 0.5 * eta ** 2 * variance)


def example_bond_price(
    t: float,
    T: float,
    h0: ForwardCurve,
    beta: float,
    r_t: float,
    xi_t: float,
) -> float:
    """P(t, T) in the Vasicek example with deterministic coefficients; u = T - t in the loadings"""
    if T < t:
        raise RangeError(f"maturity T={T} precedes t={t}")
    u = T - t
    if u == 0:
        return 1.0
    if T > h0.grid.horizon + 1e-12:
        raise RangeError(f"T = {T} outside the initial curve's coverage")
    nodes = h0.grid.nodes
    inner = nodes[(nodes > t + 1e-12) & (nodes < T - 1e-12)]
    s = np.concatenate(([t], inner, [T]))
    curve_integral = float(trapezoid(np.interp(s, nodes, h0.values), s))
    h0_t = float(np.interp(t, nodes, h0.values))
    e_u = math.exp(beta * u)
    exponent = (
        -curve_integral
        + h0_t * (e_u - 1.0) / beta
        + (1.0 - e_u) * r_t / beta
        - 0.5 * (1.0 - e_u) ** 2 * xi_t / beta ** 2
    )
    return math.exp(exponent)


def _terminal_values(ensemble: PathEnsemble, t: float) -> Tuple[np.ndarray, int]:
    values = ensemble.short_rate[:, ensemble.step_index(t)]
    keep = ensemble.survivors & np.isfinite(values)
    if not keep.any():
        raise EmptyEnsembleError(f"no surviving paths at t = {t} ({ensemble.n_rejected} rejected)")
    return values[keep], ensemble.n_rejected


def mc_mgf(ensemble: PathEnsemble, eta: float, t: float) -> MgfEstimate:
    """Sample mean and standard error of exp(eta r(t)) over surviving paths"""
    r, n_rejected = _terminal_values(ensemble, t)
    values = np.exp(eta * r)
    n = values.size
    estimate = math.fsum(values) / n
    if n < 2:
        return MgfEstimate(eta, t, estimate, float("nan"), n, n_rejected, se_defined=False)
    sd = math.sqrt(math.fsum((values - estimate) ** 2) / (n - 1))
    return MgfEstimate(eta, t, estimate, sd / math.sqrt(n), n, n_rejected)


def _moment_stats(x: np.ndarray) -> np.ndarray:
    mean = math.fsum(x) / x.size
    sd = float(np.std(x, ddof=1))
    if sd == 0:
        return np.array([mean, sd, np.nan, np.nan])
    return np.array([
        mean,
        sd,
        stats.skew(x, bias=False),
        stats.kurtosis(x, fisher=True, bias=False),
    ])


def mc_moments(ensemble: PathEnsemble, t: float, blocks: int = settings.JACKKNIFE_BLOCKS) -> MomentReport:
    """
    Mean, standard deviation, skewness and excess kurtosis of r(t) with
    delete-one-block jackknife standard errors.
    """
    x, n_rejected = _terminal_values(ensemble, t)
    n = x.size
    logger.info(f"Moments of r({t}) over {n} paths, {n_rejected} rejected")
    if n < 4:
        raise EmptyEnsembleError(f"moment statistics need at least 4 paths, got {n}")
    full = _moment_stats(x)
    defined = bool(np.isfinite(full[2]))

    n_blocks = min(blocks, n)
    groups = np.array_split(np.arange(n), n_blocks)
    leave_out = np.array([_moment_stats(np.delete(x, g)) for g in groups])
    spread = leave_out - leave_out.mean(axis=0)
    se = np.sqrt((n_blocks - 1) / n_blocks * np.sum(spread ** 2, axis=0))

    if not defined:
        logger.warning(f"r({t}) has zero spread; skewness and kurtosis undefined")
    return MomentReport(
        t=t,
        n_paths=n,
        n_rejected=n_rejected,
        mean=float(full[0]),
        sd=float(full[1]),
        skewness=float(full[2]),
        excess_kurtosis=float(full[3]),
        se_mean=float(se[0]),
        se_sd=float(se[1]),
        se_skewness=float(se[2]) if defined else float("nan"),
        se_excess_kurtosis=float(se[3]) if defined else float("nan"),
        skew_defined=defined,
        se_valid=n >= 100,
    )


def fit_loglog_slope(deltas: Sequence[float], errors: Sequence[float]) -> Tuple[float, float]:
    """Least-squares (slope, intercept) of log(error) against log(delta)"""
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if deltas.size < 2 or np.any(deltas <= 0) or np.any(errors <= 0):
        raise RangeError("log-log fit needs at least 2 points with positive deltas and errors")
    slope, intercept = np.polyfit(np.log(deltas), np.log(errors), 1)
    return float(slope), float(intercept)


def _config_for(template: SimConfig, **update) -> SimConfig:
    fields = {name: getattr(template, name) for name in SimConfig.model_fields}
    fields.update(update)
    return SimConfig(**fields)


def _substeps(deltas: np.ndarray) -> np.ndarray:
    ratio = deltas / deltas[-1]
    rounded = np.rint(ratio)
    if np.any(np.abs(ratio - rounded) > 1e-9 * ratio):
        raise ConfigError(f"every delta must be an integer multiple of the finest one, got {deltas.tolist()}")
    return rounded.astype(int)


def convergence_study(
    template: SimConfig,
    deltas: Sequence[float],
    eta: float,
    curve_factory: Optional[CurveFactory] = None,
    oracle: Optional[float] = None,
    horizon: float = 1.0,
    reference: str = "oracle",
) -> ConvergenceReport:
    """
    Weak error of E[exp(eta r(horizon))] across step sizes.

    Every path draws its variates on the finest grid and coarser steps
    aggregate them, so the runs share their Brownian paths. Errors are taken
    against the oracle or, with reference="intercept", against the intercept
    of a linear-in-delta fit of the estimates. Points whose error is below
    twice its standard error are flagged and left out of the slope fit.
    """
    deltas = np.asarray(deltas, dtype=float)
    logger.info(
        f"Convergence study - model: {template.model.value}, deltas: {deltas.tolist()}, "
        f"eta: {eta}, paths: {template.n_paths}, reference: {reference}"
    )
    if deltas.size < 3:
        raise ConfigError(f"convergence study needs at least 3 step sizes, got {deltas.size}")
    if np.any(deltas <= 0) or np.any(np.diff(deltas) >= 0):
        raise ConfigError("step sizes must be positive and strictly decreasing")
    if reference not in REFERENCES:
        raise ConfigError(f"unknown reference {reference!r}, expected one of {REFERENCES}")
    if reference == "oracle" and oracle is None:
        raise ConfigError("reference 'oracle' needs an oracle value")
    substeps = _substeps(deltas)
    if curve_factory is None:
        rate = template.initial_curve.short_rate

        def curve_factory(delta: float, n_steps: int) -> ForwardCurve:
            return default_initial_curve(delta, n_steps, rate=rate)

    try:
        samples, survivors = [], np.ones(template.n_paths, dtype=bool)
        for delta, sub in zip(deltas, substeps):
            n_steps = int(round(horizon / delta))
            if abs(n_steps * delta - horizon) > 1e-9:
                raise ConfigError(f"horizon {horizon} is not a multiple of delta {delta}")
            cfg = _config_for(
                template,
                delta=float(delta),
                n_steps=n_steps,
                noise_substeps=int(sub),
                initial_curve=curve_factory(float(delta), n_steps),
                report_maturities=(),
            )
            ensemble = simulate_paths(cfg)
            r = ensemble.short_rate[:, -1]
            survivors &= ensemble.survivors & np.isfinite(r)
            samples.append(np.exp(eta * r))
            logger.debug(f"delta {delta:.6g}: {int(ensemble.survivors.sum())} surviving paths")

        if not survivors.any():
            raise EmptyEnsembleError("no path survives every step size")
        f = np.stack([s[survivors] for s in samples])
        n = f.shape[1]
        estimates = np.array([math.fsum(row) / n for row in f])

        design = np.column_stack([np.ones_like(deltas), deltas])
        weights = np.linalg.pinv(design)[0]
        combined = weights @ f
        intercept = float(weights @ estimates)
        intercept_se = float(np.std(combined, ddof=1) / np.sqrt(n))

        if reference == "oracle":
            errors = np.abs(estimates - oracle)
            ses = np.std(f, axis=1, ddof=1) / np.sqrt(n)
        else:
            errors = np.abs(estimates - intercept)
            ses = np.std(f - combined, axis=1, ddof=1) / np.sqrt(n)

        floor = errors < 2.0 * ses
        usable = ~floor & (errors > 0)
        notes = [f"delta {d:.6g} at the Monte Carlo noise floor" for d in deltas[floor]]
        if usable.sum() >= 2:
            slope, _ = fit_loglog_slope(deltas[usable], errors[usable])
            reliable = True
        else:
            slope, reliable = float("nan"), False
            notes.append("fewer than two points above the noise floor; slope not fitted")
            logger.warning("Convergence slope unreliable: errors at the Monte Carlo noise floor")

        logger.info(f"Convergence slope {slope:.4g} over {int(usable.sum())} points, intercept {intercept:.8g}")
        return ConvergenceReport(
            deltas=deltas,
            estimates=estimates,
            errors=errors,
            standard_errors=ses,
            noise_floor=floor,
            slope=slope,
            intercept=intercept,
            intercept_se=intercept_se,
            reference=reference,
            oracle=oracle,
            eta=eta,
            reliable=reliable,
            notes=notes,
        )
    except Exception as e:
        log_error(e, "Error in convergence_study")
        raise
