from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from app.core.exceptions import InsufficientDataError, RangeError, ValidationError
from app.core.logger import logger, log_error
from app.models.curves import ForwardCurve, TimeGrid, YieldCurve


SPLINE_BOUNDARIES = ("not-a-knot", "natural")


def yields_to_forwards(
    yc: YieldCurve,
    grid: TimeGrid,
    boundary: str = "not-a-knot",
) -> ForwardCurve:
    """
    Forward curve from zero yields via a cubic spline of g(tau) = tau * r(tau).

    The spline runs through the origin (g(0) = 0) and the input knots; h = g'
    and h' = g'' are taken analytically from the spline.

    Args:
        yc: zero-coupon yields, continuously compounded
        grid: target time-to-maturity grid, must lie inside the data range
        boundary: "not-a-knot" (default) or "natural"
            Not-a-knot is the default instead of a natural spline. A natural
            spline forces g'' = 0 at both ends: h'(0) = 0 for every curve,
            and a linear yield curve (quadratic g) no longer gives a linear h.

    Returns:
        ForwardCurve on grid
    """
    if len(yc) < 4:
        raise InsufficientDataError(f"need at least 4 yield points, got {len(yc)}")
    if grid.horizon > yc.maturities[-1] + 1e-9:
        raise RangeError(
            f"grid horizon {grid.horizon:.6g} exceeds longest maturity {yc.maturities[-1]:.6g}"
        )
    if boundary not in SPLINE_BOUNDARIES:
        raise ValidationError(f"unknown spline boundary {boundary!r}")

    knots = np.concatenate(([0.0], yc.maturities))
    g = np.concatenate(([0.0], yc.maturities * yc.yields))
    spline = CubicSpline(knots, g, bc_type=boundary)
    nodes = grid.nodes
    logger.debug(f"spline through {len(knots)} knots onto {grid.count} nodes ({boundary})")
    return ForwardCurve(grid, spline(nodes, 1), spline(nodes, 2))


def integrate_forwards(values: np.ndarray, step: float, maturity: float) -> np.ndarray:
    """
    Trapezoid integral of grid-sampled forwards over [0, maturity].

    values may carry leading axes (one curve per path); off-grid endpoints use
    linear interpolation between the neighbouring nodes.
    """
    values = np.asarray(values, dtype=float)
    count = values.shape[-1]
    if maturity < 0 or maturity > step * (count - 1) + 1e-12:
        raise RangeError(f"maturity {maturity} outside [0, {step * (count - 1)}]")
    k = min(int(np.floor(maturity / step + 1e-9)), count - 1)
    head = values[..., : k + 1]
    full = step * (head.sum(axis=-1) - 0.5 * (head[..., 0] + head[..., -1]))
    frac = maturity - k * step
    if frac > 1e-14 and k < count - 1:
        h_k = values[..., k]
        h_end = h_k + frac / step * (values[..., k + 1] - h_k)
        full = full + 0.5 * frac * (h_k + h_end)
    return full


def forwards_to_yields(fc: ForwardCurve, maturities: Sequence[float]) -> YieldCurve:
    maturities = np.asarray(maturities, dtype=float)
    if np.any(maturities <= 0):
        raise RangeError("yield maturities must be positive")
    yields = np.array(
        [integrate_forwards(fc.values, fc.grid.step, tau) / tau for tau in maturities]
    )
    return YieldCurve(maturities, yields)


def shift(fc: ForwardCurve, k: int) -> ForwardCurve:
    if k < 0 or k >= fc.grid.count - 1:
        raise RangeError(f"cannot shift a {fc.grid.count}-node curve by {k}")
    if k == 0:
        return fc
    return ForwardCurve(
        fc.grid.truncated(fc.grid.count - k),
        fc.values[k:].copy(),
        fc.deriv_values[k:].copy(),
    )


def bond_price_from_forwards(fc: ForwardCurve, T: float) -> float:
    try:
        return float(np.exp(-integrate_forwards(fc.values, fc.grid.step, T)))
    except RangeError as e:
        log_error(e, f"Bond price beyond curve coverage (T={T})")
        raise
