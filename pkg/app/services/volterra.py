"""
Volterra calibration: the trapezoid operator g = I(theta), its triangular
inverse, and the calibration operators mapping a forward curve to its
Hull-White extension.
"""
from typing import Tuple

import numpy as np

from app.core.exceptions import ConstraintError, DomainError, ShapeError, StateConsistencyError
from app.core.logger import logger
from app.models.curves import ForwardCurve, GridFunction, HullWhiteExtension
from app.models.params import CirParams, ModelParams, VasicekParams
from app.services.affine import riccati, trapezoid_convolution


def volterra_apply(p: ModelParams, theta: HullWhiteExtension) -> GridFunction:
    grid = theta.grid
    kernel = riccati(p, grid.nodes).psi_prime
    return GridFunction(grid, trapezoid_convolution(kernel, theta.values, grid.step))


def volterra_solve(p: ModelParams, g: GridFunction, g_prime0: float) -> HullWhiteExtension:
    """
    Solve the trapezoid system I(theta)(tau_n) = g(tau_n) by forward substitution.

    theta(0) comes from g'(0) = psi_prime(0) theta(0); every later node solves
    one row of the lower-triangular system whose diagonal is step/2 * psi_prime(0).
    """
    values = g.values
    if abs(values[0]) > 1e-12:
        raise ConstraintError(f"Volterra right-hand side must vanish at 0, got g(0)={values[0]}")
    grid = g.grid
    step = grid.step
    kernel = np.asarray(riccati(p, grid.nodes).psi_prime, dtype=float)
    if kernel.shape != (grid.count,):
        raise ShapeError("Volterra solve needs scalar model parameters")

    theta = np.empty(grid.count)
    theta[0] = g_prime0 / kernel[0]
    diagonal = 0.5 * kernel[0]
    for n in range(1, grid.count):
        # sum_{i=1}^{n-1} K(tau_n - tau_i) theta_i with K reversed against theta
        interior = np.dot(kernel[n - 1:0:-1], theta[1:n]) if n > 1 else 0.0
        rhs = values[n] / step - 0.5 * kernel[n] * theta[0] - interior
        theta[n] = rhs / diagonal
    return HullWhiteExtension(grid, theta)


def calibrate_vasicek(p: VasicekParams, fc: ForwardCurve) -> HullWhiteExtension:
    tau = fc.grid.nodes
    a, beta = float(p.a), float(p.beta)
    theta = fc.deriv_values - beta * fc.values - a / (2.0 * beta) * (1.0 - np.exp(2.0 * beta * tau))
    return HullWhiteExtension(fc.grid, theta)


def volterra_rhs(p: ModelParams, fc: ForwardCurve, x: float) -> Tuple[GridFunction, float]:
    """Right-hand side g = -h - phi' - psi' x and g'(0) for a forward curve"""
    rp = riccati(p, fc.grid.nodes)
    g = -fc.values - rp.phi_prime - rp.psi_prime * x
    g[0] = 0.0
    g_prime0 = -fc.deriv_values[0] - float(rp.phi_second[0]) - float(rp.psi_second[0]) * x
    return GridFunction(fc.grid, g), g_prime0


def calibrate(p: ModelParams, fc: ForwardCurve, x: float) -> HullWhiteExtension:
    """Hull-White extension reproducing fc for either model, by the numeric solve"""
    logger.info(f"Calibrating {type(p).__name__} extension on {fc.grid.count} nodes")
    if isinstance(p, CirParams) and x < 0:
        raise DomainError(f"CIR factor must be nonnegative, got {x}")
    if abs(fc.values[0] - x) > 1e-12:
        raise StateConsistencyError(f"curve short end {fc.values[0]} differs from factor {x}")
    g, g_prime0 = volterra_rhs(p, fc, x)
    return volterra_solve(p, g, g_prime0)


def head_vasicek(a, beta, h0, h1, dh0, dh1, step):
    """theta(0), theta(step) by the closed-form calibration operator; works on arrays"""
    theta0 = dh0 - beta * h0
    theta1 = dh1 - beta * h1 - a / (2.0 * beta) * (1.0 - np.exp(2.0 * beta * step))
    return theta0, theta1


def head_cir(psi_prime_step, beta, h0, h1, dh0, x, step):
    """theta(0), theta(step) from the first two rows of the trapezoid system; works on arrays"""
    theta0 = dh0 - beta * h0
    theta1 = 2.0 / step * (h1 + psi_prime_step * x) + psi_prime_step * theta0
    return theta0, theta1


def calibrate_cir_head(p: CirParams, fc: ForwardCurve, x: float) -> Tuple[float, float]:
    if x < 0:
        raise DomainError(f"CIR factor must be nonnegative, got {x}")
    if abs(fc.values[0] - x) > 1e-12:
        raise StateConsistencyError(f"curve short end {fc.values[0]} differs from factor {x}")
    step = fc.grid.step
    psi_prime_step = float(riccati(p, step).psi_prime)
    theta0, theta1 = head_cir(
        psi_prime_step, float(p.beta), fc.values[0], fc.values[1], fc.deriv_values[0], x, step
    )
    if theta0 < 0 or theta1 < 0:
        logger.warning(f"CIR calibration not admissible: theta(0)={theta0:.6g}, theta(delta)={theta1:.6g}")
    return float(theta0), float(theta1)
