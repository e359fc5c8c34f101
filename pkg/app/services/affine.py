"""
Riccati functions, HJM coefficients, the forward-curve operator and affine
bond prices for the one-factor Vasicek and CIR models.

Conventions: the short rate is the factor itself and psi_prime(0) = -1 in both
models. The Volterra part of a forward curve is written with kernel psi_prime,

    h(tau) = -I(theta)(tau) - phi_prime(tau) - psi_prime(tau) x,
    I(theta)(tau) = int_0^tau theta(s) psi_prime(tau - s) ds,

so that for Vasicek -I(theta)(tau) = int_0^tau theta(s) exp(beta (tau - s)) ds.
"""
from typing import Callable, Tuple

import numpy as np
from scipy.integrate import trapezoid

from app.core.exceptions import DomainError, OrderingError, RangeError, ShapeError
from app.core.logger import logger
from app.models.curves import ForwardCurve, HullWhiteExtension
from app.models.params import ArrayLike, CirParams, ModelParams, RiccatiPair, VasicekParams


def vasicek_riccati(p: VasicekParams, t: ArrayLike) -> RiccatiPair:
    t = np.asarray(t, dtype=float)
    a, beta = np.asarray(p.a, dtype=float), np.asarray(p.beta, dtype=float)
    e1 = np.exp(beta * t)
    e2 = e1 * e1
    psi = -np.expm1(beta * t) / beta
    phi = a / (4.0 * beta ** 3) * (2.0 * beta * t - 4.0 * e1 + 3.0 + e2)
    psi_prime = -e1
    return RiccatiPair(
        phi=phi,
        phi_prime=0.5 * a * psi * psi,
        phi_second=a * psi * psi_prime,
        psi=psi,
        psi_prime=psi_prime,
        psi_second=-beta * e1,
    )


def cir_riccati(p: CirParams, t: ArrayLike) -> RiccatiPair:
    """
    Closed-form CIR Riccati functions.

    With g = gamma, f = exp(-g t) and G = (g - beta) + (g + beta) f, the printed
    solution psi = -2 (e^{gt} - 1) / (g (e^{gt} + 1) - beta (e^{gt} - 1)) becomes

        psi   = -2 (1 - f) / G
        psi'  = -4 g^2 f / G^2
        psi'' = -4 g^3 f ((g + beta) f - (g - beta)) / G^3

    which never overflows for large g t. psi'' also equals (alpha psi + beta) psi',
    the t-derivative of the Riccati equation psi' = alpha/2 psi^2 + beta psi - 1.
    """
    t = np.asarray(t, dtype=float)
    beta = np.asarray(p.beta, dtype=float)
    gamma = np.asarray(p.gamma, dtype=float)
    f = np.exp(-gamma * t)
    big_g = (gamma - beta) + (gamma + beta) * f
    psi = 2.0 * np.expm1(-gamma * t) / big_g
    psi_prime = -4.0 * gamma ** 2 * f / big_g ** 2
    psi_second = -4.0 * gamma ** 3 * f * ((gamma + beta) * f - (gamma - beta)) / big_g ** 3
    zeros = np.zeros(np.broadcast(t, gamma).shape)
    return RiccatiPair(
        phi=zeros,
        phi_prime=zeros,
        phi_second=zeros,
        psi=psi,
        psi_prime=psi_prime,
        psi_second=psi_second,
    )


def riccati(p: ModelParams, t: ArrayLike) -> RiccatiPair:
    if isinstance(p, VasicekParams):
        return vasicek_riccati(p, t)
    if isinstance(p, CirParams):
        return cir_riccati(p, t)
    raise DomainError(f"unsupported model parameters: {type(p).__name__}")


def functional_characteristics(p: ModelParams) -> Tuple[Callable, Callable]:
    """Return (F, R) with phi' = F(psi) and psi' = R(psi) - 1"""
    if isinstance(p, VasicekParams):
        a, beta = np.asarray(p.a, dtype=float), np.asarray(p.beta, dtype=float)
        return (lambda u: 0.5 * a * u * u), (lambda u: beta * u)
    if isinstance(p, CirParams):
        alpha, beta = np.asarray(p.alpha, dtype=float), np.asarray(p.beta, dtype=float)
        return (lambda u: np.zeros_like(u)), (lambda u: 0.5 * alpha * u * u + beta * u)
    raise DomainError(f"unsupported model parameters: {type(p).__name__}")


def integrate_riccati(
    p: ModelParams,
    t_max: float,
    step: float = 1e-3,
    record_every: int = 1,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Classical RK4 integration of the Riccati system, used as a reference for
    the closed forms. Parameters may be arrays; the integration is vectorised
    across them.

    Returns:
        times, phi, psi with phi/psi of shape (len(times),) + parameter shape
    """
    big_f, big_r = functional_characteristics(p)
    n_steps = int(round(t_max / step))
    shape = np.broadcast(np.asarray(p.level), np.asarray(p.beta)).shape
    phi = np.zeros(shape)
    psi = np.zeros(shape)

    def rhs(u):
        return big_f(u), big_r(u) - 1.0

    times, phis, psis = [0.0], [phi.copy()], [psi.copy()]
    for n in range(1, n_steps + 1):
        k1f, k1p = rhs(psi)
        k2f, k2p = rhs(psi + 0.5 * step * k1p)
        k3f, k3p = rhs(psi + 0.5 * step * k2p)
        k4f, k4p = rhs(psi + step * k3p)
        phi = phi + step / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        psi = psi + step / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if n % record_every == 0:
            times.append(n * step)
            phis.append(phi.copy())
            psis.append(psi.copy())
    return np.asarray(times), np.asarray(phis), np.asarray(psis)


def hjm_coeffs_vasicek(p: VasicekParams, tau: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    tau = np.asarray(tau, dtype=float)
    a, beta = np.asarray(p.a, dtype=float), np.asarray(p.beta, dtype=float)
    e1 = np.exp(beta * tau)
    drift = -(a / beta) * e1 * (1.0 - e1)
    vol = np.sqrt(a) * e1
    return drift, vol


def hjm_coeffs_cir(p: CirParams, x: float, tau: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    if np.any(np.asarray(x) < 0):
        raise DomainError(f"CIR factor must be nonnegative, got {x}")
    rp = cir_riccati(p, tau)
    alpha = np.asarray(p.alpha, dtype=float)
    drift = rp.psi_prime * rp.psi * alpha * x
    vol = -np.sqrt(alpha * x) * rp.psi_prime
    return drift, vol


def trapezoid_convolution(kernel: np.ndarray, theta: np.ndarray, step: float) -> np.ndarray:
    """
    Trapezoid rule for int_0^{tau_n} theta(s) K(tau_n - s) ds on every node.

    kernel[n] = K(tau_n). Both arrays share the last axis; leading axes of
    theta (paths) are supported.
    """
    kernel = np.asarray(kernel, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[-1]
    if kernel.shape[-1] != n:
        raise ShapeError(f"kernel has {kernel.shape[-1]} nodes, theta has {n}")
    if theta.ndim == 1 and kernel.ndim == 1:
        full = np.convolve(theta, kernel)[:n]
    else:
        theta2, kernel2 = np.broadcast_arrays(np.atleast_2d(theta), np.atleast_2d(kernel))
        full = np.stack([np.convolve(th, k)[:n] for th, k in zip(theta2, kernel2)])
    correction = 0.5 * kernel * theta[..., :1] + 0.5 * kernel[..., :1] * theta
    return step * (full - correction)


def h_operator(p: ModelParams, theta: HullWhiteExtension, x: float) -> ForwardCurve:
    if isinstance(p, CirParams) and x < 0:
        raise DomainError(f"CIR factor must be nonnegative, got {x}")
    grid = theta.grid
    rp = riccati(p, grid.nodes)
    values = (
        -trapezoid_convolution(rp.psi_prime, theta.values, grid.step)
        - rp.phi_prime
        - rp.psi_prime * x
    )
    deriv = (
        theta.values
        - trapezoid_convolution(rp.psi_second, theta.values, grid.step)
        - rp.phi_second
        - rp.psi_second * x
    )
    return ForwardCurve(grid, values, deriv)


def bond_price_affine(
    p: ModelParams,
    theta: HullWhiteExtension,
    x: float,
    t: float,
    T: float,
) -> float:
    if T < t:
        raise OrderingError(f"maturity T={T} precedes valuation time t={t}")
    u = T - t
    if u == 0:
        return 1.0
    if u > theta.grid.horizon + 1e-12:
        raise RangeError(f"Hull-White extension covers [0, {theta.grid.horizon}], needs {u}")
    nodes = theta.grid.nodes
    inner = nodes[nodes < u]
    s = np.append(inner, u)
    theta_s = np.interp(s, nodes, theta.values)
    integral = trapezoid(theta_s * riccati(p, u - s).psi, s)
    rp = riccati(p, u)
    log_price = integral + float(rp.phi) + float(rp.psi) * x
    logger.debug(f"affine bond price t={t}, T={T}: log P = {log_price:.10g}")
    return float(np.exp(log_price))
