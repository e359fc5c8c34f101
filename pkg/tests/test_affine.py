from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import cumulative_simpson

from app.core.exceptions import DomainError, OrderingError, RangeError
from app.models.curves import HullWhiteExtension, TimeGrid
from app.models.params import CirParams, VasicekParams
from app.services.affine import (
    bond_price_affine,
    h_operator,
    hjm_coeffs_cir,
    hjm_coeffs_vasicek,
    integrate_riccati,
    riccati,
    trapezoid_convolution,
)
from app.services.curves import bond_price_from_forwards
from tests.conftest import DELTA


def _random_vasicek(rng: np.random.Generator, n: int) -> VasicekParams:
    return VasicekParams(a=rng.uniform(1e-5, 1e-2, n), beta=rng.uniform(-2.0, -0.05, n))


def _random_cir(rng: np.random.Generator, n: int) -> CirParams:
    return CirParams(alpha=rng.uniform(1e-4, 0.1, n), beta=rng.uniform(-2.0, -0.05, n))


@pytest.mark.parametrize("make", [_random_vasicek, _random_cir])
def test_closed_form_riccati_matches_rk4(make) -> None:
    p = make(np.random.default_rng(2024), 100)
    times, phis, psis = integrate_riccati(p, 30.0, step=1e-3, record_every=100)
    closed = riccati(p, times[:, None])
    assert np.max(np.abs(np.broadcast_to(closed.psi, psis.shape) - psis)) < 1e-8
    assert np.max(np.abs(np.broadcast_to(closed.phi, phis.shape) - phis)) < 1e-8


@pytest.mark.parametrize("make", [_random_vasicek, _random_cir])
def test_riccati_identities(make) -> None:
    p = make(np.random.default_rng(5), 20)
    tau = np.linspace(0.0, 30.0, 301)[:, None]
    rp = riccati(p, tau)
    assert np.allclose(rp.psi_prime[0], -1.0)
    assert np.allclose(rp.psi[0], 0.0)
    alpha = p.alpha if isinstance(p, CirParams) else 0.0
    # psi' = R(psi) - 1 and its derivative
    assert np.allclose(rp.psi_prime, 0.5 * alpha * rp.psi ** 2 + p.beta * rp.psi - 1.0, atol=1e-12)
    assert np.allclose(rp.psi_second, (alpha * rp.psi + p.beta) * rp.psi_prime, atol=1e-12)


def test_cir_riccati_stays_finite_for_large_arguments() -> None:
    rp = riccati(CirParams(alpha=0.5, beta=-3.0), np.array([1e3, 1e6]))
    for values in (rp.psi, rp.psi_prime, rp.psi_second):
        assert np.all(np.isfinite(values))


def test_vasicek_hjm_drift_condition() -> None:
    tau = np.linspace(0.0, 30.0, 30001)
    rng = np.random.default_rng(7)
    for a, beta in zip(rng.uniform(1e-6, 1e-2, 100), rng.uniform(-2.0, -0.05, 100)):
        drift, vol = hjm_coeffs_vasicek(VasicekParams(a=a, beta=beta), tau)
        integrated = cumulative_simpson(vol, x=tau, initial=0.0)
        assert np.max(np.abs(drift - vol * integrated)) < 1e-8


def test_cir_hjm_drift_condition() -> None:
    tau = np.linspace(0.0, 30.0, 30001)
    rng = np.random.default_rng(8)
    draws = zip(rng.uniform(1e-4, 0.1, 100), rng.uniform(-2.0, -0.05, 100), rng.uniform(0.0, 0.1, 100))
    for alpha, beta, x in draws:
        drift, vol = hjm_coeffs_cir(CirParams(alpha=alpha, beta=beta), x, tau)
        integrated = cumulative_simpson(vol, x=tau, initial=0.0)
        assert np.max(np.abs(drift - vol * integrated)) < 1e-8


def test_cir_hjm_coeffs_reject_negative_factor(cir_params: CirParams) -> None:
    with pytest.raises(DomainError):
        hjm_coeffs_cir(cir_params, -0.01, np.linspace(0.0, 1.0, 5))


def test_params_domain() -> None:
    with pytest.raises(DomainError):
        VasicekParams(a=-1.0, beta=-0.5)
    with pytest.raises(DomainError):
        VasicekParams(a=1e-4, beta=0.0)
    with pytest.raises(DomainError):
        CirParams(alpha=0.0, beta=-0.5)


def test_trapezoid_convolution_matches_direct_sum() -> None:
    rng = np.random.default_rng(3)
    kernel, theta = rng.normal(size=12), rng.normal(size=12)
    step = 0.1
    out = trapezoid_convolution(kernel, theta, step)
    for n in range(12):
        terms = np.array([theta[i] * kernel[n - i] for i in range(n + 1)])
        expected = step * (terms.sum() - 0.5 * (terms[0] + terms[-1])) if n else 0.0
        assert out[n] == pytest.approx(expected, abs=1e-14)
    per_path = trapezoid_convolution(kernel, np.vstack([theta, 2.0 * theta]), step)
    assert np.allclose(per_path[1], 2.0 * out)


def test_h_operator_short_end_is_the_factor(vasicek_params: VasicekParams, cir_params: CirParams) -> None:
    grid = TimeGrid(DELTA, 481)
    theta = HullWhiteExtension(grid, np.full(grid.count, 0.01))
    for p in (vasicek_params, cir_params):
        fc = h_operator(p, theta, 0.03)
        assert fc.values[0] == pytest.approx(0.03, abs=1e-15)
    with pytest.raises(DomainError):
        h_operator(cir_params, theta, -0.01)


@pytest.mark.parametrize("which", ["vasicek", "cir"])
def test_affine_bond_price_matches_curve(which: str, vasicek_params: VasicekParams, cir_params: CirParams) -> None:
    p = vasicek_params if which == "vasicek" else cir_params
    grid = TimeGrid(DELTA, 2401)
    theta = HullWhiteExtension(grid, 0.01 + 0.002 * np.sin(grid.nodes))
    fc = h_operator(p, theta, 0.02)
    for T in (0.5, 2.0, 10.0):
        assert bond_price_affine(p, theta, 0.02, 0.0, T) == pytest.approx(bond_price_from_forwards(fc, T), rel=1e-5)
    assert bond_price_affine(p, theta, 0.02, 1.0, 1.0) == 1.0
    with pytest.raises(OrderingError):
        bond_price_affine(p, theta, 0.02, 2.0, 1.0)
    with pytest.raises(RangeError):
        bond_price_affine(p, theta, 0.02, 0.0, 11.0)
