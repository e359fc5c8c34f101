from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from app.core.exceptions import ConfigError, DomainError, EmptyEnsembleError, RangeError
from app.models.params import ModelKind, VasicekParams
from app.schemas.reports import PathEnsemble
from app.services.analytics import (
    convergence_study,
    example_bond_price,
    example_short_rate_law,
    fit_loglog_slope,
    mc_mgf,
    mc_moments,
    mgf_v2_exact,
    xi_deterministic,
)
from app.services.crc import default_initial_curve, simulate_paths
from app.services.curves import bond_price_from_forwards
from tests.conftest import flat_curve, sim_config


def _ensemble(terminal: np.ndarray, rejected: np.ndarray | None = None) -> PathEnsemble:
    n = terminal.size
    rejected = np.zeros(n, dtype=bool) if rejected is None else rejected
    short_rate = np.column_stack([np.full(n, 0.02), terminal])
    return PathEnsemble(
        model=ModelKind.VASICEK,
        times=np.array([0.0, 1.0]),
        short_rate=short_rate,
        discount=np.ones((n, 2)),
        yields=np.zeros((n, 2, 0)),
        maturities=np.zeros(0),
        levels=np.full((n, 2), 1e-4),
        betas=np.full((n, 2), -0.5),
        rejected=rejected,
        rejection_step=np.where(rejected, 0, -1),
        rejection_theta=np.full(n, np.nan),
    )


def _xi_by_quadrature(t: float, y0: float, m: float, mu: float, beta: float) -> float:
    def level(s: float) -> float:
        return y0 * math.exp(mu * s) + (m / mu * math.expm1(mu * s) if mu else m * s)

    value, _ = quad(lambda s: level(s) * math.exp(2 * beta * (t - s)), 0.0, t, epsabs=1e-15, epsrel=1e-12)
    return value


def test_xi_starts_at_zero() -> None:
    assert xi_deterministic(0.0, 1e-4, 3e-4, -1.0, -0.5) == 0.0
    assert xi_deterministic(0.0, 1e-4, 3e-4, 0.0, -0.5) == 0.0


@pytest.mark.parametrize("mu", [0.0, -0.3, -1.0, -2.5])
def test_xi_matches_quadrature(mu: float) -> None:
    for t in (0.1, 1.0, 5.0):
        expected = _xi_by_quadrature(t, 1e-4, 3e-4, mu, -0.5)
        assert xi_deterministic(t, 1e-4, 3e-4, mu, -0.5) == pytest.approx(expected, rel=1e-9)


def test_xi_is_continuous_in_mu() -> None:
    at_zero = xi_deterministic(1.0, 1e-4, 3e-4, 0.0, -0.5)
    near_zero = xi_deterministic(1.0, 1e-4, 3e-4, -1e-8, -0.5)
    assert near_zero == pytest.approx(at_zero, rel=1e-6)
    at_two_beta = xi_deterministic(1.0, 1e-4, 3e-4, -1.0, -0.5)
    near_two_beta = xi_deterministic(1.0, 1e-4, 3e-4, -1.0 + 1e-7, -0.5)
    assert near_two_beta == pytest.approx(at_two_beta, rel=1e-5)


def test_xi_vectorised_and_domain() -> None:
    t = np.array([0.0, 0.5, 1.0])
    values = xi_deterministic(t, 1e-4, 0.0, 0.0, -0.5)
    assert np.allclose(values, 1e-4 * np.expm1(-t) / -1.0)
    with pytest.raises(DomainError):
        xi_deterministic(1.0, 1e-4, 0.0, 0.1, -0.5)
    with pytest.raises(DomainError):
        xi_deterministic(1.0, 1e-4, 0.0, 0.0, 0.0)


def test_short_rate_law_on_a_flat_curve() -> None:
    a, beta, c = 1e-4, -0.5, 0.02
    curve = flat_curve(c, count=481)
    p = VasicekParams(a=a, beta=beta)
    mean, var = example_short_rate_law(0.0, curve, p)
    assert (mean, var) == (c, 0.0)
    mean, var = example_short_rate_law(1.0, curve, p)
    assert mean == pytest.approx(c + a * math.expm1(beta) ** 2 / (2 * beta ** 2), abs=1e-8)
    assert var == pytest.approx(a / (2 * beta) * math.expm1(2 * beta), rel=1e-12)
    with pytest.raises(RangeError):
        example_short_rate_law(3.0, curve, p)


def test_ramp_mgf_is_the_gaussian_transform() -> None:
    curve = flat_curve(0.01, count=481)
    assert mgf_v2_exact(0.0, 1.0, curve, 0.01, -0.5) == 1.0
    mean, var = example_short_rate_law(1.0, curve, VasicekParams(a=0.01, beta=-0.5), m=0.03, mu=0.0)
    assert mgf_v2_exact(20.0, 1.0, curve, 0.01, -0.5) == pytest.approx(
        math.exp(20.0 * mean + 200.0 * var), rel=1e-10
    )
    deterministic = mgf_v2_exact(5.0, 1.0, curve, 0.0, -0.5)
    assert deterministic == pytest.approx(math.exp(5.0 * 0.01), rel=1e-7)


def test_example_bond_price_limits() -> None:
    curve = flat_curve(0.02, count=2401)
    assert example_bond_price(1.0, 1.0, curve, -0.5, 0.03, 1e-4) == 1.0
    assert example_bond_price(0.0, 5.0, curve, -0.5, 0.02, 0.0) == pytest.approx(
        bond_price_from_forwards(curve, 5.0), rel=1e-12
    )
    higher = example_bond_price(1.0, 5.0, curve, -0.5, 0.03, 0.0)
    lower = example_bond_price(1.0, 5.0, curve, -0.5, 0.01, 0.0)
    assert higher < lower
    with pytest.raises(RangeError):
        example_bond_price(2.0, 1.0, curve, -0.5, 0.02, 0.0)


def test_mc_mgf_edge_cases() -> None:
    ensemble = _ensemble(np.array([0.01, 0.02, 0.03]))
    at_zero = mc_mgf(ensemble, 0.0, 1.0)
    assert at_zero.estimate == 1.0
    assert at_zero.standard_error == 0.0
    single = mc_mgf(_ensemble(np.array([0.02])), 10.0, 1.0)
    assert single.estimate == pytest.approx(math.exp(0.2))
    assert not single.se_defined
    rejected = np.array([True, False, True])
    partial = mc_mgf(_ensemble(np.array([np.nan, 0.02, np.nan]), rejected), 1.0, 1.0)
    assert partial.n_used == 1 and partial.n_rejected == 2
    with pytest.raises(EmptyEnsembleError):
        mc_mgf(_ensemble(np.array([np.nan]), np.array([True])), 1.0, 1.0)


def test_moments_of_a_constant_sample() -> None:
    report = mc_moments(_ensemble(np.full(50, 0.25)), 1.0, blocks=10)
    assert report.sd == 0.0
    assert not report.skew_defined
    assert math.isnan(report.skewness)
    assert not report.se_valid
    with pytest.raises(EmptyEnsembleError):
        mc_moments(_ensemble(np.array([0.01, 0.02, 0.03])), 1.0)


def test_moments_of_gaussian_and_laplace_samples() -> None:
    rng = np.random.default_rng(17)
    gaussian = mc_moments(_ensemble(0.02 + 0.01 * rng.standard_normal(10_000)), 1.0, blocks=100)
    assert abs(gaussian.skewness) < 4.0 * gaussian.se_skewness
    assert abs(gaussian.excess_kurtosis) < 4.0 * gaussian.se_excess_kurtosis
    assert gaussian.mean == pytest.approx(0.02, abs=4.0 * gaussian.se_mean)
    heavy = mc_moments(_ensemble(0.02 + 0.01 * rng.laplace(0.0, 1.0, 10_000)), 1.0, blocks=100)
    assert heavy.excess_kurtosis > 2.0 * heavy.se_excess_kurtosis
    frame = heavy.to_frame()
    assert frame["stat"].tolist() == ["mean", "sd", "skewness", "excess_kurtosis"]


def test_loglog_slope_self_test() -> None:
    deltas = np.array([0.1, 0.05, 0.025, 0.0125])
    slope, intercept = fit_loglog_slope(deltas, 3.0 * deltas)
    assert slope == pytest.approx(1.0, abs=1e-6)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-6)
    slope, _ = fit_loglog_slope(deltas, deltas ** 2)
    assert slope == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(RangeError):
        fit_loglog_slope(deltas, np.zeros(4))


def test_convergence_study_validates_its_grid() -> None:
    template = sim_config("vasicek-v1", 1e-4, -0.5, n_steps=10, n_paths=10, delta=0.1)
    with pytest.raises(ConfigError):
        convergence_study(template, [0.1, 0.05], 1.0, reference="intercept")
    with pytest.raises(ConfigError):
        convergence_study(template, [0.1, 0.05, 0.05], 1.0, reference="intercept")
    with pytest.raises(ConfigError):
        convergence_study(template, [0.1, 0.05, 0.03], 1.0, reference="intercept")
    with pytest.raises(ConfigError):
        convergence_study(template, [0.1, 0.05, 0.025], 1.0, reference="oracle")


def test_convergence_study_flags_degenerate_errors() -> None:
    template = sim_config("vasicek-v1", 1e-4, -0.5, n_steps=10, n_paths=20, delta=0.1)
    report = convergence_study(template, [0.1, 0.05, 0.025], 0.0, oracle=1.0)
    assert np.all(report.errors == 0.0)
    assert not report.reliable
    assert math.isnan(report.slope)
    assert report.notes
    assert len(report.to_frame()) == 3


def test_convergence_study_uses_common_random_numbers() -> None:
    template = sim_config("vasicek-v1", 1e-4, -0.5, n_steps=10, n_paths=50, delta=0.1)
    report = convergence_study(template, [0.1, 0.05, 0.025], 1.0, reference="intercept")
    # the same Brownian paths drive every step size, so the estimates barely move
    assert np.ptp(report.estimates) < 1e-3
    assert report.intercept == pytest.approx(report.estimates[-1], abs=1e-3)


@pytest.mark.slow
def test_ramp_model_converges_at_first_order() -> None:
    deltas = [1 / 10, 1 / 20, 1 / 40, 1 / 80]
    template = sim_config(
        "vasicek-v2", 0.01, -0.5, n_steps=10, n_paths=10_000, delta=deltas[0], rate=0.01,
    )
    report = convergence_study(
        template, deltas, 20.0,
        curve_factory=lambda delta, n_steps: default_initial_curve(delta, n_steps, rate=0.01),
        reference="intercept",
    )
    assert report.reliable
    assert report.slope == pytest.approx(1.0, abs=0.35)


@pytest.mark.slow
@pytest.mark.parametrize("eta", [2.0, 20.0])
def test_ramp_model_extrapolates_to_the_closed_form(eta: float) -> None:
    deltas = [1 / 10, 1 / 20, 1 / 40, 1 / 80]
    template = sim_config(
        "vasicek-v2", 0.01, -0.5, n_steps=10, n_paths=10_000, delta=deltas[0], rate=0.01,
    )
    oracle = mgf_v2_exact(eta, 1.0, default_initial_curve(deltas[-1], 80, rate=0.01), 0.01, -0.5)
    report = convergence_study(
        template, deltas, eta,
        curve_factory=lambda delta, n_steps: default_initial_curve(delta, n_steps, rate=0.01),
        oracle=oracle,
    )
    assert report.reference == "oracle"
    assert report.oracle == oracle
    assert np.allclose(report.errors, np.abs(report.estimates - oracle))
    # a step-independent bias would survive the extrapolation and show up here
    assert abs(report.intercept - oracle) < 4.0 * report.intercept_se


@pytest.mark.slow
@pytest.mark.parametrize("preset,level", [("vasicek-v1", 1e-4), ("vasicek-v2", 1e-4)])
def test_gaussian_models_have_gaussian_short_rates(preset: str, level: float) -> None:
    ensemble = simulate_paths(sim_config(preset, level, -0.5, n_steps=240, n_paths=10_000))
    report = mc_moments(ensemble, 1.0)
    assert abs(report.skewness) < 4.0 * report.se_skewness
    assert abs(report.excess_kurtosis) < 4.0 * report.se_excess_kurtosis


@pytest.mark.slow
@pytest.mark.parametrize("preset,level", [("vasicek-v3", 1e-6), ("vasicek-v4", 1e-4)])
def test_stochastic_volatility_models_are_leptokurtic(preset: str, level: float) -> None:
    ensemble = simulate_paths(sim_config(preset, level, -0.5, n_steps=240, n_paths=10_000))
    report = mc_moments(ensemble, 1.0)
    assert report.excess_kurtosis > 2.0 * report.se_excess_kurtosis
