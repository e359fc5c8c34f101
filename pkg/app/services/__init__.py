"""
Services module - Curve conversions, affine machinery, calibration, simulation, estimation and analytics
"""
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
from app.services.crc import (
    CrcEngine,
    crc_step_cir,
    crc_step_vasicek,
    generate_synthetic_panel,
    simulate_paths,
)
from app.services.curves import (
    bond_price_from_forwards,
    forwards_to_yields,
    shift,
    yields_to_forwards,
)
from app.services.estimate import (
    covariation_matrix_rank,
    estimate_cir,
    estimate_vasicek,
    fit_gbm,
    fit_param_process,
    rank_series,
    realized_covariation,
)
from app.services.volterra import calibrate, calibrate_cir_head, calibrate_vasicek, volterra_solve

__all__ = [
    "CrcEngine",
    "bond_price_from_forwards",
    "calibrate",
    "calibrate_cir_head",
    "calibrate_vasicek",
    "convergence_study",
    "covariation_matrix_rank",
    "crc_step_cir",
    "crc_step_vasicek",
    "estimate_cir",
    "estimate_vasicek",
    "example_bond_price",
    "example_short_rate_law",
    "fit_gbm",
    "fit_loglog_slope",
    "fit_param_process",
    "forwards_to_yields",
    "generate_synthetic_panel",
    "mc_mgf",
    "mc_moments",
    "mgf_v2_exact",
    "rank_series",
    "realized_covariation",
    "shift",
    "simulate_paths",
    "volterra_solve",
    "xi_deterministic",
    "yields_to_forwards",
]
