import argparse
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import AdmissibilityError, EmptyEnsembleError, RangeError, ValidationError
from app.core.logger import logger
from app.models.curves import ForwardCurve, TimeGrid
from app.models.params import CirParams, ModelKind, make_params
from app.models.state import SimConfig, required_nodes
from app.repo import get_panel_repo, get_report_repo
from app.schemas.run_config import COMMANDS, RunConfig
from app.services.analytics import convergence_study, mc_moments, mgf_v2_exact
from app.services.crc import default_initial_curve, simulate_paths
from app.services.curves import yields_to_forwards
from app.services.estimate import estimate_cir, estimate_vasicek, rank_series
from app.services.volterra import calibrate, calibrate_cir_head, calibrate_vasicek


class UsageError(ValidationError):
    """Unknown flag or malformed command line"""


class CommandParser(argparse.ArgumentParser):

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> CommandParser:
    parser = CommandParser(prog="crc", description="Consistent-recalibration rate models")
    parser.add_argument("--config", type=Path, help="re-run the config stored in a manifest")
    sub = parser.add_subparsers(dest="command", parser_class=CommandParser)

    def common(p: argparse.ArgumentParser, model_default: str = "vasicek"):
        p.add_argument("--model", default=model_default)
        p.add_argument("--param-process", dest="param_process", default="constant")
        p.add_argument("--level", type=float, default=settings.DEFAULT_LEVEL)
        p.add_argument("--beta", type=float, default=settings.DEFAULT_BETA)
        p.add_argument("--delta", type=float, default=settings.DELTA)
        p.add_argument("--seed", type=int, default=settings.SEED)
        p.add_argument("--out", type=Path, default=settings.OUTPUT_DIR)

    def simulation(p: argparse.ArgumentParser):
        p.add_argument("--steps", type=int, default=240)
        p.add_argument("--paths", type=int, default=1000)
        p.add_argument("--threads", type=int, default=settings.THREADS)
        p.add_argument("--block-size", dest="block_size", type=int, default=settings.BLOCK_SIZE)
        p.add_argument("--flat-rate", dest="flat_rate", type=float, default=settings.FLAT_RATE)
        p.add_argument("--clamp-theta", dest="clamp_theta", action="store_true",
                       help="clip negative CIR drift at zero instead of rejecting the path (changes the law)")

    p = sub.add_parser("estimate", help="rolling parameter estimates from a yield panel")
    common(p)
    p.add_argument("--input", type=Path)
    p.add_argument("--tau1", type=float, default=settings.TAU1)
    p.add_argument("--tau2", type=float, default=settings.TAU2)
    p.add_argument("--window", type=int, default=settings.WINDOW)
    p.add_argument("--exact", action="store_true")

    p = sub.add_parser("calibrate", help="Hull-White extension for one date of a yield panel")
    common(p)
    p.add_argument("--input", type=Path)
    p.add_argument("--date")
    p.add_argument("--horizon", type=float)

    p = sub.add_parser("simulate", help="simulate a path ensemble")
    common(p)
    simulation(p)
    p.add_argument("--maturities", type=_floats, default=[1.0, 5.0])
    p.add_argument("--input", type=Path)
    p.add_argument("--date")
    p.add_argument("--binary", action="store_true")

    p = sub.add_parser("converge", help="weak convergence of the short-rate MGF")
    common(p, model_default="vasicek-v2")
    simulation(p)
    p.add_argument("--deltas", type=_floats, default=[1 / 10, 1 / 20, 1 / 40, 1 / 80])
    p.add_argument("--eta", type=float, default=20.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--reference", default="oracle")

    p = sub.add_parser("rank", help="rolling covariation rank of a yield panel")
    common(p)
    p.add_argument("--input", type=Path)
    p.add_argument("--window", type=int, default=settings.WINDOW)
    p.add_argument("--threshold", dest="rank_threshold", type=float, default=settings.RANK_THRESHOLD)

    p = sub.add_parser("moments", help="moments of the simulated short rate")
    common(p)
    simulation(p)
    p.add_argument("--t", type=float)
    return parser


def parse_run_config(argv: List[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.config is not None:
        manifest = get_report_repo().load_manifest(args.config)
        logger.info(f"Re-running config from {args.config}")
        return RunConfig.from_manifest(manifest)
    if args.command is None:
        raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
    fields = {k: v for k, v in vars(args).items() if k != "config" and v is not None}
    for key in ("maturities", "deltas"):
        if key in fields:
            fields[key] = tuple(fields[key])
    return RunConfig(**fields)


def _load_panel(cfg: RunConfig):
    return get_panel_repo().load_yield_panel(cfg.input, delta=cfg.delta)


def _panel_curve(cfg: RunConfig, grid: TimeGrid) -> ForwardCurve:
    panel = _load_panel(cfg)
    t_index = panel.n_dates - 1 if cfg.date is None else panel.date_index(cfg.date)
    return yields_to_forwards(panel.curve_at(t_index), grid)


def _write(cfg: RunConfig, results: Dict[str, pd.DataFrame], extra=()) -> None:
    get_report_repo().write_reports(
        results, cfg.out, config=cfg.manifest_dict(), seed=cfg.seed,
        inputs=cfg.input_paths(), extra_files=extra,
    )


def _sim_config(cfg: RunConfig, maturities=()) -> SimConfig:
    needed = required_nodes(cfg.delta, cfg.steps, tuple(maturities))
    if cfg.input is not None:
        curve = _panel_curve(cfg, TimeGrid(cfg.delta, needed))
    else:
        curve = default_initial_curve(cfg.delta, cfg.steps, maturities, rate=cfg.flat_rate)
    return SimConfig(
        model=cfg.model_kind,
        delta=cfg.delta,
        n_steps=cfg.steps,
        n_paths=cfg.paths,
        param_spec=cfg.param_spec(),
        seed=cfg.seed,
        initial_curve=curve,
        report_maturities=tuple(maturities),
        block_size=cfg.block_size,
        threads=cfg.threads,
        clamp_theta=cfg.clamp_theta,
    )


def run_estimate(cfg: RunConfig) -> int:
    panel = _load_panel(cfg)
    estimator = estimate_vasicek if cfg.model_kind is ModelKind.VASICEK else estimate_cir
    frame = estimator(panel, cfg.tau1, cfg.tau2, cfg.window, exact=cfg.exact)
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame["window_valid"] = frame["window_valid"].astype(int)
    _write(cfg, {"estimates": frame})
    return 0


def run_calibrate(cfg: RunConfig) -> int:
    panel = _load_panel(cfg)
    horizon = cfg.horizon or float(min(panel.maturities[-1], 30.0))
    grid = TimeGrid(cfg.delta, int(np.floor(horizon / cfg.delta + 1e-9)) + 1)
    t_index = panel.n_dates - 1 if cfg.date is None else panel.date_index(cfg.date)
    fc = yields_to_forwards(panel.curve_at(t_index), grid)
    p = make_params(cfg.model_kind, cfg.level, cfg.beta)
    if isinstance(p, CirParams):
        theta0, theta_delta = calibrate_cir_head(p, fc, fc.short_rate)
        if theta0 < 0 or theta_delta < 0:
            raise AdmissibilityError(t=0.0, theta0=min(theta0, theta_delta))
        theta = calibrate(p, fc, fc.short_rate)
    else:
        theta = calibrate_vasicek(p, fc)
    frame = pd.DataFrame({
        "tau": grid.nodes,
        "theta": theta.values,
        "h": fc.values,
        "dh": fc.deriv_values,
    })
    _write(cfg, {"theta": frame})
    return 0


def run_simulate(cfg: RunConfig) -> int:
    ensemble = simulate_paths(_sim_config(cfg, cfg.maturities))
    if ensemble.n_rejected == ensemble.n_paths:
        raise EmptyEnsembleError(f"all {ensemble.n_paths} paths rejected")
    extra = []
    if cfg.binary:
        extra.append(get_report_repo().write_ensemble_binary(ensemble, Path(cfg.out) / "ensemble.bin"))
    summary = pd.DataFrame({
        "paths": [ensemble.n_paths],
        "rejected": [ensemble.n_rejected],
        "first_rejection_step": [int(ensemble.rejection_step[ensemble.rejected].min()) if ensemble.n_rejected else -1],
    })
    _write(cfg, {"ensemble": ensemble.to_frame(), "rejections": summary}, extra)
    return 0


def run_converge(cfg: RunConfig) -> int:
    horizon = cfg.horizon or 1.0
    template = _sim_config(cfg.model_copy(update={"steps": int(round(horizon / cfg.deltas[0])), "delta": cfg.deltas[0]}))
    if cfg.input is not None:
        def curve_factory(delta: float, n_steps: int) -> ForwardCurve:
            return _panel_curve(cfg, TimeGrid(delta, required_nodes(delta, n_steps)))
    else:
        def curve_factory(delta: float, n_steps: int) -> ForwardCurve:
            return default_initial_curve(delta, n_steps, rate=cfg.flat_rate)

    oracle, reference = None, cfg.reference
    if cfg.preset_name == "vasicek-v2":
        fine = curve_factory(cfg.deltas[-1], int(round(horizon / cfg.deltas[-1])))
        oracle = mgf_v2_exact(cfg.eta, horizon, fine, cfg.level, cfg.beta)
    elif reference == "oracle":
        logger.info(f"No closed form for {cfg.preset_name}; using the intercept reference")
        reference = "intercept"
    report = convergence_study(
        template, cfg.deltas, cfg.eta, curve_factory=curve_factory, oracle=oracle, horizon=horizon, reference=reference,
    )
    summary = pd.DataFrame({"key": list(report.summary()), "value": [str(v) for v in report.summary().values()]})
    usable = ~report.noise_floor
    loglog = pd.DataFrame({"delta": report.deltas[usable], "error": report.errors[usable]})
    _write(cfg, {"convergence": report.to_frame(), "convergence_summary": summary, "convergence_loglog": loglog})
    return 0


def run_rank(cfg: RunConfig) -> int:
    frame = rank_series(_load_panel(cfg), cfg.window, cfg.rank_threshold)
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame["window_valid"] = frame["window_valid"].astype(int)
    _write(cfg, {"rank": frame})
    return 0


def run_moments(cfg: RunConfig) -> int:
    ensemble = simulate_paths(_sim_config(cfg))
    t = cfg.t if cfg.t is not None else ensemble.times[-1]
    if t > ensemble.times[-1] + 1e-12:
        raise RangeError(f"t = {t} beyond the simulated horizon {ensemble.times[-1]}")
    report = mc_moments(ensemble, ensemble.times[ensemble.step_index(t)])
    _write(cfg, {"moments": report.to_frame()})
    return 0


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "estimate": run_estimate,
    "calibrate": run_calibrate,
    "simulate": run_simulate,
    "converge": run_converge,
    "rank": run_rank,
    "moments": run_moments,
}
