"""Write the bundled synthetic yield panels used as demo input for the commands."""
import argparse
from pathlib import Path

from app.core.config import settings
from app.core.logger import logger
from app.models.processes import ParamProcessSpec
from app.models.state import SimConfig
from app.repo import get_panel_repo
from app.services.crc import default_initial_curve, generate_synthetic_panel

# 33 maturities from 3 months to 30 years
PANEL_MATURITIES = (0.25, 0.5, 0.75) + tuple(float(y) for y in range(1, 31))

PANELS = {
    "vasicek_v1": ("vasicek-v1", 1e-4, -0.5),
    "vasicek_v4": ("vasicek-v4", 1e-4, -0.5),
    "cir_1": ("cir-1", 5e-3, -0.5),
}


def build_panel(preset: str, level: float, beta: float, n_dates: int, seed: int):
    n_steps = n_dates - 1
    spec = ParamProcessSpec.preset(preset, level, beta)
    cfg = SimConfig(
        model=spec.model,
        delta=settings.DELTA,
        n_steps=n_steps,
        n_paths=1,
        param_spec=spec,
        seed=seed,
        initial_curve=default_initial_curve(settings.DELTA, n_steps, PANEL_MATURITIES),
        report_maturities=PANEL_MATURITIES,
    )
    return generate_synthetic_panel(cfg)


def create_panels(out_dir: Path, n_dates: int, seed: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (preset, level, beta) in PANELS.items():
        panel = build_panel(preset, level, beta, n_dates, seed)
        path = get_panel_repo().write_yield_panel(panel, out_dir / f"{name}.csv")
        logger.info(f"Wrote {panel.n_dates} x {panel.n_maturities} panel to {path}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=settings.DATA_DIR)
    parser.add_argument("--dates", type=int, default=500)
    parser.add_argument("--seed", type=int, default=settings.SEED)
    args = parser.parse_args()
    create_panels(args.out, args.dates, args.seed)
