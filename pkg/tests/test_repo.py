from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import CrcError, ParseError, ValidationError
from app.repo import get_panel_repo, get_report_repo
from app.schemas.run_config import RunConfig
from app.services.crc import simulate_paths
from tests.conftest import make_panel, sim_config


def _write(tmp_path: Path, text: str, name: str = "panel.csv") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_panel(tmp_path: Path) -> None:
    path = _write(tmp_path, (
        "# treasury par yields\n"
        "date,tau_0.25,tau_2,tau_10\n"
        "2021-03-02,0.010,0.015,0.020\n"
        "2021-03-01,0.011,,0.021\n"
        "\n"
        "2021-03-03,0.012,0.016,0.022\n"
    ))
    panel = get_panel_repo().load_yield_panel(path)
    assert np.array_equal(panel.maturities, [0.25, 2.0, 10.0])
    assert [d.day for d in panel.dates] == [1, 2, 3]
    assert np.isnan(panel.values[0, 1])
    assert panel.values[1, 0] == 0.010
    curve = panel.curve_at(0)
    assert np.array_equal(curve.maturities, [0.25, 10.0])


@pytest.mark.parametrize("text,line", [
    ("date,tau_1,tau_2\n2020-01-01,0.01,0.02\n2020-01-02,0.01,0.02,0.03\n", 3),
    ("date,tau_1,tau_2\n2020-01-01,0.01,0.02\n2020-13-01,0.01,0.02\n", 3),
    ("date,tau_1,tau_2\n2020-01-01,0.01,abc\n", 2),
    ("# source\ndate,tau_1,tau_2\n2020-01-01,0.01,0.02\n2020-01-02,x,0.02\n", 4),
    ("date,maturity_1\n2020-01-01,0.01\n", 1),
])
def test_parse_errors_carry_line_numbers(tmp_path: Path, text: str, line: int) -> None:
    with pytest.raises(ParseError) as info:
        get_panel_repo().load_yield_panel(_write(tmp_path, text))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_duplicate_dates_are_rejected(tmp_path: Path) -> None:
    path = _write(tmp_path, "date,tau_1\n2020-01-01,0.01\n2020-01-01,0.02\n")
    with pytest.raises(ValidationError) as info:
        get_panel_repo().load_yield_panel(path)
    assert not isinstance(info.value, ParseError)
    with pytest.raises(ValidationError):
        get_panel_repo().load_yield_panel(tmp_path / "missing.csv")


def test_panel_survives_a_write_and_reload(tmp_path: Path) -> None:
    rng = np.random.default_rng(5)
    values = 0.02 + 1e-3 * rng.standard_normal((20, 3))
    values[4, 1] = np.nan
    panel = make_panel(values, (0.5, 2.0, 7.5))
    path = get_panel_repo().write_yield_panel(panel, tmp_path / "out" / "panel.csv")
    assert path.read_text().splitlines()[0] == "date,tau_0.5,tau_2,tau_7.5"
    again = get_panel_repo().load_yield_panel(path)
    assert np.array_equal(again.values, panel.values, equal_nan=True)
    assert again.dates.equals(panel.dates)


def test_reports_carry_schema_and_manifest(tmp_path: Path) -> None:
    frame = pd.DataFrame({"tau": [0.0, 0.5], "theta": [0.01, 0.0125]})
    written = get_report_repo().write_reports(
        {"theta": frame}, tmp_path, config={"command": "calibrate"}, seed=7,
    )
    assert [p.name for p in written] == ["theta.csv", "manifest.json"]
    assert (tmp_path / "theta.csv").read_text().startswith("# schema: crc-theta/1\ntau,theta\n")
    assert get_report_repo().read_csv(tmp_path / "theta.csv").equals(frame)
    manifest = get_report_repo().load_manifest(tmp_path)
    assert manifest["seed"] == 7
    assert manifest["config"] == {"command": "calibrate"}
    assert set(manifest["outputs"]) == {"theta.csv"}


def test_repeated_reports_are_identical(tmp_path: Path) -> None:
    frame = pd.DataFrame({"x": np.linspace(0.0, 1.0, 7) / 3.0})
    for name in ("a", "b"):
        get_report_repo().write_reports({"values": frame}, tmp_path / name, config={"seed": 1}, seed=1)
    for name in ("values.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_without_config_is_rejected(tmp_path: Path) -> None:
    (tmp_path / "manifest.json").write_text(json.dumps({"seed": 1}))
    with pytest.raises(ValidationError):
        get_report_repo().load_manifest(tmp_path)


def test_run_config_round_trips_through_the_manifest(tmp_path: Path) -> None:
    cfg = RunConfig(command="simulate", model="cir-3", level=5e-3, paths=10, maturities=(0.5, 2.0), out=tmp_path)
    get_report_repo().write_reports({}, tmp_path, config=cfg.manifest_dict(), seed=cfg.seed)
    again = RunConfig.from_manifest(get_report_repo().load_manifest(tmp_path))
    assert again.model_dump() == cfg.model_dump()


def test_ensemble_binary_round_trip(tmp_path: Path, inverted_curve) -> None:
    repo = get_report_repo()
    for name, cfg in (
        ("vasicek.bin", sim_config("vasicek-v4", 1e-4, -0.5, n_steps=6, n_paths=3, maturities=(1.0, 2.0))),
        ("cir.bin", sim_config("cir-1", 5e-3, -0.5, n_steps=6, n_paths=3, curve=inverted_curve, seed=19)),
    ):
        ensemble = simulate_paths(cfg)
        back = repo.read_ensemble_binary(repo.write_ensemble_binary(ensemble, tmp_path / name))
        assert back.model is ensemble.model
        assert back.seed == ensemble.seed
        for field in ("times", "maturities", "short_rate", "discount", "yields", "levels", "betas", "rejection_theta"):
            assert np.array_equal(getattr(back, field), getattr(ensemble, field), equal_nan=True), field
        assert np.array_equal(back.rejected, ensemble.rejected)
        assert np.array_equal(back.rejection_step, ensemble.rejection_step)


def test_ensemble_binary_checks_its_header(tmp_path: Path) -> None:
    bogus = tmp_path / "bogus.bin"
    bogus.write_bytes(b"NOTANENS" + bytes(40))
    with pytest.raises(ParseError):
        get_report_repo().read_ensemble_binary(bogus)


def test_unwritable_ensemble_path_is_an_engine_error(tmp_path: Path) -> None:
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory")
    ensemble = simulate_paths(sim_config("vasicek-v1", 1e-4, -0.5, n_steps=4, n_paths=2))
    with pytest.raises(CrcError):
        get_report_repo().write_ensemble_binary(ensemble, blocker / "ensemble.bin")
