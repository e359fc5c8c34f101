import hashlib
import io
import json
import re
import subprocess
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from app.core.config import BASE_DIR, settings
from app.core.exceptions import CrcError, ParseError, ShapeError, ValidationError
from app.core.logger import logger, log_error, log_io_operation
from app.models.panel import YieldPanel, maturity_label
from app.models.params import ModelKind
from app.schemas.reports import PathEnsemble


SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
FLOAT_FORMAT = "%.17g"

ENSEMBLE_MAGIC = b"CRCENS\0\0"
ENSEMBLE_VERSION = 1
_MODEL_CODES = {ModelKind.VASICEK: 0, ModelKind.CIR: 1}

_TAU_HEADER = re.compile(r"^tau_([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)$")
_PANDAS_LINE = re.compile(r"line (\d+)")


def file_checksum(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def git_describe() -> str:
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=BASE_DIR,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"


class YieldPanelRepository:

    def __init__(self):
        logger.debug("YieldPanelRepository initialized")

    def load_yield_panel(self, path, delta: float = settings.DELTA) -> YieldPanel:
        """
        Read a yield CSV: header `date,tau_<years>,...`, ISO dates, decimal yields.

        Leading `#` lines are skipped. Empty cells are gaps. Rows are sorted
        by date; a repeated date is rejected.
        """
        path = Path(path)
        logger.info(f"Loading yield panel from {path}")
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            log_error(e, f"Cannot read yield panel {path}")
            raise ValidationError(f"cannot read {path}: {e}") from e

        skipped = 0
        while skipped < len(lines) and lines[skipped].startswith("#"):
            skipped += 1
        body = lines[skipped:]
        if not body:
            raise ParseError("missing header", line=skipped + 1)
        header_line = skipped + 1

        header = [cell.strip() for cell in body[0].split(",")]
        if header[0] != "date" or len(header) < 2:
            raise ParseError(f"header must start with 'date' and list maturities, got {body[0]!r}", line=header_line)
        maturities = []
        for cell in header[1:]:
            match = _TAU_HEADER.match(cell)
            if match is None:
                raise ParseError(f"bad maturity column {cell!r}, expected tau_<years>", line=header_line)
            maturities.append(float(match.group(1)))

        try:
            raw = pd.read_csv(
                io.StringIO("\n".join(body)),
                dtype=str,
                keep_default_na=False,
                skip_blank_lines=True,
            )
        except pd.errors.ParserError as e:
            found = _PANDAS_LINE.search(str(e))
            line = int(found.group(1)) + skipped if found else None
            raise ParseError(f"malformed row: {e}", line=line) from e

        file_lines = header_line + 1 + np.flatnonzero(
            [bool(text.strip()) for text in body[1:]]
        )
        dates = pd.to_datetime(raw["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
        bad_dates = np.flatnonzero(dates.isna().to_numpy())
        if bad_dates.size:
            k = int(bad_dates[0])
            raise ParseError(f"bad date {raw['date'].iloc[k]!r}", line=int(file_lines[k]))

        values = np.empty((len(raw), len(maturities)))
        for c, column in enumerate(raw.columns[1:]):
            text = raw[column].str.strip()
            numbers = pd.to_numeric(text, errors="coerce")
            bad = np.flatnonzero((numbers.isna() & (text != "")).to_numpy())
            if bad.size:
                k = int(bad[0])
                raise ParseError(f"bad yield {text.iloc[k]!r} in column {column}", line=int(file_lines[k]))
            values[:, c] = numbers.to_numpy(dtype=float)

        if dates.duplicated().any():
            dup = dates[dates.duplicated()].iloc[0]
            raise ValidationError(f"duplicated date {dup.date()} in {path}")
        order = np.argsort(dates.to_numpy(), kind="stable")
        panel = YieldPanel.from_arrays(dates.to_numpy()[order], maturities, values[order], delta=delta)
        log_io_operation("load_yield_panel", f"{panel.n_dates} dates x {panel.n_maturities} maturities")
        return panel

    def write_yield_panel(self, panel: YieldPanel, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = panel.frame.copy()
        frame.columns = [maturity_label(tau) for tau in panel.maturities]
        frame.index = frame.index.strftime("%Y-%m-%d")
        frame.to_csv(path, index_label="date", float_format=FLOAT_FORMAT, lineterminator="\n")
        log_io_operation("write_yield_panel", str(path))
        return path


class ReportRepository:

    def __init__(self):
        logger.debug("ReportRepository initialized")

    def write_csv(self, frame: pd.DataFrame, path: Path, schema: str) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# schema: crc-{schema}/{SCHEMA_VERSION}\n")
            frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        log_io_operation("write_csv", f"{path} ({len(frame)} rows)")
        return path

    def read_csv(self, path: Path) -> pd.DataFrame:
        return pd.read_csv(path, comment="#")

    def write_reports(
        self,
        results: Dict[str, pd.DataFrame],
        out_dir,
        config: Optional[dict] = None,
        seed: Optional[int] = None,
        inputs: Iterable[Path] = (),
        extra_files: Iterable[Path] = (),
    ) -> List[Path]:
        """
        Write one CSV per result (name -> frame) and a manifest.

        The manifest records the config, seed, git describe and sha256
        checksums of inputs and outputs; it has no timestamps so repeated
        runs produce identical files.
        """
        out_dir = Path(out_dir)
        logger.info(f"Writing {len(results)} report(s) to {out_dir}")
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            written = [
                self.write_csv(frame, out_dir / f"{name}.csv", name)
                for name, frame in sorted(results.items())
            ]
            written.extend(Path(p) for p in extra_files)
            manifest = {
                "schema": f"crc-manifest/{SCHEMA_VERSION}",
                "app": settings.APP_NAME,
                "version": settings.APP_VERSION,
                "git": git_describe(),
                "seed": seed,
                "config": config or {},
                "inputs": {str(p): file_checksum(Path(p)) for p in inputs},
                "outputs": {p.name: file_checksum(p) for p in written},
            }
            manifest_path = out_dir / MANIFEST_NAME
            manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            log_io_operation("write_manifest", str(manifest_path))
            return written + [manifest_path]
        except OSError as e:
            log_error(e, f"Cannot write reports to {out_dir}")
            raise CrcError(f"cannot write reports to {out_dir}: {e}") from e

    def load_manifest(self, path) -> dict:
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot load manifest {path}: {e}") from e
        if "config" not in manifest:
            raise ValidationError(f"manifest {path} has no config")
        log_io_operation("load_manifest", str(path))
        return manifest

    def write_ensemble_binary(self, ensemble: PathEnsemble, path) -> Path:
        """
        Header: magic (8 bytes), version and model code (uint32 LE), seed
        (int64 LE), n_paths, n_times, n_maturities (uint64 LE). Body: float64
        LE arrays times, maturities, short_rate, discount, yields, levels,
        betas, rejected, rejection_step, rejection_theta in C order.
        """
        path = Path(path)
        n_paths, n_times = ensemble.short_rate.shape
        n_mat = ensemble.maturities.size
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as fh:
                fh.write(ENSEMBLE_MAGIC)
                fh.write(np.array([ENSEMBLE_VERSION, _MODEL_CODES[ensemble.model]], dtype="<u4").tobytes())
                fh.write(np.array([ensemble.seed], dtype="<i8").tobytes())
                fh.write(np.array([n_paths, n_times, n_mat], dtype="<u8").tobytes())
                for arr in self._ensemble_arrays(ensemble):
                    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        except OSError as e:
            log_error(e, f"Cannot write ensemble to {path}")
            raise CrcError(f"cannot write ensemble to {path}: {e}") from e
        log_io_operation("write_ensemble_binary", f"{path} ({n_paths} paths)")
        return path

    def read_ensemble_binary(self, path) -> PathEnsemble:
        path = Path(path)
        data = path.read_bytes()
        if data[:8] != ENSEMBLE_MAGIC:
            raise ParseError(f"{path} is not an ensemble file")
        version, model_code = np.frombuffer(data, dtype="<u4", count=2, offset=8)
        if version != ENSEMBLE_VERSION:
            raise ParseError(f"unsupported ensemble version {version}")
        seed = int(np.frombuffer(data, dtype="<i8", count=1, offset=16)[0])
        n_paths, n_times, n_mat = (int(v) for v in np.frombuffer(data, dtype="<u8", count=3, offset=24))
        body = np.frombuffer(data, dtype="<f8", offset=48)
        shapes = [
            (n_times,), (n_mat,), (n_paths, n_times), (n_paths, n_times),
            (n_paths, n_times, n_mat), (n_paths, n_times), (n_paths, n_times),
            (n_paths,), (n_paths,), (n_paths,),
        ]
        if body.size != sum(int(np.prod(s)) for s in shapes):
            raise ShapeError(f"{path}: body size does not match header dimensions")
        arrays, offset = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            arrays.append(body[offset: offset + size].reshape(shape).copy())
            offset += size
        model = next(kind for kind, code in _MODEL_CODES.items() if code == model_code)
        return PathEnsemble(
            model=model,
            times=arrays[0],
            maturities=arrays[1],
            short_rate=arrays[2],
            discount=arrays[3],
            yields=arrays[4],
            levels=arrays[5],
            betas=arrays[6],
            rejected=arrays[7].astype(bool),
            rejection_step=arrays[8].astype(np.int64),
            rejection_theta=arrays[9],
            seed=seed,
        )

    @staticmethod
    def _ensemble_arrays(ensemble: PathEnsemble):
        return (
            ensemble.times, ensemble.maturities, ensemble.short_rate, ensemble.discount,
            ensemble.yields, ensemble.levels, ensemble.betas,
            ensemble.rejected.astype(float), ensemble.rejection_step.astype(float),
            ensemble.rejection_theta,
        )


panel_repo = YieldPanelRepository()
report_repo = ReportRepository()


def get_panel_repo() -> YieldPanelRepository:
    return panel_repo


def get_report_repo() -> ReportRepository:
    return report_repo
