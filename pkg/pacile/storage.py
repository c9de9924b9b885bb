"""
Artifact persistence: atomic writes, the regressor/posterior text container,
JSON manifests and CSV tables
"""
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from pacile.errors import DatasetParseError, InputError
from pacile.gaussian_posterior import GaussianPosterior, PriorConfig
from pacile.kernel_features import Kernel
from pacile.models import KernelKind, Parametrization
from pacile.surrogate_regression import LinearRegressor
from pacile.utils import file_sha256, safe_json_dumps

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CONTAINER_VERSION = "1"
REGRESSOR_FORMAT = "pacile-regressor"
POSTERIOR_FORMAT = "pacile-posterior"
SEPARATOR = "---"


# ========== Atomic writes ==========

def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def write_json(path: PathLike, data: Any) -> Path:
    return atomic_write_text(path, safe_json_dumps(data) + "\n")


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    """CSV with round-trippable floats"""
    text = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    path = atomic_write_text(path, text)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def digest_files(paths) -> Dict[str, str]:
    """{file name: sha256}"""
    return {Path(p).name: file_sha256(Path(p)) for p in paths}


# ========== Containers ==========

def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _render(header: Dict[str, Any], w: np.ndarray) -> str:
    lines = [f"{key}={_format_value(value)}" for key, value in header.items()]
    lines.append(SEPARATOR)
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in w)
    return "\n".join(lines) + "\n"


def _regressor_header(regressor: LinearRegressor, fmt: str) -> Dict[str, Any]:
    return {
        "format": fmt,
        "version": CONTAINER_VERSION,
        "dim_h": regressor.dim_h,
        "dim_f": regressor.dim_f,
        "kernel": regressor.kernel.kind,
        "bandwidth": regressor.kernel.bandwidth,
        "lambda": regressor.lam,
        "dataset_sha256": regressor.dataset_sha256,
    }


def save_regressor(path: PathLike, regressor: LinearRegressor) -> Path:
    return atomic_write_text(path, _render(_regressor_header(regressor, REGRESSOR_FORMAT), regressor.w))


def save_posterior(path: PathLike, q: GaussianPosterior, prior: Optional[PriorConfig] = None) -> Path:
    header = _regressor_header(q.mean, POSTERIOR_FORMAT)
    header["variance"] = float(q.variance)
    header["parametrization"] = q.parametrization
    if prior is not None:
        header.update(prior_alpha=prior.alpha, prior_t=prior.t, prior_kappa=prior.kappa, prior_m=prior.m)
    path = atomic_write_text(path, _render(header, q.mean.w))
    logger.info(f"Saved posterior ({q.mean.dim_h}x{q.mean.dim_f}, variance {q.variance:.6g}) to {path}")
    return path


def _parse_container(path: Path) -> Tuple[Dict[str, str], np.ndarray]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    lines = text.splitlines()
    if SEPARATOR not in lines:
        raise DatasetParseError(f"{path}: missing '{SEPARATOR}' separator")
    split = lines.index(SEPARATOR)
    header: Dict[str, str] = {}
    for lineno, line in enumerate(lines[:split], start=1):
        if "=" not in line:
            raise DatasetParseError(f"{path}: expected key=value", line=lineno)
        key, value = line.split("=", 1)
        header[key] = value

    if header.get("version") != CONTAINER_VERSION:
        raise DatasetParseError(f"{path}: unsupported container version {header.get('version')!r}")
    try:
        dim_h, dim_f = int(header["dim_h"]), int(header["dim_f"])
    except (KeyError, ValueError) as e:
        raise DatasetParseError(f"{path}: bad or missing dimensions") from e

    rows = []
    for lineno, line in enumerate(lines[split + 1:], start=split + 2):
        try:
            row = [float(v) for v in line.split()]
        except ValueError as e:
            raise DatasetParseError(f"{path}: non-numeric weight", line=lineno) from e
        if len(row) != dim_f:
            raise DatasetParseError(f"{path}: expected {dim_f} values, got {len(row)}", line=lineno)
        rows.append(row)
    if len(rows) != dim_h:
        raise DatasetParseError(f"{path}: expected {dim_h} rows, got {len(rows)}")
    return header, np.array(rows, dtype=float)


def _optional_float(value: Optional[str]) -> Optional[float]:
    return float(value) if value else None


def _regressor_from(header: Dict[str, str], w: np.ndarray) -> LinearRegressor:
    kernel = Kernel(KernelKind(header["kernel"]), _optional_float(header.get("bandwidth")))
    return LinearRegressor(w, kernel, _optional_float(header.get("lambda")), header.get("dataset_sha256") or None)


def load_regressor(path: PathLike) -> LinearRegressor:
    header, w = _parse_container(Path(path))
    if header.get("format") not in (REGRESSOR_FORMAT, POSTERIOR_FORMAT):
        raise DatasetParseError(f"{path}: not a regressor container")
    return _regressor_from(header, w)


def load_posterior(path: PathLike) -> Tuple[GaussianPosterior, Optional[PriorConfig]]:
    """The posterior and, when recorded, the prior it was trained against"""
    header, w = _parse_container(Path(path))
    if header.get("format") != POSTERIOR_FORMAT:
        raise DatasetParseError(f"{path}: not a posterior container")
    q = GaussianPosterior(
        _regressor_from(header, w),
        float(header["variance"]),
        Parametrization(header.get("parametrization", Parametrization.CUSTOM.value)),
    )
    prior = None
    if header.get("prior_alpha"):
        prior = PriorConfig(
            alpha=float(header["prior_alpha"]),
            t=float(header["prior_t"]),
            kappa=float(header["prior_kappa"]),
            m=int(header["prior_m"]),
        )
    return q, prior
