"""
Utility functions for the pacile toolkit
"""
from typing import Any, Dict, Iterator, Tuple
import enum
import hashlib
import json
import logging
import math
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def hash_string(value: str) -> str:
    """Create SHA256 hash of a string"""
    return hashlib.sha256(value.encode()).hexdigest()


def hash_bytes(*chunks: bytes) -> str:
    """SHA256 over the concatenation of byte chunks"""
    digest = hashlib.sha256()
    for chunk in chunks:
        digest.update(chunk)
    return digest.hexdigest()


def file_sha256(path: Path) -> str:
    """SHA256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def json_serializer(obj: Any) -> Any:
    """JSON serializer for numpy scalars/arrays, enums and paths"""
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _finite_or_none(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _replace_non_finite(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"Type {type(obj)} not serializable")


def _finite_or_none(value: float) -> Any:
    return value if math.isfinite(value) else None


def _replace_non_finite(data: Any) -> Any:
    if isinstance(data, float):
        return _finite_or_none(data)
    if isinstance(data, dict):
        return {k: _replace_non_finite(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [_replace_non_finite(v) for v in data]
    return data


def safe_json_dumps(data: Any) -> str:
    """Serialize to stable JSON (sorted keys, non-finite floats as null)"""
    return json.dumps(
        _replace_non_finite(data),
        default=json_serializer,
        ensure_ascii=False,
        sort_keys=True,
        indent=2,
        allow_nan=False,
    )


def safe_json_loads(json_str: str) -> Any:
    """Safely parse JSON string"""
    try:
        return json.loads(json_str)
    except (json.JSONDecodeError, TypeError):
        return {}


def generate_report_filename(report_type: str, seed: int, extension: str = ".csv") -> str:
    """Deterministic output filename: `<report_type>_<seed><extension>`"""
    return f"{report_type}_{seed}{extension}"


def chunk_ranges(total: int, chunk_size: int) -> Iterator[Tuple[int, int]]:
    """Yield (start, stop) pairs covering range(total) in fixed-size chunks"""
    for start in range(0, total, chunk_size):
        yield start, min(start + chunk_size, total)


def parse_key_value_lines(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse flat `key = value` lines.

    Blank lines and lines starting with '#' are ignored. Later keys override
    earlier ones.
    """
    from pacile.errors import ConfigError

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def frobenius_norm_sq(matrix: np.ndarray) -> float:
    """Squared Frobenius norm"""
    flat = np.ravel(matrix)
    return float(flat @ flat)


def standard_error(values: np.ndarray) -> float:
    """Monte Carlo standard error of the mean; infinite for a single sample"""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return math.inf
    return float(np.std(values, ddof=1) / math.sqrt(values.size))
