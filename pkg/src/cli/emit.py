"""
Artifact emission: CSV tables and JSON reports, written atomically.

Numbers are fixed at 12 significant digits (CSV cells as positional
decimals, never exponent notation) and negative zero is written as zero,
so the same inputs always produce byte-identical files.
"""

import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from src import __version__
from src.core.errors import OutputError
from src.core.settings import SolverSettings

from .config import RunConfig

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
SIGNIFICANT_DIGITS = 12


def atomic_write_text(path: Path, text: str) -> Path:
    """
    Write text through a temporary file in the target directory, then rename.

    Raises:
        OutputError: the directory cannot be created or written
    """
    path = Path(path)
    tmp_name = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(
            "w", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp",
            delete=False, encoding="utf-8", newline=""
        ) as handle:
            tmp_name = handle.name
            handle.write(text)
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name is not None and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise OutputError(f"Cannot write {path}: {e.strerror or e}", path=str(path)) from e
    logger.info(f"✓ Saved {path}")
    return path


def _round(value: float) -> Optional[float]:
    if not math.isfinite(value):
        return None
    rounded = float(FLOAT_FORMAT % value)
    return rounded + 0.0


def normalize(value: Any) -> Any:
    """Make a report JSON-safe: numpy scalars to Python, floats to 12 digits, non-finite to null."""
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if isinstance(value, np.ndarray):
        return normalize(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _round(float(value))
    if isinstance(value, Path):
        return str(value)
    return value


def meta_block(config: RunConfig, settings: SolverSettings) -> Dict[str, Any]:
    """Version, resolved config (as config-file text) and tolerances."""
    return {
        "tool": "oligodyn",
        "version": __version__,
        "command": config.command,
        "config": config.rendered(),
        "tolerances": settings.model_dump(),
    }


def report_json(report: Dict[str, Any], meta: Optional[Dict[str, Any]] = None) -> str:
    payload = dict(report)
    if meta is not None:
        payload["meta"] = meta
    return json.dumps(normalize(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def decimal_text(value: float) -> str:
    """Positional decimal with 12 significant digits; never exponent notation."""
    if not math.isfinite(value):
        return "" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return np.format_float_positional(
        value + 0.0, precision=SIGNIFICANT_DIGITS, unique=False, fractional=False, trim="-"
    )


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return decimal_text(float(value))
    return value


def table_csv(frame: pd.DataFrame) -> str:
    out = frame.copy()
    for column in out.columns:
        series = out[column]
        if pd.api.types.is_float_dtype(series) or series.dtype == object:
            out[column] = series.map(_cell)
    return out.to_csv(index=False, lineterminator="\n")


def emit(payload: Any, fmt: str, path: Path, meta: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a table ("csv") or report ("json") to `path`.

    Args:
        payload: DataFrame for csv, dict for json
        fmt: "csv" or "json"
        path: Destination; parent directories are created
        meta: Optional meta block added to JSON reports

    Raises:
        OutputError: on any I/O failure
        ValueError: unknown format
    """
    if fmt == "csv":
        return atomic_write_text(path, table_csv(payload))
    if fmt == "json":
        return atomic_write_text(path, report_json(payload, meta))
    raise ValueError(f"Unknown format: {fmt}")
