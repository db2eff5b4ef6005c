"""Deterministic report emission: CSV tables and JSON documents.

Floats are formatted with 17 significant digits (round-trip exact), JSON keys
are sorted, and files are written atomically, so identical runs produce
byte-identical bodies regardless of thread count.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .process import RNG_ALGORITHM


def fmt(value) -> str:
    """Canonical cell formatting: shortest exact float, plain ints, raw strings."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def _atomic_write(path, write_fn):
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])

    _atomic_write(path, _write)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    def _write(fh):
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")

    _atomic_write(path, _write)


def run_metadata(config: ExperimentConfig) -> dict:
    """Provenance block embedded in every report: enough to reproduce bit-exactly."""
    return {
        "config_hash": config.hash(),
        "grid_n": config.grid_n,
        "seed": config.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "library_version": __version__,
        "operator": config.operator.describe(),
    }
