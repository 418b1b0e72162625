"""Deterministic serialization and all-or-nothing output directories."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
from dataclasses import asdict, is_dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IoError
from .potential import fmt


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def csv_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Comma-separated table; floats at 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def field_csv(values) -> str:
    return csv_table(["vertex", "value"], ((i, float(v)) for i, v in enumerate(np.asarray(values, dtype=float))))


def write_outputs(out_dir: str, files: Mapping[str, str]) -> None:
    """Write every file or none: stage in a sibling temp directory, then move in.

    Existing files of the same name are replaced one by one with ``os.replace``.
    """
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    try:
        os.makedirs(parent, exist_ok=True)
        stage = tempfile.mkdtemp(prefix=".parlab-", dir=parent)
    except OSError as exc:
        raise IoError(f"cannot stage outputs next to {out_dir}: {exc}") from exc
    try:
        for name, text in files.items():
            with open(os.path.join(stage, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        if not os.path.isdir(out_dir):
            os.replace(stage, out_dir)
            stage = None
            return
        for name in files:
            os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    except OSError as exc:
        raise IoError(f"cannot write outputs to {out_dir}: {exc}") from exc
    finally:
        if stage is not None:
            shutil.rmtree(stage, ignore_errors=True)
