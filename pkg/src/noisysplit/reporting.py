"""Output helpers: deterministic number formatting, atomic writes, summary statistics."""
from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np


def format_value(v):
    """6 significant digits for floats, plain ints, empty string for missing values."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.6g}"


def atomic_write_text(path, text):
    """Write via a temp file in the same directory and rename over the target."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write_json(path, obj):
    atomic_write_text(path, dump_json(obj))


def mean_std(values):
    """Mean and sample (n-1) standard deviation; std is 0 for a single value."""
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        raise ValueError("mean_std of an empty sequence")
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std


def format_cell(mean, std):
    """Percent cell in the "87.83±0.31" style."""
    return f"{100 * mean:.2f}±{100 * std:.2f}"


def round6(x):
    return None if x is None else float(format_value(x))
