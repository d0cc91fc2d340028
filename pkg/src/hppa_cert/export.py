"""CSV and JSON emitters with deterministic formatting and atomic writes."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .dynamics import Trajectory


def format_real(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def decimal_str(n: int) -> str:
    """Exact decimal text of an integer of any size."""
    limit = getattr(sys, "get_int_max_str_digits", lambda: 0)()
    if limit and int(n).bit_length() > 3 * limit:
        sys.set_int_max_str_digits(0)
        try:
            return str(int(n))
        finally:
            sys.set_int_max_str_digits(limit)
    return str(int(n))


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return decimal_str(obj)
    if isinstance(obj, (float, np.floating)):
        s = format_real(obj)
        return s if math.isfinite(float(obj)) else json.dumps(s)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def to_json(obj, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and reals printed with 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def trajectory_csv(traj: Trajectory) -> str:
    header = ["n", "alpha_n", "beta_n", "err_norm"] + [f"x_{i}" for i in range(traj.dim)]
    rows = ([str(n), format_real(traj.alpha[n]), format_real(traj.beta[n]), format_real(traj.err_norm[n])]
            + [format_real(v) for v in traj.points[n]] for n in range(len(traj)))
    return _csv_text(header, rows)


def rate_table_csv(rows) -> str:
    """Rows ``(rate_name, k, g, value)`` with exact decimal values; ``g`` may be empty."""
    return _csv_text(["rate_name", "k", "g", "value_decimal"],
                     ([name, str(k), str(g), decimal_str(v)] for name, k, g, v in rows))


def residual_csv(res) -> str:
    """Plot-ready residual series with precomputed log10 columns (blank where undefined)."""
    res = np.asarray(res, dtype=float)

    def log10(v):
        return format_real(math.log10(v)) if v > 0 else ""

    rows = ([str(n), format_real(r), log10(float(n)), log10(r)] for n, r in enumerate(res))
    return _csv_text(["n", "residual", "log10_n", "log10_residual"], rows)
