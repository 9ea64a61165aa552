"""CSV and JSON writers shared by the command-line front end.

CSV files start with a ``#`` header block (config hash and units), use a
comma separator, LF line endings and 17 significant digits, which round-trips
every double exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNITS_NOTE = "energies in J, time in 1/J"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.16e}"


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# units: {UNITS_NOTE}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Return ``(meta, columns, data)``; non-numeric cells become NaN."""
    meta: dict = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].strip().partition(":")
        meta[key.strip()] = val.strip()
        i += 1
    columns = lines[i].split(",")
    body = [ln.split(",") for ln in lines[i + 1:] if ln]

    def num(s):
        try:
            return float(s)
        except ValueError:
            return float("nan")

    data = np.array([[num(s) for s in r] for r in body]) if body else np.zeros((0, len(columns)))
    return meta, columns, data


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialize {type(o).__name__}")


def series_columns(n_x: int, n_bonds: int) -> list[str]:
    return (["tJ", "total_n", "flux_in", "flux_out"] + [f"n_{l}" for l in range(1, n_x + 1)]
            + [f"j_{l}_{l % n_x + 1}" for l in range(1, n_bonds + 1)])


def series_rows(series):
    for i, t in enumerate(series.times):
        yield ([t, series.densities[i].sum(), series.flux_in[i], series.flux_out[i]]
               + list(series.densities[i]) + list(series.currents[i]))
