"""Deterministic CSV time series and JSON summaries.

Floats are written with 17 significant digits so every double survives a
text round trip exactly.  No timestamps or host data enter the files, which
makes repeated runs byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .experiments import ScenarioResult, Series, first_law_error, max_relative_entropy
from .thermo import ThermoRecord

BASE_COLUMNS = ("t", "U_S")
TAIL_COLUMNS = ("dA", "S_rel", "dS_dt", "first_law_residual")


def fmt(x) -> str:
    """17-significant-digit text for a float; integers and None pass through."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def csv_columns(series: Series) -> list[str]:
    heat = [f"dQ_{i + 1}" for i in range(series.n_baths)]
    return [*BASE_COLUMNS, *heat, *TAIL_COLUMNS, *series.diagnostics]


def write_series_csv(path, series: Series) -> Path:
    path = Path(path)
    cols = csv_columns(series)
    diag = list(series.diagnostics.items())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, r in enumerate(series.records):
            row = [r.t, r.U_S, *r.dQ, r.dA, r.S_rel, r.dS_dt, r.first_law_residual]
            row += [v[k] for _, v in diag]
            w.writerow([fmt(x) for x in row])
    return path


def _num(s: str) -> float:
    return float(s) if s else math.nan


def read_series_csv(path) -> Series:
    """Inverse of :func:`write_series_csv` (derived record fields are rebuilt)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_baths = sum(1 for c in header if c.startswith("dQ_"))
    n_fixed = len(BASE_COLUMNS) + n_baths + len(TAIL_COLUMNS)
    if header[:2] != list(BASE_COLUMNS) or header[2 + n_baths:n_fixed] != list(TAIL_COLUMNS):
        raise ValueError(f"{path}: unexpected CSV header {header}")
    names = header[n_fixed:]
    records, diags = [], {n: [] for n in names}
    for row in body:
        vals = [_num(x) for x in row]
        t, u = vals[0], vals[1]
        dq = tuple(vals[2:2 + n_baths])
        da, s_rel, ds, res = vals[2 + n_baths:n_fixed]
        records.append(ThermoRecord(t=t, U_S=u, dQ=dq, dA=da, S_rel=s_rel, dS_dt=ds,
                                    first_law_residual=res, U_S_bare=u,
                                    dU_dt=res + sum(dq) + da))
        for n, v in zip(names, vals[n_fixed:]):
            diags[n].append(v)
    return Series(records, n_baths, {n: np.array(v) for n, v in diags.items()})


def series_checks(series: Series) -> dict[str, float]:
    """Series-level verdict values recomputed from a (possibly re-ingested) stream."""
    return {"first_law": first_law_error(series.records), "entropy_sign": max_relative_entropy(series.records)}


# ---------------------------------------------------------------------------
# JSON


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with 17-significant-digit floats (non-finite values become null)."""
    if _level == 0:
        obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def result_summary(result: ScenarioResult, files: dict[str, str] | None = None) -> dict:
    return _plain({
        "scenario": result.scenario,
        "passed": result.passed,
        "parameters": result.parameters,
        "verdicts": {k: v.as_dict() for k, v in result.verdicts.items()},
        "summary": result.summary,
        "spectral_report": result.spectral.as_dict() if result.spectral is not None else None,
        "cycle_reports": [c.as_dict() for c in result.cycles],
        "warnings": result.warnings,
        "series_files": files or {},
    })


def emit_outputs(result: ScenarioResult, out_dir, prefix: str, *, csv_files: bool = True,
                 json_summary: bool = True) -> dict[str, Path]:
    """Write one CSV per series and a JSON summary; returns {label: path}."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths: dict[str, Path] = {}
    if csv_files:
        for name, s in result.series.items():
            paths[name] = write_series_csv(out / f"{prefix}_{name}.csv", s)
    if json_summary:
        files = {k: p.name for k, p in paths.items()}
        p = out / f"{prefix}_summary.json"
        p.write_text(dumps(result_summary(result, files)) + "\n", encoding="utf-8")
        paths["summary"] = p
    return paths
