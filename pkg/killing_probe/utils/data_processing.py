"""
Data processing utilities for killing-probe reports
"""

import math
from dataclasses import fields, is_dataclass
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from killing_probe.config import FLOAT_DIGITS


def format_float(value: float) -> str:
    """Decimal string with FLOAT_DIGITS significant digits."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{FLOAT_DIGITS}g}"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy values and dataclasses to JSON types; floats become decimal strings."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, np.bool_):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()] if obj.ndim else to_jsonable(obj.item())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    raise TypeError(f"Cannot serialize {type(obj).__name__}")


def cells_dataframe(cells: List[Dict[str, Any]]) -> pd.DataFrame:
    """One row per (d, seed) cell of a run report."""
    rows = []
    for cell in cells:
        obstruction = cell.get("obstruction") or {}
        oracles = cell.get("oracles") or {}
        rows.append({
            "d": cell["d"],
            "seed": cell["seed"],
            "raw_dim": obstruction.get("raw_kernel_dim"),
            "nontrivial_dim": obstruction.get("nontrivial_kernel_dim"),
            "gap_ratio": obstruction.get("gap_ratio"),
            "collocation": (oracles.get("collocation") or {}).get("nontrivial_dimension"),
            "holonomy": (oracles.get("holonomy") or {}).get("dimension"),
            "verdict": cell["verdict"],
            "error": (cell.get("error") or {}).get("kind"),
        })
    return pd.DataFrame(rows, columns=[
        "d", "seed", "raw_dim", "nontrivial_dim", "gap_ratio", "collocation", "holonomy", "verdict", "error",
    ])


def sweep_dataframe(reports: List[Dict[str, Any]]) -> pd.DataFrame:
    """Sweep table: amplitude, d, nontrivial_dim, gap_ratio (one row per cell)."""
    rows = []
    for report in reports:
        for cell in report["cells"]:
            obstruction = cell.get("obstruction") or {}
            rows.append({
                "amplitude": report["amplitude"],
                "d": cell["d"],
                "seed": cell["seed"],
                "nontrivial_dim": obstruction.get("nontrivial_kernel_dim"),
                "gap_ratio": obstruction.get("gap_ratio"),
                "verdict": cell["verdict"],
            })
    return pd.DataFrame(rows, columns=["amplitude", "d", "seed", "nontrivial_dim", "gap_ratio", "verdict"])


def dimension_by_amplitude(reports: List[Dict[str, Any]]) -> pd.DataFrame:
    """Majority nontrivial dimension per (amplitude, d) as a pivot table."""
    table = sweep_dataframe(reports)
    if table.empty:
        return table
    table["nontrivial_dim"] = pd.to_numeric(table["nontrivial_dim"], errors="coerce")
    return table.pivot_table(index="amplitude", columns="d", values="nontrivial_dim", aggfunc="median")
