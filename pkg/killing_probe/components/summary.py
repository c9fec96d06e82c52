"""
Human-readable summaries and output files for run reports
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional

import pandas as pd

from killing_probe import __version__
from killing_probe.config import FLOAT_DIGITS, REPORT_SCHEMA_VERSION, TOOL_NAME
from killing_probe.utils.data_processing import (
    cells_dataframe,
    dimension_by_amplitude,
    sweep_dataframe,
    to_jsonable,
)

logger = logging.getLogger(__name__)

SWEEP_CSV_COLUMNS = ["amplitude", "d", "seed", "nontrivial_dim", "gap_ratio"]


def _short_float(value: Any) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return "-"
    return f"{float(value):.3g}"


def _int_or_dash(value: Any) -> str:
    if value is None or pd.isna(value):
        return "-"
    return str(int(value))


def create_cells_table(report: Dict[str, Any]) -> str:
    """Fixed-width table of the (d, seed) cells of one report."""
    df = cells_dataframe(report["cells"])
    if df.empty:
        return "(no cells)"
    formatters = {
        "raw_dim": _int_or_dash,
        "nontrivial_dim": _int_or_dash,
        "collocation": _int_or_dash,
        "holonomy": _int_or_dash,
        "gap_ratio": _short_float,
        "error": lambda v: v if isinstance(v, str) else "-",
    }
    return df.to_string(index=False, formatters=formatters)


def create_summary_table(report: Dict[str, Any]) -> str:
    """Header with metric and rank formula, the cell table, and the per-d verdicts."""
    metric = report["metric"]
    lines = [
        f"{TOOL_NAME} {__version__}  {report['command']}",
        f"metric: {metric['label']}  n={metric['dim']}  signature={metric['signature']}  R={metric['domain_radius']:g}",
    ]
    if report.get("amplitude") is not None:
        lines.append(f"amplitude: {report['amplitude']:g}")
    lines.append("")
    lines.append(create_cells_table(report))
    lines.append("")
    for d, verdict in report["verdicts"].items():
        bound = report["rank_formula"].get(d, {}).get("rank")
        lines.append(f"d={d}: {verdict}  (flat bound {bound})")

    for entry in report.get("crossvalidation") or []:
        certified = entry.get("certified")
        total = len(entry["vectors"])
        if certified is None:
            lines.append(f"crossvalidate d={entry['d']} seed={entry['seed']}: {entry['status']}")
        else:
            worst = max(v["drift"] for v in entry["vectors"])
            lines.append(
                f"crossvalidate d={entry['d']} seed={entry['seed']}: "
                f"{certified}/{total} certified, max drift {_short_float(worst)}"
            )
    return "\n".join(lines)


def create_sweep_summary(reports: List[Dict[str, Any]]) -> str:
    """Nontrivial kernel dimension against amplitude (median over seeds), then the verdicts."""
    if not reports:
        return "(empty sweep)"
    metric = reports[0]["metric"]
    lines = [f"{TOOL_NAME} {__version__}  sweep", f"metric: {metric['label']}  n={metric['dim']}", ""]
    pivot = dimension_by_amplitude(reports)
    lines.append(pivot.to_string(float_format=lambda v: f"{v:g}") if not pivot.empty else "(no cells)")
    lines.append("")
    for report in reports:
        verdicts = "  ".join(f"d={d}: {v}" for d, v in report["verdicts"].items())
        lines.append(f"amplitude {report['amplitude']:g}: {verdicts}")
    return "\n".join(lines)


def create_sweep_csv(reports: List[Dict[str, Any]]) -> str:
    """Plot-ready CSV with one row per (amplitude, d, seed) cell."""
    df = sweep_dataframe(reports)[SWEEP_CSV_COLUMNS]
    return df.to_csv(index=False, float_format=f"%.{FLOAT_DIGITS}g", na_rep="")


def sweep_document(config: Dict[str, Any], reports: List[Dict[str, Any]]) -> Dict[str, Any]:
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "sweep",
        "config": config,
        "amplitudes": [r["amplitude"] for r in reports],
        "reports": reports,
    }


def write_outputs(out_dir: str, document: Dict[str, Any], summary: str,
                  sweep_csv: Optional[str] = None) -> Dict[str, str]:
    """Write report.json, summary.txt and (for sweeps) sweep.csv; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "summary": os.path.join(out_dir, "summary.txt"),
    }
    with open(paths["report"], "w", encoding="utf-8") as f:
        json.dump(to_jsonable(document), f, indent=2)
        f.write("\n")
    with open(paths["summary"], "w", encoding="utf-8") as f:
        f.write(summary + "\n")
    if sweep_csv is not None:
        paths["sweep"] = os.path.join(out_dir, "sweep.csv")
        with open(paths["sweep"], "w", encoding="utf-8") as f:
            f.write(sweep_csv)
    logger.info(f"Wrote {', '.join(paths.values())}")
    return paths
