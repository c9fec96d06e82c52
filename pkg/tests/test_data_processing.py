from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pytest

from killing_probe.utils.data_processing import (
    cells_dataframe,
    dimension_by_amplitude,
    format_float,
    sweep_dataframe,
    to_jsonable,
)


def _cell(d: int, seed: int, nontrivial, verdict: str, gap: float = 1e9) -> dict:
    return {
        "d": d,
        "seed": seed,
        "obstruction": {"raw_kernel_dim": nontrivial, "nontrivial_kernel_dim": nontrivial, "gap_ratio": gap},
        "oracles": {"collocation": {"nontrivial_dimension": nontrivial}},
        "verdict": verdict,
    }


def test_floats_keep_seventeen_digits() -> None:
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(1.0 / 3.0)) == 1.0 / 3.0
    assert format_float(float("inf")) == "inf"
    assert format_float(-np.inf) == "-inf"
    assert format_float(float("nan")) == "nan"


def test_to_jsonable_converts_numpy_and_dataclasses() -> None:
    @dataclass
    class Point:
        label: str
        coords: np.ndarray

    payload = {
        "n": np.int64(3),
        "ok": np.bool_(True),
        "values": np.array([0.5, 2.0]),
        "nested": [Point("A", np.array([1.0, -1.0]))],
        "missing": None,
    }
    out = to_jsonable(payload)
    assert out == {
        "n": 3,
        "ok": True,
        "values": ["0.5", "2"],
        "nested": [{"label": "A", "coords": ["1", "-1"]}],
        "missing": None,
    }
    json.dumps(out)


def test_to_jsonable_rejects_unknown_objects() -> None:
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_cells_dataframe_columns() -> None:
    cells = [_cell(1, 1, 3, "DIM=3"), {"d": 2, "seed": 1, "obstruction": None, "oracles": {},
                                       "verdict": "INDETERMINATE", "error": {"kind": "NoConvergence"}}]
    df = cells_dataframe(cells)
    assert list(df.columns) == [
        "d", "seed", "raw_dim", "nontrivial_dim", "gap_ratio", "collocation", "holonomy", "verdict", "error",
    ]
    assert df.loc[0, "collocation"] == 3
    assert df.loc[1, "error"] == "NoConvergence"


def test_sweep_table_and_pivot() -> None:
    reports = [
        {"amplitude": 0.0, "cells": [_cell(2, 1, 5, "DIM=5"), _cell(2, 2, 5, "DIM=5")]},
        {"amplitude": 0.01, "cells": [_cell(2, 1, 0, "TRIVIAL_ONLY"), _cell(2, 2, None, "INDETERMINATE")]},
    ]
    table = sweep_dataframe(reports)
    assert len(table) == 4
    assert list(table["amplitude"]) == [0.0, 0.0, 0.01, 0.01]
    pivot = dimension_by_amplitude(reports)
    assert pivot.loc[0.0, 2] == 5
    assert pivot.loc[0.01, 2] == 0


def test_empty_sweep_pivot() -> None:
    assert dimension_by_amplitude([]).empty
