from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CONFIG_DIR = Path(__file__).resolve().parents[1] / "killing_probe" / "data" / "configs"


def flat_killing_fields():
    """Chart coefficient fields of v1, v2 and x1 v2 - x2 v1 on the flat plane."""
    return [
        lambda x: np.array([1.0, 0.0]),
        lambda x: np.array([0.0, 1.0]),
        lambda x: np.array([-x[1], x[0]]),
    ]


def load_sample_config(name: str) -> dict:
    return json.loads((CONFIG_DIR / name).read_text(encoding="utf-8"))


def write_config(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path
