"""Deterministic CSV/JSON/plot-data writers.

Floats in CSV files use 17 significant digits so values round-trip exactly;
JSON uses Python's shortest round-trip representation with sorted keys.
Nothing time- or host-dependent is written.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .coexistence import Branch
from .grid import AgeGrid, SpatialGrid

BRANCH_HEADER = ["index", "eta", "xi", "u_sup", "v_sup", "u_l2", "v_l2",
                 "newton_residual", "sp_res_u", "sp_res_v"]


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(fmt(v) if not isinstance(v, str) else v for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")
    return path


def field_l2(sg: SpatialGrid, ag: AgeGrid, f: np.ndarray) -> float:
    """Discrete ``L2(J x Omega)`` norm: trapezoid in age, midpoint sum in space."""
    return float(math.sqrt(sg.h * float(ag.weights @ np.sum(f * f, axis=1))))


def branch_rows(branch: Branch, sg: SpatialGrid, ag: AgeGrid) -> list[list]:
    rows = []
    for i, p in enumerate(branch.points):
        rows.append([i, p.eta, p.xi, p.u_sup, p.v_sup, field_l2(sg, ag, p.u),
                     field_l2(sg, ag, p.v), p.newton_residual, p.sp_residuals[0],
                     p.sp_residuals[1]])
    return rows


def export_branch(branch: Branch, directory, config_hash: str, sg: SpatialGrid,
                  ag: AgeGrid) -> list[Path]:
    """Write ``branch.csv``, ``branch_meta.json`` and ``branch.plot``."""
    if not branch.points:
        raise ValueError("cannot export an empty branch")
    d = Path(directory)
    rows = branch_rows(branch, sg, ag)
    csv_path = write_csv(d / "branch.csv", BRANCH_HEADER, rows)
    meta = {
        "start": branch.start.as_dict(),
        "endpoint": branch.endpoint.as_dict(),
        "points": len(branch.points),
        "arclength_steps": branch.arclength_steps,
        "first_step_iterations": branch.first_step_iterations,
        "config_hash": config_hash,
    }
    meta_path = write_json(d / "branch_meta.json", meta)
    plot_path = d / "branch.plot"
    plot_path.write_text("".join(f"{fmt(r[1])} {fmt(r[4])}\n" for r in rows),
                         encoding="utf-8")
    return [csv_path, meta_path, plot_path]


def read_branch_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data.reshape(len(lines) - 1, len(header))
