"""Dataset serialization: long CSV (one row per subject-gridpoint) plus a
JSON manifest carrying the grid, dimensions and seed."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from funlong.core.data import Dataset
from funlong.core.grid import Partition, make_infinite_partition


def dataset_to_csv(ds: Dataset, csv_path, manifest_path) -> None:
    n, m1 = ds.a.shape
    times = np.asarray(ds.grid.finite_points)
    rows = {
        "subject_id": np.repeat(np.arange(n), m1),
        "t": np.tile(times, n),
        "a": ds.a.reshape(-1),
    }
    for k in range(ds.d):
        rows[f"l_{k + 1}"] = ds.l[:, :, k].reshape(-1)
    rows["x"] = np.repeat(ds.x, m1)
    rows["delta"] = np.repeat(ds.delta, m1)
    frame = pd.DataFrame(rows)
    frame.to_csv(csv_path, index=False, float_format="%.17g")

    manifest = {
        "grid": list(ds.grid.finite_points),
        "infinite_horizon": ds.grid.is_infinite,
        "n": int(n),
        "d": int(ds.d),
        "y_indices": list(ds.y_indices),
        "seed": ds.seed,
        "provenance": _jsonable(ds.provenance),
        "has_weights": ds.weights is not None,
    }
    if ds.weights is not None:
        manifest["weights"] = [float(w) for w in ds.weights]
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def dataset_from_csv(csv_path, manifest_path) -> Dataset:
    manifest = json.loads(Path(manifest_path).read_text())
    frame = pd.read_csv(csv_path)
    n = manifest["n"]
    d = manifest["d"]
    m1 = len(manifest["grid"])
    a = frame["a"].to_numpy().reshape(n, m1)
    l = np.stack([frame[f"l_{k + 1}"].to_numpy().reshape(n, m1) for k in range(d)], axis=2)
    x = frame["x"].to_numpy().reshape(n, m1)[:, 0]
    delta = frame["delta"].to_numpy().reshape(n, m1)[:, 0]
    if manifest["infinite_horizon"]:
        grid = make_infinite_partition(manifest["grid"])
    else:
        grid = Partition(tuple(manifest["grid"]))
    weights = np.asarray(manifest["weights"]) if manifest.get("has_weights") else None
    return Dataset(
        grid=grid,
        a=a,
        l=l,
        y_indices=tuple(manifest["y_indices"]),
        x=x,
        delta=delta,
        seed=manifest["seed"],
        provenance=manifest.get("provenance", {}),
        weights=weights,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj
