"""CSV and manifest readers/writers.

All floats are serialized with 17 significant digits so that files
round-trip to the exact same doubles. Manifests are flat ``key = value``
text files.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import GridMismatch
from .estimate import Dataset
from .models import TimeGrid

__all__ = [
    "fmt",
    "write_kv",
    "read_kv",
    "write_trajectory_csv",
    "write_observations_csv",
    "write_design_csv",
    "write_eor_csv",
    "write_points_csv",
    "read_points_csv",
    "write_dataset",
    "read_dataset",
    "write_xy_archive",
    "read_attention_csv",
]


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_kv(path: str, pairs: dict) -> None:
    with open(path, "w") as f:
        for key, value in pairs.items():
            f.write(f"{key} = {value}\n")


def read_kv(path: str) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def write_trajectory_csv(path: str, grid: TimeGrid, states: np.ndarray) -> None:
    """Header ``t,x0,...,x{n-1}``, one row per grid point."""
    n = states.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"x{j}" for j in range(n)])
        for t, row in zip(grid.points, states):
            w.writerow([fmt(t)] + [fmt(v) for v in row])


def write_observations_csv(path: str, grid: TimeGrid, values: np.ndarray) -> None:
    """Header ``t,y1,...,yq``, one row per grid point."""
    q = values.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"y{j + 1}" for j in range(q)])
        for t, row in zip(grid.points, values):
            w.writerow([fmt(t)] + [fmt(v) for v in row])


def write_design_csv(path: str, grid: TimeGrid, lam: np.ndarray, ranks: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "lambda", "rank"])
        for t, l, r in zip(grid.points, lam, ranks):
            w.writerow([fmt(t), fmt(l), fmt(r)])


def write_eor_csv(path: str, grid: TimeGrid, average_ranks: np.ndarray, selected) -> None:
    chosen = {round(float(t), 12) for t in selected}
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "average_rank", "selected"])
        for t, r in zip(grid.points, average_ranks):
            flag = "true" if round(float(t), 12) in chosen else "false"
            w.writerow([fmt(t), fmt(r), flag])


def write_points_csv(path: str, times) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"])
        for t in times:
            w.writerow([fmt(t)])


def read_points_csv(path: str) -> np.ndarray:
    times = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:1] != ["t"]:
            raise ValueError(f"{path}: expected header 't'")
        for row in reader:
            if row:
                times.append(float(row[0]))
    return np.array(times)


def write_dataset(csv_path: str, manifest_path: str, dataset: Dataset, seed=None) -> None:
    """Observation CSV plus a sidecar manifest with the generating truth."""
    q = dataset.observations.shape[1]
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"y{j + 1}" for j in range(q)])
        for t, row in zip(dataset.times, dataset.observations):
            w.writerow([fmt(t)] + [fmt(v) for v in row])
    pairs = {
        "model": dataset.model_name,
        "noise_sigma": fmt(dataset.noise_sigma),
        "t_start": fmt(dataset.t_start),
        "base_step": fmt(dataset.base_step),
    }
    if dataset.truth is not None:
        pairs["truth"] = " ".join(fmt(v) for v in dataset.truth)
    if seed is not None:
        pairs["seed"] = str(seed)
    write_kv(manifest_path, pairs)


def read_dataset(csv_path: str, manifest_path: str) -> Dataset:
    meta = read_kv(manifest_path)
    times = []
    rows = []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            rows.append([float(v) for v in row[1:]])
    truth = None
    if "truth" in meta:
        truth = np.array([float(v) for v in meta["truth"].split()])
    return Dataset(
        times=np.array(times),
        observations=np.array(rows),
        truth=truth,
        model_name=meta.get("model", ""),
        noise_sigma=float(meta.get("noise_sigma", "0")),
        t_start=float(meta.get("t_start", "0")),
        base_step=float(meta["base_step"]),
    )


def write_xy_archive(x_path: str, y_path: str, X: np.ndarray, Y: np.ndarray) -> None:
    """Headerless numeric matrices; row i of X pairs with row i of Y."""
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have equal row counts")
    with open(x_path, "w", newline="") as f:
        w = csv.writer(f)
        for row in X:
            w.writerow([fmt(v) for v in row])
    with open(y_path, "w", newline="") as f:
        w = csv.writer(f)
        for row in Y:
            w.writerow([fmt(v) for v in row])


def read_attention_csv(path: str, grid: TimeGrid, tol: float = 1e-9):
    """Read grid-aligned ``t,weight`` rows; raises GridMismatch otherwise."""
    times = []
    weights = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if [h.strip() for h in header[:2]] != ["t", "weight"]:
            raise ValueError(f"{path}: expected header 't,weight'")
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            weights.append(float(row[1]))
    times = np.array(times)
    weights = np.array(weights)
    if times.size != grid.count:
        raise GridMismatch(
            f"{path}: {times.size} rows but the grid has {grid.count} points"
        )
    if np.abs(times - grid.points).max() > tol:
        raise GridMismatch(f"{path}: times do not match the configured grid")
    return times, weights
