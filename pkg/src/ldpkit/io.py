"""CSV tables shared by the command-line tools."""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .simulate import EnsembleHistogram


def state_header(n, prefix="z"):
    return [f"{prefix}{i + 1}" for i in range(n)]


def write_table(path, header, rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_table(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r if row]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_trajectory(path, times, states) -> None:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    write_table(path, ["t"] + state_header(states.shape[1]), np.column_stack([times, states]))


def write_trajectories(path, trajectories) -> None:
    """Several paths in one file; a ``path`` column identifies each."""
    n = trajectories[0].dimension
    rows = [np.column_stack([np.full(len(tr), i), tr.times, tr.states]) for i, tr in enumerate(trajectories)]
    write_table(path, ["path", "t"] + state_header(n), np.vstack(rows))


def write_histogram(path, hist: EnsembleHistogram) -> None:
    header = [f"{h}_center" for h in state_header(hist.dimension)] + ["count"]
    write_table(path, header, hist.table())


def read_histogram(path, epsilon: float, n_paths: int | None = None, time: float = float("nan")) -> EnsembleHistogram:
    """Rebuild a histogram from its CSV, assuming a regular grid of bin centres."""
    header, data = read_table(path)
    if not header or header[-1] != "count":
        raise ValueError(f"{path}: last column must be 'count'")
    n = len(header) - 1
    edges = []
    for i in range(n):
        c = np.unique(data[:, i])
        if c.size == 1:
            raise ValueError(f"{path}: cannot infer bin width from a single centre")
        w = np.diff(c)
        edges.append(np.concatenate([[c[0] - w[0] / 2], c[:-1] + w / 2, [c[-1] + w[-1] / 2]]))
    shape = tuple(e.size - 1 for e in edges)
    counts = np.zeros(shape, dtype=np.int64)
    idx = tuple(np.searchsorted(e, data[:, i]) - 1 for i, e in enumerate(edges))
    counts[idx] = data[:, -1].astype(np.int64)
    total = int(counts.sum())
    n_paths = total if n_paths is None else int(n_paths)
    return EnsembleHistogram(float(epsilon), time, edges, counts, n_paths, n_paths - total)


def file_digest(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()
