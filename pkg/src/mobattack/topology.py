"""Base-station deployment plane: cell sites, k-nearest adjacency, signal model and attachment."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

N_NEIGHBORS = 4
DEFAULT_CAPACITY = 1000
# signal model constants
D0 = 500.0
BETA = 0.5

CSV_HEADER = ["cell_id", "x_m", "y_m", "capacity"]


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class CellSite:
    id: int
    x: float
    y: float
    capacity: int = DEFAULT_CAPACITY


def _knn_table(ids: np.ndarray, xy: np.ndarray, k: int = N_NEIGHBORS) -> dict[int, list[int]]:
    n = len(ids)
    k = min(k, n - 1)
    table = {}
    for i in range(n):
        d = np.hypot(xy[:, 0] - xy[i, 0], xy[:, 1] - xy[i, 1])
        # lexsort: last key is primary -> distance, then id
        order = np.lexsort((ids, d))
        neigh = [int(ids[j]) for j in order if j != i][:k]
        table[int(ids[i])] = neigh
    return table


@dataclass(frozen=True)
class Topology:
    cells: tuple[CellSite, ...]
    bounds: tuple[float, float, float, float]
    adjacency: dict[int, list[int]] = field(compare=False, repr=False)
    d0: float = D0
    beta: float = BETA

    @classmethod
    def from_cells(cls, cells, bounds=None, d0: float = D0, beta: float = BETA) -> "Topology":
        cells = tuple(sorted(cells, key=lambda c: c.id))
        if not cells:
            raise TopologyError("topology has no cells")
        ids = [c.id for c in cells]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise TopologyError(f"duplicate cell id(s): {dup}")
        for c in cells:
            if c.capacity <= 0:
                raise TopologyError(f"cell {c.id}: capacity must be positive")
        xy = np.array([[c.x, c.y] for c in cells], dtype=float)
        if bounds is None:
            bounds = (float(xy[:, 0].min()), float(xy[:, 1].min()),
                      float(xy[:, 0].max()), float(xy[:, 1].max()))
        x0, y0, x1, y1 = bounds
        if x1 < x0 or y1 < y0:
            raise TopologyError(f"inverted bounds {bounds}")
        if ((xy[:, 0] < x0) | (xy[:, 0] > x1) | (xy[:, 1] < y0) | (xy[:, 1] > y1)).any():
            raise TopologyError("cell outside topology bounds")
        adjacency = _knn_table(np.array(ids), xy)
        return cls(cells, tuple(float(b) for b in bounds), adjacency, d0, beta)

    # vectorised views, cached on first access
    @property
    def ids(self) -> np.ndarray:
        return self._cached("_ids", lambda: np.array([c.id for c in self.cells], dtype=np.int64))

    @property
    def xy(self) -> np.ndarray:
        return self._cached("_xy", lambda: np.array([[c.x, c.y] for c in self.cells], dtype=float))

    @property
    def capacities(self) -> np.ndarray:
        return self._cached("_cap", lambda: np.array([c.capacity for c in self.cells], dtype=float))

    def _cached(self, name, fn):
        try:
            return self.__dict__[name]
        except KeyError:
            value = fn()
            object.__setattr__(self, name, value)
            return value

    def index_of(self, cell_id: int) -> int:
        lookup = self._cached("_index", lambda: {int(c): i for i, c in enumerate(self.ids)})
        try:
            return lookup[int(cell_id)]
        except KeyError:
            raise TopologyError(f"unknown cell id {cell_id}") from None

    def position(self, cell_id: int) -> tuple[float, float]:
        c = self.cells[self.index_of(cell_id)]
        return c.x, c.y

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def diagonal(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return float(np.hypot(x1 - x0, y1 - y0))

    def recompute_adjacency(self) -> dict[int, list[int]]:
        return _knn_table(self.ids, self.xy)

    def neighbors(self, cell_id: int) -> list[int]:
        self.index_of(cell_id)
        return self.adjacency[int(cell_id)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for c in self.cells:
                w.writerow([c.id, repr(float(c.x)), repr(float(c.y)), c.capacity])


def load_topology(path, bounds=None, d0: float = D0, beta: float = BETA) -> Topology:
    """Read a ``cell_id,x_m,y_m,capacity`` CSV.

    Bounds default to the bounding box of the cell coordinates.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TopologyError(f"{path}: empty file")
    if [h.strip() for h in rows[0]] != CSV_HEADER:
        raise TopologyError(f"{path}: expected header {','.join(CSV_HEADER)}")
    cells = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise TopologyError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            cells.append(CellSite(int(row[0]), float(row[1]), float(row[2]), int(row[3])))
        except ValueError as exc:
            raise TopologyError(f"{path}:{lineno}: {exc}") from None
    if not cells:
        raise TopologyError(f"{path}: no cell rows")
    return Topology.from_cells(cells, bounds, d0, beta)


ID_ORDERS = ("hilbert", "random")


def hilbert_index(x: int, y: int, order: int = 16) -> int:
    """Position of integer grid point (x, y) along a Hilbert curve over a 2**order grid."""
    n = 1 << order
    d = 0
    s = n >> 1
    while s > 0:
        rx = 1 if x & s else 0
        ry = 1 if y & s else 0
        d += s * s * ((3 * rx) ^ ry)
        if ry == 0:
            if rx == 1:
                x, y = n - 1 - x, n - 1 - y
            x, y = y, x
        s >>= 1
    return d


def generate_topology(n_cells: int, bounds=(0.0, 0.0, 20_000.0, 20_000.0), seed: int = 0,
                      capacity: int = DEFAULT_CAPACITY, d0: float = D0, beta: float = BETA,
                      id_order: str = "random") -> Topology:
    """Uniformly placed sites.

    With ``id_order="hilbert"`` ids follow a Hilbert curve through the plane,
    so sites that are close together get close ids (regional numbering);
    ``"random"`` keeps the placement order.
    """
    if n_cells < 1:
        raise TopologyError("n_cells must be >= 1")
    if id_order not in ID_ORDERS:
        raise TopologyError(f"id_order must be one of {ID_ORDERS}")
    x0, y0, x1, y1 = bounds
    if not (x1 > x0 and y1 > y0):
        raise TopologyError(f"degenerate or inverted bounds {bounds}")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x0, x1, n_cells)
    ys = rng.uniform(y0, y1, n_cells)
    order = np.arange(n_cells)
    if id_order == "hilbert":
        side = (1 << 16) - 1
        keys = [hilbert_index(int((x - x0) / (x1 - x0) * side), int((y - y0) / (y1 - y0) * side))
                for x, y in zip(xs, ys)]
        order = np.argsort(keys, kind="stable")
    cells = [CellSite(i, float(xs[j]), float(ys[j]), capacity) for i, j in enumerate(order)]
    return Topology.from_cells(cells, bounds, d0, beta)


def signal_strength(topology: Topology, position, cell: int, load_fraction: float = 0.0) -> float:
    """Inverse-distance signal with a linear load penalty, in [0, 1]."""
    if not 0.0 <= load_fraction <= 1.0:
        raise ValueError(f"load_fraction {load_fraction} outside [0, 1]")
    cx, cy = topology.position(cell)
    d = float(np.hypot(position[0] - cx, position[1] - cy))
    return (1.0 / (1.0 + d / topology.d0)) * (1.0 - topology.beta * load_fraction)


def load_fractions(topology: Topology, counts) -> np.ndarray:
    """Per-cell attached/capacity, clamped to [0, 1]."""
    counts = np.asarray(counts, dtype=float)
    return np.clip(counts / topology.capacities, 0.0, 1.0)


def signal_matrix(topology: Topology, positions: np.ndarray, load_frac=None) -> np.ndarray:
    """Signals of every (position, cell) pair; shape (n_positions, n_cells)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    xy = topology.xy
    d = np.hypot(positions[:, 0, None] - xy[None, :, 0], positions[:, 1, None] - xy[None, :, 1])
    s = 1.0 / (1.0 + d / topology.d0)
    if load_frac is not None:
        s = s * (1.0 - topology.beta * np.asarray(load_frac, dtype=float))[None, :]
    return s


def _attach_full(topology: Topology, positions: np.ndarray, load_frac=None):
    s = signal_matrix(topology, positions, load_frac)
    idx = np.argmax(s, axis=1)
    return idx, s[np.arange(len(idx)), idx]


_CANDIDATES = 8


def attach_many(topology: Topology, positions: np.ndarray, load_frac=None):
    """Best cell index and its signal for each position.

    Cells are stored in ascending id order, so argmax's first-hit rule is the
    lowest-id tie-break. Only the nearest few cells are scored; a row falls
    back to the full scan unless the unloaded signal of the farthest candidate
    is strictly below the best candidate's loaded signal, which rules out
    every cell outside the candidate set.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n_cells = len(topology)
    if n_cells <= _CANDIDATES or len(positions) == 0:
        return _attach_full(topology, positions, load_frac)
    tree = topology._cached("_kdtree", lambda: cKDTree(topology.xy))
    _, cand = tree.query(positions, k=_CANDIDATES)
    cand = np.sort(cand, axis=1)
    cxy = topology.xy[cand]
    d = np.hypot(positions[:, 0, None] - cxy[..., 0], positions[:, 1, None] - cxy[..., 1])
    s = 1.0 / (1.0 + d / topology.d0)
    if load_frac is not None:
        s = s * (1.0 - topology.beta * np.asarray(load_frac, dtype=float)[cand])
    j = np.argmax(s, axis=1)
    rows = np.arange(len(positions))
    best = s[rows, j]
    idx = cand[rows, j]
    # anything outside the candidates is at least as far as the farthest candidate
    bound = 1.0 / (1.0 + d.max(axis=1) / topology.d0)
    unsure = np.flatnonzero(~(bound < best))
    if len(unsure):
        fi, fs = _attach_full(topology, positions[unsure], load_frac)
        idx[unsure] = fi
        best[unsure] = fs
    return idx, best


def attach(topology: Topology, position, loads=None) -> int:
    """Cell id with the strongest signal at ``position``; ``loads`` are per-cell attached counts."""
    frac = None if loads is None else load_fractions(topology, loads)
    idx, _ = attach_many(topology, np.asarray(position, dtype=float), frac)
    return int(topology.ids[idx[0]])
