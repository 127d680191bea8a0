"""KMeans (K=2) separation of adversarial events from legitimate ones."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from numba import njit

from .features import MINUTES_PER_DAY, write_enriched

# clustering features computable from an enriched table
CLUSTER_FEATURES = ("minute_of_day", "timeslot", "signal", "change_rate")
DEFAULT_FEATURES = ("minute_of_day", "timeslot")
SELECT_RULES = ("variance", "smaller")


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class ClusteringConfig:
    k: int = 2
    n_init: int = 10
    max_iter: int = 300
    # stop once no centroid moves farther than this (standardised units)
    tol: float = 1e-4
    seed: int = 0
    features: tuple[str, ...] = DEFAULT_FEATURES
    # which cluster the filter quarantines: lowest timeslot variance, or the smaller one
    select: str = "variance"
    threads: int = 1

    def __post_init__(self):
        if self.k < 1 or self.n_init < 1 or self.max_iter < 1:
            raise ClusteringError("k, n_init and max_iter must be >= 1")
        unknown = [f for f in self.features if f not in CLUSTER_FEATURES]
        if unknown or not self.features:
            raise ClusteringError(f"unknown clustering features {unknown}; choose from {CLUSTER_FEATURES}")
        if self.select not in SELECT_RULES:
            raise ClusteringError(f"select must be one of {SELECT_RULES}")


@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    def transform(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=float)
        Z = (X - self.mean) / self.scale
        Z[:, self.constant] = 0.0
        return Z


def standardize(rows, features=None) -> tuple[np.ndarray, Scaler]:
    """Per-column zero mean and unit (population) variance; constant columns become 0."""
    X = feature_columns(rows, features) if isinstance(rows, pd.DataFrame) else np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ClusteringError("cannot standardise an empty table")
    constant = (X == X[0]).all(axis=0)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(constant | (std == 0), 1.0, std)
    scaler = Scaler(mean, scale, constant)
    return scaler.transform(X), scaler


def feature_columns(table: pd.DataFrame, features=DEFAULT_FEATURES) -> np.ndarray:
    features = tuple(features or DEFAULT_FEATURES)
    cols = []
    for f in features:
        if f == "minute_of_day":
            cols.append(table["timestamp"].to_numpy() % MINUTES_PER_DAY)
        elif f == "timeslot":
            cols.append(table["timeslot"].to_numpy())
        elif f == "signal":
            cols.append(table["sig_st"].to_numpy())
        elif f == "change_rate":
            # attachment changes per hour for this IMSI on this event's day
            day = table["timestamp"].to_numpy() // MINUTES_PER_DAY
            per_day = table.groupby([table["imsi"].to_numpy(), day])["imsi"].transform("size")
            cols.append(per_day.to_numpy() / 24.0)
        else:
            raise ClusteringError(f"unknown clustering feature {f!r}")
    return np.column_stack(cols).astype(float) if cols else np.zeros((len(table), 0))


@dataclass
class ClusterReport:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    # per-iteration inertia of the selected restart
    history: list[float]
    n_iter: int
    restart: int
    purity: float | None = None
    quarantined_cluster: int | None = None
    sizes: list[int] = field(default_factory=list)
    timeslot_variance: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "purity": self.purity,
            "cluster_sizes": self.sizes,
            "quarantined_cluster": self.quarantined_cluster,
            "timeslot_variance": self.timeslot_variance,
            "n_iter": self.n_iter,
            "restart": self.restart,
        }


def _assign(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(X)), labels]


def _plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    C = np.empty((k, X.shape[1]))
    C[0] = X[rng.integers(n)]
    d2 = ((X - C[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            C[j] = X[rng.integers(n)]
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            C[j] = X[min(i, n - 1)]
        d2 = np.minimum(d2, ((X - C[j]) ** 2).sum(axis=1))
    return C


@njit(cache=True, nogil=True)
def _transfer(X, labels, k, max_pass):
    """Single-point moves that lower the within-cluster sum of squares.

    Moving x from cluster a to b changes the loss by
    n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2, so a Lloyd fixed point can
    still improve. Sums are updated in place after each move.
    """
    n, dim = X.shape
    sums = np.zeros((k, dim))
    counts = np.zeros(k)
    for i in range(n):
        counts[labels[i]] += 1
        for f in range(dim):
            sums[labels[i], f] += X[i, f]
    for _ in range(max_pass):
        moved = False
        for i in range(n):
            a = labels[i]
            if counts[a] <= 1:
                continue
            da = 0.0
            for f in range(dim):
                diff = X[i, f] - sums[a, f] / counts[a]
                da += diff * diff
            remove = counts[a] / (counts[a] - 1) * da
            best, best_cost = -1, remove
            for b in range(k):
                if b == a or counts[b] == 0:
                    continue
                db = 0.0
                for f in range(dim):
                    diff = X[i, f] - sums[b, f] / counts[b]
                    db += diff * diff
                cost = counts[b] / (counts[b] + 1) * db
                # relative margin keeps rounding noise from cycling points
                if cost < best_cost * (1 - 1e-12) - 1e-300:
                    best, best_cost = b, cost
            if best >= 0:
                labels[i] = best
                counts[a] -= 1
                counts[best] += 1
                for f in range(dim):
                    sums[a, f] -= X[i, f]
                    sums[best, f] += X[i, f]
                moved = True
        if not moved:
            break
    return labels


def _partition(X: np.ndarray, labels: np.ndarray, k: int):
    """Cluster means and the exact loss of a fixed partition."""
    C = np.zeros((k, X.shape[1]))
    for j in range(k):
        members = labels == j
        if members.any():
            C[j] = X[members].mean(axis=0)
    return C, float(((X - C[labels]) ** 2).sum())


def _lloyd(X: np.ndarray, k: int, max_iter: int, tol: float, rng: np.random.Generator):
    C = _plus_plus(X, k, rng)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, d2 = _assign(X, C)
        # an empty cluster takes the point farthest from its centroid
        reseeded = set()
        while True:
            sizes = np.bincount(labels, minlength=k)
            empty = [j for j in range(k) if sizes[j] == 0 and j not in reseeded]
            if not empty or d2.max() <= 0:
                break
            j = empty[0]
            far = int(np.argmax(d2))
            C[j] = X[far]
            reseeded.add(j)
            labels, d2 = _assign(X, C)
        history.append(float(d2.sum()))
        new = C.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        shift = float(np.sqrt(((new - C) ** 2).sum(axis=1)).max())
        C = new
        if shift < tol:
            break
    labels, _ = _assign(X, C)
    labels = _transfer(np.ascontiguousarray(X), labels.astype(np.int64), k, max_iter)
    C, inertia = _partition(X, labels, k)
    history.append(inertia)
    return labels, C, inertia, history, n_iter


def kmeans(points, config: ClusteringConfig = ClusteringConfig()) -> ClusterReport:
    """Best of ``n_init`` k-means++ seeded Lloyd runs (ties go to the earliest restart)."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) < config.k:
        raise ClusteringError(f"need at least k={config.k} points, got {len(X)}")
    if not np.isfinite(X).all():
        raise ClusteringError("non-finite feature values")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_init)

    def one(ss):
        return _lloyd(X, config.k, config.max_iter, config.tol, np.random.default_rng(ss))

    if config.threads > 1 and config.n_init > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            runs = list(pool.map(one, seeds))
    else:
        runs = [one(s) for s in seeds]
    best = min(range(len(runs)), key=lambda r: (runs[r][2], r))
    labels, C, inertia, history, n_iter = runs[best]
    return ClusterReport(labels, C, inertia, history, n_iter, best,
                         sizes=np.bincount(labels, minlength=config.k).tolist())


def purity(assignments, truth) -> float:
    """Share of events whose cluster's majority label is their own label."""
    frame = pd.DataFrame({"c": np.asarray(assignments), "t": np.asarray(truth, dtype=object)})
    if frame.empty:
        return float("nan")
    counts = frame.groupby(["c", "t"]).size()
    return float(counts.groupby(level=0).max().sum() / len(frame))


def defense_filter(events: pd.DataFrame, config: ClusteringConfig = ClusteringConfig(),
                   truth=None) -> tuple[pd.DataFrame, pd.DataFrame, ClusterReport]:
    """Cluster events into two groups and quarantine the one that looks adversarial.

    Jump clones emit a constant timeslot, so by default the cluster with the
    lower timeslot variance is quarantined. Truth labels, when given (or
    present as ``truth_label``), are used only to score purity.
    """
    if config.k != 2:
        raise ClusteringError("the defense filter needs k=2")
    Z, _ = standardize(feature_columns(events, config.features))
    report = kmeans(Z, config)
    ts = events["timeslot"].to_numpy(dtype=float)
    var = []
    for j in range(2):
        m = report.assignments == j
        var.append(float(ts[m].var()) if m.any() else math.inf)
    report.timeslot_variance = var
    if config.select == "variance":
        q = int(np.argmin(var))
    else:
        q = int(np.argmin(report.sizes))
    report.quarantined_cluster = q
    if truth is None and "truth_label" in events.columns:
        truth = events["truth_label"].fillna("legit").to_numpy()
    if truth is not None:
        report.purity = purity(report.assignments, truth)
    mask = report.assignments == q
    return events[~mask], events[mask], report


def write_defense(kept: pd.DataFrame, quarantined: pd.DataFrame, report: ClusterReport, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_enriched(kept, out_dir / "kept.csv")
    write_enriched(quarantined, out_dir / "quarantined.csv")
    (out_dir / "defense_report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
