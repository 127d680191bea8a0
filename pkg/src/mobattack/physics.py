"""Implied-velocity check: flags traces whose consecutive attachments are physically impossible.

A record's signal bounds how far the UE can have been from its cell: the load
penalty only ever lowers the signal, so ``s <= 1 / (1 + d/d0)`` and hence
``d <= d0 * (1/s - 1)``. Between two records the UE must have covered at
least the cell separation minus both radii, which gives a lower bound on its
speed. Legitimate UEs therefore never exceed their model's maximum speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import Topology
from .traces import Dataset, RawTrace


def distance_bound(signal, d0: float) -> np.ndarray:
    """Largest UE-to-cell distance consistent with an observed signal."""
    s = np.asarray(signal, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(s > 0, d0 * (1.0 / s - 1.0), np.inf)


def implied_velocities(trace: RawTrace, topology: Topology) -> np.ndarray:
    """Lower bound on speed (m/min) for every pair of consecutive records."""
    if len(trace.records) < 2:
        return np.zeros(0)
    t = np.array([r[0] for r in trace.records], dtype=float)
    xy = topology.xy[[topology.index_of(r[1]) for r in trace.records]]
    radius = distance_bound([r[2] for r in trace.records], topology.d0)
    sep = np.hypot(*np.diff(xy, axis=0).T)
    travel = np.maximum(0.0, sep - radius[:-1] - radius[1:])
    return travel / np.diff(t)


def max_implied_velocity(trace: RawTrace, topology: Topology) -> float:
    v = implied_velocities(trace, topology)
    return float(v.max()) if len(v) else 0.0


def cross_plane(topology: Topology, a: int, b: int) -> bool:
    """Cells at least half the deployment diagonal apart."""
    (ax, ay), (bx, by) = topology.position(a), topology.position(b)
    return float(np.hypot(ax - bx, ay - by)) >= topology.diagonal / 2


@dataclass
class PhysicsDetector:
    topology: Topology
    # fastest legitimate displacement per minute
    max_speed: float

    def violates(self, trace: RawTrace) -> bool:
        return max_implied_velocity(trace, self.topology) > self.max_speed

    def scan(self, dataset: Dataset) -> dict[str, float]:
        """Per-IMSI maximum implied velocity."""
        return {tr.imsi: max_implied_velocity(tr, self.topology) for tr in dataset.traces}

    def flagged(self, dataset: Dataset) -> set[str]:
        return {imsi for imsi, v in self.scan(dataset).items() if v > self.max_speed}
