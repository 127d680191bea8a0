"""Adversarial trace generators: clone-set jump attacks and the carried-UE walk."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .topology import Topology, attach_many, signal_strength
from .traces import Dataset, ImsiAllocator, RawTrace

KIND_BY_K = {2: "tuple", 5: "quintuple", 10: "decuple"}
K_BY_KIND = {v: k for k, v in KIND_BY_K.items()}
# spawn-key namespaces for per-set random substreams
_STREAM = {"tuple": 101, "quintuple": 102, "decuple": 103, "gmaps": 104}


class AttackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class JumpAttackConfig:
    n_ues: int
    k: int = 2
    dwell: int = 5
    cell_assignment: tuple[tuple[int, ...], ...] | None = None
    distant: bool = False
    placement_radius: float = 100.0

    def __post_init__(self):
        if self.k not in KIND_BY_K:
            raise AttackConfigError(f"k must be one of {sorted(KIND_BY_K)}, got {self.k}")
        if self.n_ues < 0 or self.n_ues % self.k:
            raise AttackConfigError(f"n_ues={self.n_ues} is not divisible by k={self.k}")
        if self.dwell < 1:
            raise AttackConfigError("dwell must be >= 1 minute")
        if self.cell_assignment is not None:
            if len(self.cell_assignment) != self.n_sets:
                raise AttackConfigError("cell_assignment needs one entry per set")
            for cells in self.cell_assignment:
                if len(cells) != self.k or len(set(cells)) != self.k:
                    raise AttackConfigError(f"set cells must be {self.k} distinct ids: {cells}")

    @property
    def kind(self) -> str:
        return KIND_BY_K[self.k]

    @property
    def n_sets(self) -> int:
        return self.n_ues // self.k


@dataclass(frozen=True)
class GMapsConfig:
    n_ues: int
    path: tuple[tuple[float, float], ...] | None = None
    walk_speed: float = 84.0
    start_minute: int = 0

    def __post_init__(self):
        if self.n_ues < 0:
            raise AttackConfigError("n_ues must be >= 0")
        if self.walk_speed <= 0:
            raise AttackConfigError("walk_speed must be positive")
        if self.path is not None and len(self.path) < 2:
            raise AttackConfigError("path needs at least 2 waypoints")


class AttackCount(NamedTuple):
    events: int
    idle_per_set: int


def adversarial_event_count(config: JumpAttackConfig, duration_minutes: int) -> AttackCount:
    """Activation records a jump attack emits over ``duration_minutes``."""
    if config.n_ues == 0:
        return AttackCount(0, config.k - 1)
    return AttackCount(config.n_sets * (duration_minutes // config.dwell), config.k - 1)


def _set_rng(seed: int, kind: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAM[kind], index)))


def _pick_cells(rng, topology: Topology, k: int, distant: bool) -> list[int]:
    n = len(topology)
    if not distant:
        return [int(topology.ids[i]) for i in rng.choice(n, size=k, replace=False)]
    # farthest-point selection from a random first cell
    xy = topology.xy
    chosen = [int(rng.integers(n))]
    mind = np.hypot(*(xy - xy[chosen[0]]).T)
    for _ in range(k - 1):
        mind[chosen] = -1.0
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.hypot(*(xy - xy[nxt]).T))
    return [int(topology.ids[i]) for i in chosen]


def jump_attack_traces(config: JumpAttackConfig, topology: Topology, duration_minutes: int,
                       seed: int, allocate: ImsiAllocator | None = None) -> Dataset:
    """One trace per clone set, all k clones sharing the set's IMSI.

    Set ``i`` draws from its own substream, so the first m sets of a larger
    attack are identical to an m-set attack with the same seed.
    """
    if len(topology) < config.k:
        raise AttackConfigError(f"topology has {len(topology)} cells, need at least k={config.k}")
    allocate = allocate or ImsiAllocator(seed)
    kind = config.kind
    n_periods = duration_minutes // config.dwell
    traces, labels = [], {}
    for s in range(config.n_sets):
        rng = _set_rng(seed, kind, s)
        if config.cell_assignment is not None:
            cells = [int(c) for c in config.cell_assignment[s]]
            for c in cells:
                topology.index_of(c)
        else:
            cells = _pick_cells(rng, topology, config.k, config.distant)
        # each clone sits still near its cell
        signals = []
        for c in cells:
            cx, cy = topology.position(c)
            r = config.placement_radius * rng.random()
            a = 2 * np.pi * rng.random()
            signals.append(signal_strength(topology, (cx + r * np.cos(a), cy + r * np.sin(a)), c, 0.0))
        records = [(j * config.dwell, cells[j % config.k], signals[j % config.k]) for j in range(n_periods)]
        imsi = allocate(kind, s)
        traces.append(RawTrace(imsi, records))
        labels[imsi] = kind
    return Dataset(traces, labels, duration_minutes)


def default_walk_path(topology: Topology, length: float = 3000.0, radius: float = 1500.0):
    """Horizontal segment centred on the cell with the most sites within ``radius``."""
    xy = topology.xy
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    centre = xy[int(np.argmax((d <= radius).sum(axis=1)))]
    x0, y0, x1, y1 = topology.bounds
    length = min(length, x1 - x0)
    left = float(np.clip(centre[0] - length / 2, x0, x1 - length))
    return ((left, float(centre[1])), (left + length, float(centre[1])))


def walk_positions(path, speed: float, minutes: np.ndarray) -> np.ndarray:
    """Positions along ``path`` after walking ``minutes``, bouncing end to end."""
    pts = np.asarray(path, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        return np.repeat(pts[:1], len(minutes), axis=0)
    s = np.mod(speed * np.asarray(minutes, dtype=float), 2 * total)
    s = np.where(s > total, 2 * total - s, s)
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.stack([x, y], axis=1)


def gmaps_traces(config: GMapsConfig, topology: Topology, duration_minutes: int,
                 seed: int, allocate: ImsiAllocator | None = None) -> Dataset:
    """n distinct IMSIs carried together along one walking path."""
    path = config.path if config.path is not None else default_walk_path(topology)
    x0, y0, x1, y1 = topology.bounds
    for px, py in path:
        if not (x0 <= px <= x1 and y0 <= py <= y1):
            raise AttackConfigError(f"waypoint ({px}, {py}) outside topology bounds")
    allocate = allocate or ImsiAllocator(seed)
    minutes = np.arange(config.start_minute, duration_minutes)
    records = []
    if len(minutes):
        pos = walk_positions(path, config.walk_speed, minutes - config.start_minute)
        idx, sig = attach_many(topology, pos)
        change = np.ones(len(idx), dtype=bool)
        change[1:] = idx[1:] != idx[:-1]
        records = [(int(t), int(topology.ids[i]), float(s))
                   for t, i, s in zip(minutes[change], idx[change], sig[change])]
    traces, labels = [], {}
    for u in range(config.n_ues):
        imsi = allocate("gmaps", u)
        traces.append(RawTrace(imsi, list(records)))
        labels[imsi] = "gmaps"
    return Dataset(traces, labels, duration_minutes)
