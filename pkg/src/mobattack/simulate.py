"""Minute-by-minute engine for the legitimate populations, plus attack injection."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import mobility as mob
from .attack import GMapsConfig, JumpAttackConfig, K_BY_KIND, gmaps_traces, jump_attack_traces
from .topology import Topology, attach_many, generate_topology, load_fractions, load_topology
from .traces import Dataset, ImsiAllocator, LEGIT, RawTrace, empty_dataset, merge

log = logging.getLogger(__name__)

MOBILITIES = ("wp", "rwp", "gm")
_POP_STREAM = {"wp": 1, "rwp": 2, "gm": 3}
# minutes of randomness pre-drawn per UE at a time
_CHUNK = 240


class ConfigError(ValueError):
    pass


@dataclass
class TopologySource:
    path: str | None = None
    n_cells: int = 200
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 20_000.0, 20_000.0)
    seed: int = 0
    d0: float = 500.0
    beta: float = 0.5
    id_order: str = "random"

    def build(self) -> Topology:
        if self.path:
            return load_topology(self.path, d0=self.d0, beta=self.beta)
        return generate_topology(self.n_cells, tuple(self.bounds), self.seed, d0=self.d0, beta=self.beta,
                                 id_order=self.id_order)


@dataclass
class WPConfig:
    commute_speed: float = 500.0
    home_window: tuple[int, int] = (420, 540)
    office_window: tuple[int, int] = (960, 1140)


@dataclass
class RWPConfig:
    move_probability: float = 0.005
    speed_min: float = 200.0
    speed_max: float = 700.0


@dataclass
class GMConfig:
    alpha: float = 0.75
    mean_speed: float = 80.0
    speed_stddev: float = 20.0
    direction_stddev: float = 0.6
    max_speed: float = 200.0


@dataclass
class AttackBlock:
    kind: str
    n_ues: int
    dwell: int = 5
    distant: bool = False
    walk_speed: float = 84.0
    path: list | None = None
    start_minute: int = 0

    def __post_init__(self):
        if self.kind not in K_BY_KIND and self.kind != "gmaps":
            raise ConfigError(f"unknown attack kind {self.kind!r}")

    def to_config(self):
        if self.kind == "gmaps":
            path = tuple(tuple(p) for p in self.path) if self.path else None
            return GMapsConfig(self.n_ues, path, self.walk_speed, self.start_minute)
        return JumpAttackConfig(self.n_ues, K_BY_KIND[self.kind], self.dwell, distant=self.distant)


@dataclass
class ScenarioConfig:
    seed: int = 0
    duration_days: int = 5
    train_days: int = 4
    populations: dict[str, int] = field(default_factory=lambda: {m: 10_000 for m in MOBILITIES})
    topology: TopologySource = field(default_factory=TopologySource)
    wp: WPConfig = field(default_factory=WPConfig)
    rwp: RWPConfig = field(default_factory=RWPConfig)
    gm: GMConfig = field(default_factory=GMConfig)
    attacks: list[AttackBlock] = field(default_factory=list)
    threads: int = 1
    record_positions: bool = False

    def __post_init__(self):
        if self.duration_days < 2:
            raise ConfigError("duration_days must be >= 2 (one train and one test day)")
        if not 1 <= self.train_days < self.duration_days:
            raise ConfigError("train_days must leave at least one test day")
        for name, n in self.populations.items():
            if name not in MOBILITIES:
                raise ConfigError(f"unknown mobility {name!r}")
            if n < 0:
                raise ConfigError(f"negative population for {name}")
        # validate parameter blocks eagerly
        mob.RWPParams(self.rwp.move_probability, self.rwp.speed_min, self.rwp.speed_max)
        mob.GMParams(self.gm.alpha, self.gm.mean_speed, 0.0, self.gm.speed_stddev,
                     self.gm.direction_stddev, self.gm.max_speed)
        for a in self.attacks:
            a.to_config()

    @property
    def horizon(self) -> int:
        return self.duration_days * mob.MINUTES_PER_DAY

    def max_legit_speed(self) -> float:
        speeds = {"wp": self.wp.commute_speed, "rwp": self.rwp.speed_max, "gm": self.gm.max_speed}
        present = [speeds[m] for m, n in self.populations.items() if n > 0]
        return float(max(present)) if present else 0.0

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self) -> str:
        """Hash of everything that affects outputs (thread count excluded)."""
        d = self.to_dict()
        d.pop("threads", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        sub = {"topology": TopologySource, "wp": WPConfig, "rwp": RWPConfig, "gm": GMConfig}
        kwargs = {}
        for key, value in data.items():
            if key in sub:
                kwargs[key] = _build(sub[key], value)
            elif key == "attacks":
                kwargs[key] = [_build(AttackBlock, a) for a in (value or [])]
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _build(klass, value):
    value = dict(value or {})
    unknown = set(value) - set(klass.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys for {klass.__name__}: {sorted(unknown)}")
    for k, v in value.items():
        if isinstance(v, list) and k in ("bounds", "home_window", "office_window"):
            value[k] = tuple(v)
    return klass(**value)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_scenario(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return ScenarioConfig.from_dict(yaml.safe_load(fh))


# -- populations -------------------------------------------------------------

def _ue_rng(seed: int, population: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_POP_STREAM[population], index)))


class _Population:
    """Array state of one mobility population; each UE owns its random stream."""

    def __init__(self, name, n, cfg: ScenarioConfig, bounds, pool):
        self.name, self.n, self.bounds, self.pool = name, n, bounds, pool
        self.rngs = [_ue_rng(cfg.seed, name, i) for i in range(n)]
        self._block = None
        self._block_start = 0
        if name == "wp":
            params = [mob.random_wp_params(r, bounds, cfg.wp.commute_speed,
                                           cfg.wp.home_window, cfg.wp.office_window) for r in self.rngs]
            self.home = np.array([p.home for p in params]).reshape(-1, 2)
            self.office = np.array([p.office for p in params]).reshape(-1, 2)
            self.dh = np.array([p.depart_home for p in params])
            self.do = np.array([p.depart_office for p in params])
            self.speed = np.full(n, cfg.wp.commute_speed)
        elif name == "rwp":
            self.p = cfg.rwp
            self.pos = np.array([mob.uniform_point(r, bounds) for r in self.rngs]).reshape(-1, 2)
            self.dest = self.pos.copy()
            self.moving = np.zeros(n, dtype=bool)
            self.speed = np.zeros(n)
        else:
            self.p = cfg.gm
            self.pos = np.array([mob.uniform_point(r, bounds) for r in self.rngs]).reshape(-1, 2)
            self.mean_dir = np.array([2 * np.pi * r.random() for r in self.rngs])
            self.direction = self.mean_dir.copy()
            self.speed = np.full(n, cfg.gm.mean_speed)

    def _draws(self, step: int) -> np.ndarray:
        """Random inputs for step number ``step`` (0-based) of every UE."""
        if self._block is None or step >= self._block_start + _CHUNK:
            width = mob.RWP_DRAWS if self.name == "rwp" else mob.GM_DRAWS
            draw = (lambda r: r.random((_CHUNK, width))) if self.name == "rwp" \
                else (lambda r: r.standard_normal((_CHUNK, width)))
            blocks = list(self.pool.map(draw, self.rngs)) if self.pool else [draw(r) for r in self.rngs]
            self._block = np.stack(blocks, axis=0) if blocks else np.zeros((0, _CHUNK, width))
            self._block_start = step
        return self._block[:, step - self._block_start, :]

    def positions(self, t: int) -> np.ndarray:
        if self.n == 0:
            return np.zeros((0, 2))
        if self.name == "wp":
            return mob.wp_positions(self.home, self.office, self.dh, self.do, self.speed,
                                    t % mob.MINUTES_PER_DAY)
        if t == 0:
            return self.pos
        u = self._draws(t - 1)
        if self.name == "rwp":
            self.pos, self.dest, self.moving, self.speed = mob.rwp_batch(
                self.pos, self.dest, self.moving, self.speed, u, self.bounds,
                self.p.move_probability, self.p.speed_min, self.p.speed_max)
        else:
            g = self.p
            self.pos, self.speed, self.direction, self.mean_dir = mob.gm_batch(
                self.pos, self.speed, self.direction, self.mean_dir, u, self.bounds,
                g.alpha, g.mean_speed, g.speed_stddev, g.direction_stddev, g.max_speed)
        return self.pos


@dataclass
class SimulationResult:
    config: ScenarioConfig
    topology: Topology
    legit: dict[str, Dataset]
    attack: Dataset

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def population(self, mobility: str, with_attack: bool = True) -> Dataset:
        ds = self.legit[mobility]
        return merge(ds, self.attack) if with_attack else ds


def simulate_legit(cfg: ScenarioConfig, topology: Topology, allocate: ImsiAllocator) -> dict[str, Dataset]:
    horizon = cfg.horizon
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        pops = [_Population(m, cfg.populations.get(m, 0), cfg, topology.bounds, pool) for m in MOBILITIES]
    except Exception:
        if pool:
            pool.shutdown()
        raise
    n_total = sum(p.n for p in pops)
    offsets = np.cumsum([0] + [p.n for p in pops])
    pos = np.zeros((n_total, 2))
    prev = np.full(n_total, -1)
    counts = np.zeros(len(topology))
    rec_ue, rec_t, rec_cell, rec_sig, rec_pos = [], [], [], [], []
    try:
        for t in range(horizon):
            for p, lo in zip(pops, offsets):
                pos[lo:lo + p.n] = p.positions(t)
            # loads lag one tick: attachment uses the previous tick's counts
            idx, sig = attach_many(topology, pos, load_fractions(topology, counts))
            changed = np.flatnonzero(idx != prev)
            if len(changed):
                rec_ue.append(changed)
                rec_t.append(np.full(len(changed), t))
                rec_cell.append(idx[changed])
                rec_sig.append(sig[changed])
                if cfg.record_positions:
                    rec_pos.append(pos[changed].copy())
            prev = idx
            counts = np.bincount(idx, minlength=len(topology)).astype(float)
    finally:
        if pool:
            pool.shutdown()

    ue = np.concatenate(rec_ue) if rec_ue else np.zeros(0, dtype=int)
    order = np.argsort(ue, kind="stable")
    ue = ue[order]
    ts = np.concatenate(rec_t)[order] if rec_t else ue
    cells = topology.ids[np.concatenate(rec_cell)[order]] if rec_cell else ue
    sigs = np.concatenate(rec_sig)[order] if rec_sig else ue.astype(float)
    ppos = np.concatenate(rec_pos)[order] if rec_pos else None
    bounds_idx = np.searchsorted(ue, np.arange(n_total + 1))

    out = {}
    for p, lo in zip(pops, offsets):
        traces = []
        for i in range(p.n):
            a, b = bounds_idx[lo + i], bounds_idx[lo + i + 1]
            tr = RawTrace(allocate(p.name, i),
                          [(int(x), int(c), float(s)) for x, c, s in zip(ts[a:b], cells[a:b], sigs[a:b])])
            if ppos is not None:
                tr.positions = [(float(x), float(y)) for x, y in ppos[a:b]]
            traces.append(tr)
        out[p.name] = Dataset(traces, {tr.imsi: LEGIT for tr in traces}, horizon)
        log.info("simulated %d %s UEs: %d events", p.n, p.name, out[p.name].n_events())
    return out


def generate_attacks(cfg: ScenarioConfig, topology: Topology, allocate: ImsiAllocator,
                     blocks=None) -> Dataset:
    blocks = cfg.attacks if blocks is None else blocks
    ds = empty_dataset(cfg.horizon)
    for i, block in enumerate(blocks):
        acfg = block.to_config()
        # one seed per block position keeps blocks independent of each other
        seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(900, i)).generate_state(1)[0])
        if block.kind == "gmaps":
            part = gmaps_traces(acfg, topology, cfg.horizon, seed, allocate)
        else:
            part = jump_attack_traces(acfg, topology, cfg.horizon, seed, allocate)
        ds = merge(ds, part)
    return ds


def run(cfg: ScenarioConfig, topology: Topology | None = None) -> SimulationResult:
    """Simulate the legitimate populations and generate the configured attacks."""
    topology = topology or cfg.topology.build()
    allocate = ImsiAllocator(cfg.seed)
    legit = simulate_legit(cfg, topology, allocate)
    attack = generate_attacks(cfg, topology, allocate)
    return SimulationResult(cfg, topology, legit, attack)


def write_result(result: SimulationResult, out_dir) -> dict[str, Path]:
    """Serialise raw traces per population plus the shared labels sidecar."""
    from .traces import write_labels, write_traces

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    labels = {}
    for name, ds in result.legit.items():
        p = out_dir / f"raw_{name}.jsonl"
        write_traces(p, sorted(ds.traces, key=lambda t: t.imsi))
        labels.update(ds.labels)
        paths[name] = p
    p = out_dir / "raw_attack.jsonl"
    write_traces(p, sorted(result.attack.traces, key=lambda t: t.imsi))
    labels.update(result.attack.labels)
    paths["attack"] = p
    result.topology.to_csv(out_dir / "topology.csv")
    paths["topology"] = out_dir / "topology.csv"
    write_labels(out_dir / "labels.csv", labels)
    paths["labels"] = out_dir / "labels.csv"
    return paths


def read_result(cfg: ScenarioConfig, out_dir) -> SimulationResult:
    from .traces import read_labels, read_traces

    out_dir = Path(out_dir)
    t = cfg.topology
    topology = load_topology(out_dir / "topology.csv", bounds=tuple(t.bounds) if not t.path else None,
                             d0=t.d0, beta=t.beta)
    labels = read_labels(out_dir / "labels.csv")

    def load(name):
        traces = read_traces(out_dir / f"raw_{name}.jsonl")
        return Dataset(traces, {tr.imsi: labels[tr.imsi] for tr in traces}, cfg.horizon)

    legit = {m: load(m) for m in MOBILITIES if (out_dir / f"raw_{m}.jsonl").exists()}
    return SimulationResult(cfg, topology, legit, load("attack"))
