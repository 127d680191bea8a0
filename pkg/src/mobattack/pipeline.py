"""Experiment plans, staged pipeline runs, attack sweeps and summary reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .attack import K_BY_KIND, GMapsConfig, JumpAttackConfig, gmaps_traces, jump_attack_traces
from .defense import ClusteringConfig, defense_filter, write_defense
from .features import TimeslotBinning, enrich, read_enriched, split, write_enriched
from .forest import EnsembleSpec
from .predict import TrainedPredictor, evaluate, predict, score, train
from .simulate import (MOBILITIES, ConfigError, ScenarioConfig, SimulationResult, generate_attacks,
                       read_result, simulate_legit, write_result)
from .traces import LEGIT, Dataset, ImsiAllocator, empty_dataset, merge

log = logging.getLogger(__name__)

STAGES = ("simulate", "attack", "features", "train", "eval", "defend")
ATTACK_KINDS = ("tuple", "quintuple", "decuple", "gmaps")
# spawn-key namespace for sweep attack seeds
_SWEEP_STREAM = 901


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class SweepConfig:
    attacks: tuple[str, ...] = ATTACK_KINDS
    n_ues: tuple[int, ...] = (0, 25, 50, 100, 200)
    mobilities: tuple[str, ...] = MOBILITIES
    dwell: int = 5

    def __post_init__(self):
        self.attacks = tuple(self.attacks)
        self.n_ues = tuple(int(n) for n in self.n_ues)
        self.mobilities = tuple(self.mobilities)
        bad = [a for a in self.attacks if a not in ATTACK_KINDS]
        if bad:
            raise ConfigError(f"unknown sweep attacks {bad}")
        bad = [m for m in self.mobilities if m not in MOBILITIES]
        if bad:
            raise ConfigError(f"unknown sweep mobilities {bad}")
        if any(n < 0 for n in self.n_ues):
            raise ConfigError("sweep n_ues must be >= 0")


@dataclass
class ExperimentPlan:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    stages: tuple[str, ...] = STAGES
    model: EnsembleSpec = field(default_factory=EnsembleSpec)
    # None: extra-trees variant of ``model``
    timeslot_model: EnsembleSpec | None = None
    binning: TimeslotBinning = field(default_factory=TimeslotBinning)
    defense: ClusteringConfig = field(default_factory=ClusteringConfig)
    sweep: SweepConfig | None = None
    retrain_with_adversarial: bool = False

    def __post_init__(self):
        self.stages = tuple(self.stages)
        if self.stages != STAGES[:len(self.stages)] or not self.stages:
            raise ConfigError(f"stages must be a non-empty prefix of {list(STAGES)}, got {list(self.stages)}")

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario.to_dict(),
            "stages": list(self.stages),
            "model": asdict(self.model),
            "timeslot_model": asdict(self.timeslot_model) if self.timeslot_model else None,
            "binning": list(self.binning.upper_edges),
            "defense": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.defense).items()},
            "sweep": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.sweep).items()}
            if self.sweep else None,
            "retrain_with_adversarial": self.retrain_with_adversarial,
        }
        return d

    def digest(self) -> str:
        """Hash of every setting that affects artifacts (thread counts excluded)."""
        d = self.to_dict()
        d["scenario"].pop("threads", None)
        d["defense"].pop("threads", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentPlan":
        data = dict(data or {})
        known = {"scenario", "stages", "model", "timeslot_model", "binning", "defense", "sweep",
                 "retrain_with_adversarial"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        scen = data.get("scenario") or {}
        if isinstance(scen, str):
            path = Path(scen) if base_dir is None else base_dir / scen
            with open(path, encoding="utf-8") as fh:
                scen = yaml.safe_load(fh) or {}
        kwargs = {"scenario": ScenarioConfig.from_dict(scen)}
        if "stages" in data:
            kwargs["stages"] = tuple(data["stages"])
        try:
            if data.get("model"):
                kwargs["model"] = EnsembleSpec(**data["model"])
            if data.get("timeslot_model"):
                kwargs["timeslot_model"] = EnsembleSpec(**data["timeslot_model"])
            if data.get("binning"):
                kwargs["binning"] = TimeslotBinning(tuple(int(e) for e in data["binning"]))
            if data.get("defense"):
                d = dict(data["defense"])
                if "features" in d:
                    d["features"] = tuple(d["features"])
                kwargs["defense"] = ClusteringConfig(**d)
            if data.get("sweep"):
                kwargs["sweep"] = SweepConfig(**data["sweep"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if "retrain_with_adversarial" in data:
            kwargs["retrain_with_adversarial"] = bool(data["retrain_with_adversarial"])
        return cls(**kwargs)


def load_plan(path) -> ExperimentPlan:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    # a bare scenario file is a plan with default stages
    if "scenario" not in data and set(data) <= set(ScenarioConfig.__dataclass_fields__):
        data = {"scenario": data}
    return ExperimentPlan.from_dict(data, base_dir=path.parent)


def with_overrides(plan: ExperimentPlan, seed: int | None = None, threads: int | None = None,
                   retrain: bool | None = None) -> ExperimentPlan:
    scenario = plan.scenario
    if seed is not None:
        scenario = replace(scenario, seed=int(seed))
    if threads is not None:
        scenario = replace(scenario, threads=int(threads))
    plan = replace(plan, scenario=scenario)
    if threads is not None:
        plan = replace(plan, defense=replace(plan.defense, threads=int(threads)))
    if retrain is not None:
        plan = replace(plan, retrain_with_adversarial=bool(retrain))
    return plan


# -- in-memory experiment helpers ---------------------------------------------

def legit_imsis(result: SimulationResult) -> set[str]:
    return set().union(*[ds.imsis for ds in result.legit.values()]) if result.legit else set()


def attack_dataset(result: SimulationResult, kind: str, n_ues: int, dwell: int = 5,
                   seed: int | None = None) -> Dataset:
    """``n_ues`` acquired UEs mounting ``kind`` against a simulated scenario.

    Jump attacks form ``n_ues // k`` complete sets; leftover UEs stay unused.
    Sets and carried UEs are drawn from per-index substreams, so smaller
    attacks are prefixes of larger ones.
    """
    cfg = result.config
    if seed is None:
        seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(_SWEEP_STREAM, ATTACK_KINDS.index(kind)))
                   .generate_state(1)[0])
    allocate = ImsiAllocator(cfg.seed, taken=legit_imsis(result))
    if kind == "gmaps":
        return gmaps_traces(GMapsConfig(n_ues), result.topology, cfg.horizon, seed, allocate)
    k = K_BY_KIND[kind]
    return jump_attack_traces(JumpAttackConfig(n_ues - n_ues % k, k, dwell), result.topology,
                              cfg.horizon, seed, allocate)


def enrich_population(result: SimulationResult, mobility: str, binning: TimeslotBinning,
                      adversarial: Dataset | None = None) -> pd.DataFrame:
    ds = result.legit[mobility]
    if adversarial is not None and adversarial.traces:
        ds = merge(ds, adversarial)
    return enrich(ds, result.topology, binning, result.config.train_days)


def combine(*tables: pd.DataFrame) -> pd.DataFrame:
    """Concatenate enriched tables of disjoint IMSI sets in canonical order.

    Enrichment only looks within one IMSI, so this equals enriching the merged dataset.
    """
    out = pd.concat([t for t in tables if len(t)], ignore_index=True)
    return out.sort_values(["imsi", "timestamp"], kind="stable").reset_index(drop=True)


def legit_rows(table: pd.DataFrame) -> pd.DataFrame:
    return table[table["truth_label"].fillna(LEGIT) == LEGIT]


def fit(plan: ExperimentPlan, train_set: pd.DataFrame, mobility: str = "") -> TrainedPredictor:
    return train(train_set, plan.model, plan.timeslot_model, mobility, n_jobs=plan.scenario.threads)


@dataclass
class RetrainOutcome:
    mobility: str
    baseline: float
    poisoned: float
    defended: float | None
    purity: float | None
    n_quarantined: int | None

    def rows(self) -> list[dict]:
        rows = [{"model": "baseline", "legit_accuracy": self.baseline},
                {"model": "poisoned", "legit_accuracy": self.poisoned}]
        if self.defended is not None:
            rows.append({"model": "defended", "legit_accuracy": self.defended})
        return rows


def retrain_experiment(plan: ExperimentPlan, table: pd.DataFrame, mobility: str = "",
                       defend: bool = True, baseline_model: TrainedPredictor | None = None) -> RetrainOutcome:
    """Legit-only test accuracy of models trained on clean, merged and defense-kept training days."""
    train_set, test_set = split(table, plan.scenario.train_days)
    legit_test = legit_rows(test_set)
    clean = baseline_model or fit(plan, legit_rows(train_set), mobility)
    baseline = evaluate(clean, legit_test).accuracy
    poisoned = evaluate(fit(plan, train_set, mobility), legit_test).accuracy
    defended = purity_ = n_q = None
    if defend:
        kept, quarantined, report = defense_filter(train_set, plan.defense)
        defended = evaluate(fit(plan, kept, mobility), legit_test).accuracy
        purity_, n_q = report.purity, len(quarantined)
    return RetrainOutcome(mobility, baseline, poisoned, defended, purity_, n_q)


# -- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = ["mobility", "attack", "n_ues", "n_active_ues", "n_events", "n_correct", "n_legit",
                 "n_legit_correct", "n_adversarial", "n_adversarial_correct", "mixed_accuracy",
                 "legit_accuracy", "adversarial_accuracy"]


def _ratio(a: int, b: int):
    return a / b if b else ""


def sweep_rows(plan: ExperimentPlan, result: SimulationResult, mobility: str, model: TrainedPredictor,
               legit_table: pd.DataFrame | None = None, sweep: SweepConfig | None = None) -> list[dict]:
    """Mixed/legit/adversarial accuracy for every (attack, n_ues) point against one model.

    Per-event predictions do not depend on the other rows, so legitimate test
    events are scored once and each attack is scored once at its largest size;
    smaller points take the prefix of sets (or carried UEs).
    """
    sweep = sweep or plan.sweep or SweepConfig()
    days = plan.scenario.train_days
    if legit_table is None:
        legit_table = enrich_population(result, mobility, plan.binning)
    _, legit_test = split(legit_table, days)
    lp, lb = predict(model, legit_test)
    l_ok = (lp == legit_test["label_location"].to_numpy()) & (lb == legit_test["label_timeslot_bin"].to_numpy())
    n_l, c_l = len(legit_test), int(l_ok.sum())
    rows = []
    for kind in sweep.attacks:
        n_max = max(sweep.n_ues) if sweep.n_ues else 0
        adv = attack_dataset(result, kind, n_max, sweep.dwell)
        order = [tr.imsi for tr in adv.traces]
        a_test = pd.DataFrame(columns=legit_test.columns)
        a_ok = np.zeros(0, dtype=bool)
        if order:
            a_table = enrich(adv, result.topology, plan.binning, days)
            a_test = a_table[a_table["timestamp"] >= days * 1440]
            if len(a_test):
                ap, ab = predict(model, a_test)
                a_ok = (ap == a_test["label_location"].to_numpy()) & (ab == a_test["label_timeslot_bin"].to_numpy())
        rank = {imsi: i for i, imsi in enumerate(order)}
        a_rank = a_test["imsi"].map(rank).to_numpy() if len(a_test) else np.zeros(0, dtype=int)
        k = K_BY_KIND.get(kind, 1)
        for n in sweep.n_ues:
            units = n // k
            m = a_rank < units
            n_a, c_a = int(m.sum()), int(a_ok[m].sum())
            rows.append({
                "mobility": mobility, "attack": kind, "n_ues": n, "n_active_ues": units * k,
                "n_events": n_l + n_a, "n_correct": c_l + c_a, "n_legit": n_l, "n_legit_correct": c_l,
                "n_adversarial": n_a, "n_adversarial_correct": c_a,
                "mixed_accuracy": _ratio(c_l + c_a, n_l + n_a), "legit_accuracy": _ratio(c_l, n_l),
                "adversarial_accuracy": _ratio(c_a, n_a),
            })
    return rows


def check_sweep_identity(rows) -> None:
    """mixed accuracy must equal the event-weighted mean of the population accuracies, exactly."""
    for r in rows:
        n = int(r["n_events"])
        if n == 0:
            continue
        total = Fraction(int(r["n_legit_correct"]) + int(r["n_adversarial_correct"]), n)
        weighted = Fraction(0)
        for part in ("legit", "adversarial"):
            n_p = int(r[f"n_{part}"])
            if n_p:
                weighted += Fraction(n_p, n) * Fraction(int(r[f"n_{part}_correct"]), n_p)
        if total != weighted or Fraction(int(r["n_correct"]), n) != total:
            raise ValueError(f"decomposition identity fails for row {r}")


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in r.items()})


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- charts -------------------------------------------------------------------

_COLORS = {"tuple": "#d62728", "quintuple": "#ff7f0e", "decuple": "#2ca02c", "gmaps": "#1f77b4",
           "none": "#7f7f7f"}


def sweep_svg(mobility: str, rows, width: int = 560, height: int = 360) -> str:
    """Static line chart: mixed accuracy against acquired UEs, one line per attack."""
    left, right, top, bottom = 60, 130, 30, 50
    pw, ph = width - left - right, height - top - bottom
    series = {}
    for r in rows:
        if r["mobility"] != mobility or r["mixed_accuracy"] in ("", None):
            continue
        series.setdefault(r["attack"], []).append((int(r["n_ues"]), float(r["mixed_accuracy"])))
    xs = [x for pts in series.values() for x, _ in pts] or [0]
    x_max = max(max(xs), 1)

    def px(x):
        return left + pw * x / x_max

    def py(y):
        return top + ph * (1.0 - y)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
           f'{mobility.upper()}: mixed accuracy vs acquired UEs</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for i in range(6):
        y = i / 5
        out.append(f'<line x1="{left - 4}" y1="{py(y):.1f}" x2="{left}" y2="{py(y):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.1f}</text>')
    for x in sorted(set(xs)):
        out.append(f'<line x1="{px(x):.1f}" y1="{top + ph}" x2="{px(x):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(x):.1f}" y="{top + ph + 18}" text-anchor="middle">{x}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">acquired UEs</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">accuracy</text>')
    for j, (kind, pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        color = _COLORS.get(kind, "black")
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>')
        ly = top + 10 + 18 * j
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 35}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 40}" y="{ly + 4}">{kind}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- on-disk pipeline ---------------------------------------------------------

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict[str, str]:
    import numba

    return {"mobattack": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "pandas": pd.__version__, "numba": numba.__version__}


class Pipeline:
    """Runs stages against an output directory; each stage reads its predecessors' artifacts."""

    def __init__(self, plan: ExperimentPlan, out_dir):
        self.plan = plan
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self._result = None
        self._tables = {}
        self._models = {}

    # artifact paths
    def enriched_path(self, m):
        return self.out / f"enriched_{m}.csv"

    def model_path(self, m, variant=""):
        return self.out / f"model_{m}{variant}.npz"

    @property
    def mobilities(self) -> list[str]:
        return [m for m in MOBILITIES if self.plan.scenario.populations.get(m, 0) > 0]

    def result(self) -> SimulationResult:
        if self._result is None:
            if not (self.out / "topology.csv").exists():
                raise FileNotFoundError(f"{self.out}: no simulation artifacts; run the simulate stage first")
            self._result = read_result(self.plan.scenario, self.out)
        return self._result

    def table(self, m) -> pd.DataFrame:
        if m not in self._tables:
            path = self.enriched_path(m)
            if not path.exists():
                raise FileNotFoundError(f"{path}: missing; run the features stage first")
            self._tables[m] = read_enriched(path)
        return self._tables[m]

    def model(self, m, variant="") -> TrainedPredictor:
        key = (m, variant)
        if key not in self._models:
            path = self.model_path(m, variant)
            if not path.exists():
                raise FileNotFoundError(f"{path}: missing; run the train stage first")
            self._models[key] = TrainedPredictor.load(path)
        return self._models[key]

    # stages
    def simulate(self) -> None:
        cfg = self.plan.scenario
        topology = cfg.topology.build()
        legit = simulate_legit(cfg, topology, ImsiAllocator(cfg.seed))
        self._result = SimulationResult(cfg, topology, legit, empty_dataset(cfg.horizon))
        write_result(self._result, self.out)

    def attack(self) -> None:
        res = self.result()
        allocate = ImsiAllocator(res.config.seed, taken=legit_imsis(res))
        res.attack = generate_attacks(res.config, res.topology, allocate)
        write_result(res, self.out)

    def features(self) -> None:
        res = self.result()
        for m in self.mobilities:
            table = enrich_population(res, m, self.plan.binning, res.attack)
            write_enriched(table, self.enriched_path(m))
            self._tables[m] = read_enriched(self.enriched_path(m))

    def train(self) -> None:
        days = self.plan.scenario.train_days
        for m in self.mobilities:
            train_set, _ = split(self.table(m), days)
            model = fit(self.plan, legit_rows(train_set), m)
            model.save(self.model_path(m))
            self._models[(m, "")] = model
            if self.plan.retrain_with_adversarial:
                poisoned = fit(self.plan, train_set, m)
                poisoned.save(self.model_path(m, "_poisoned"))
                self._models[(m, "_poisoned")] = poisoned

    def eval(self) -> None:
        days = self.plan.scenario.train_days
        for m in self.mobilities:
            _, test = split(self.table(m), days)
            report = evaluate(self.model(m), test)
            report.to_csv(self.out / f"eval_{m}.csv")
            (self.out / f"eval_{m}.txt").write_text(report.to_text())
            pc, pb = predict(self.model(m), test)
            preds = pd.DataFrame({
                "imsi": test["imsi"].to_numpy(), "timestamp": test["timestamp"].to_numpy(),
                "truth_label": test["truth_label"].fillna(LEGIT).to_numpy(),
                "label_location": test["label_location"].to_numpy(), "pred_location": pc,
                "label_timeslot_bin": test["label_timeslot_bin"].to_numpy(), "pred_timeslot_bin": pb,
                "correct": report.outcomes,
            })
            preds.to_csv(self.out / f"predictions_{m}.csv", index=False, lineterminator="\n")
            if self.plan.retrain_with_adversarial:
                legit_test = legit_rows(test)
                rows = [{"model": "baseline", "legit_accuracy": evaluate(self.model(m), legit_test).accuracy},
                        {"model": "poisoned",
                         "legit_accuracy": evaluate(self.model(m, "_poisoned"), legit_test).accuracy}]
                write_rows(self.out / f"retrain_{m}.csv", rows, ["model", "legit_accuracy"])

    def defend(self) -> None:
        days = self.plan.scenario.train_days
        for m in self.mobilities:
            train_set, test = split(self.table(m), days)
            kept, quarantined, report = defense_filter(test, self.plan.defense)
            write_defense(kept, quarantined, report, self.out / f"defense_{m}")
            if self.plan.retrain_with_adversarial:
                kept_train, _, _ = defense_filter(train_set, self.plan.defense)
                model = fit(self.plan, kept_train, m)
                model.save(self.model_path(m, "_defended"))
                acc = evaluate(model, legit_rows(test)).accuracy
                path = self.out / f"retrain_{m}.csv"
                rows = read_rows(path) if path.exists() else []
                rows = [r for r in rows if r["model"] != "defended"]
                rows.append({"model": "defended", "legit_accuracy": acc})
                write_rows(path, rows, ["model", "legit_accuracy"])

    def run_stage(self, stage: str) -> None:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        log.info("stage %s", stage)
        try:
            getattr(self, stage)()
        except Exception as exc:
            self.write_error(stage, exc)
            raise StageError(stage, exc) from exc
        self.write_manifest(stage)

    def sweep(self, sweep: SweepConfig | None = None) -> list[dict]:
        sweep = sweep or self.plan.sweep or SweepConfig()
        res = self.result()
        rows = []
        for m in sweep.mobilities:
            if m not in self.mobilities:
                continue
            table = legit_rows(self.table(m)) if self.enriched_path(m).exists() or m in self._tables \
                else enrich_population(res, m, self.plan.binning)
            try:
                model = self.model(m)
            except FileNotFoundError:
                train_set, _ = split(table, self.plan.scenario.train_days)
                model = fit(self.plan, train_set, m)
                model.save(self.model_path(m))
                self._models[(m, "")] = model
            rows.extend(sweep_rows(self.plan, res, m, model, table, sweep))
        check_sweep_identity(rows)
        write_rows(self.out / "sweep_points.csv", rows, SWEEP_COLUMNS)
        self.write_manifest("sweep")
        return rows

    def report(self) -> dict[str, Path]:
        """baseline.csv, sweep.csv and one SVG chart per mobility from eval (and sweep) artifacts."""
        base_rows = []
        for m in MOBILITIES:
            path = self.out / f"eval_{m}.csv"
            if not path.exists():
                continue
            rows = {r["population"]: r for r in read_rows(path)}
            r = rows.get(LEGIT) or rows["all"]
            base_rows.append({"mobility": m, "n_events": int(r["n"]), "n_correct": int(r["n_both_correct"]),
                              "accuracy": float(r["accuracy"]), "location_accuracy": float(r["location_accuracy"])})
        if not base_rows:
            raise FileNotFoundError(f"{self.out}: no eval artifacts; run the eval stage first")
        write_rows(self.out / "baseline.csv", base_rows,
                   ["mobility", "n_events", "n_correct", "accuracy", "location_accuracy"])
        points = self.out / "sweep_points.csv"
        if points.exists():
            sweep = read_rows(points)
        else:
            sweep = [{"mobility": b["mobility"], "attack": "none", "n_ues": 0, "n_active_ues": 0,
                      "n_events": b["n_events"], "n_correct": b["n_correct"], "n_legit": b["n_events"],
                      "n_legit_correct": b["n_correct"], "n_adversarial": 0, "n_adversarial_correct": 0,
                      "mixed_accuracy": b["accuracy"], "legit_accuracy": b["accuracy"],
                      "adversarial_accuracy": ""} for b in base_rows]
        check_sweep_identity(sweep)
        write_rows(self.out / "sweep.csv", sweep, SWEEP_COLUMNS)
        paths = {"baseline": self.out / "baseline.csv", "sweep": self.out / "sweep.csv"}
        for b in base_rows:
            p = self.out / f"sweep_{b['mobility']}.svg"
            p.write_text(sweep_svg(b["mobility"], sweep))
            paths[f"chart_{b['mobility']}"] = p
        self.write_manifest("report")
        return paths

    # bookkeeping
    def write_error(self, stage: str, exc: Exception) -> None:
        err = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
        (self.out / "error.json").write_text(json.dumps(err, indent=2, sort_keys=True) + "\n")

    def write_manifest(self, step: str) -> None:
        path = self.out / "manifest.json"
        done = []
        if path.exists():
            done = json.loads(path.read_text()).get("completed", [])
        if step not in done:
            done.append(step)
        artifacts = {}
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name not in ("manifest.json", "error.json"):
                artifacts[p.relative_to(self.out).as_posix()] = file_sha256(p)
        manifest = {"config_hash": self.plan.digest(), "seed": self.plan.scenario.seed,
                    "plan": self.plan.to_dict(), "completed": done, "versions": versions(),
                    "artifacts": artifacts}
        manifest["plan"]["scenario"].pop("threads", None)
        manifest["plan"]["defense"].pop("threads", None)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def run(self) -> None:
        err = self.out / "error.json"
        if err.exists():
            err.unlink()
        for stage in self.plan.stages:
            self.run_stage(stage)
        if "eval" in self.plan.stages:
            if self.plan.sweep is not None:
                self.sweep()
            self.report()
