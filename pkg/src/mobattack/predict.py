"""Location and timeslot predictors and the conditional (location-gated) accuracy."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd

from .features import FEATURES
from .forest import EnsembleSpec, TreeEnsemble

log = logging.getLogger(__name__)

SCHEMA_HASH = hashlib.sha256(",".join(FEATURES).encode()).hexdigest()[:16]


class SchemaError(ValueError):
    pass


def feature_matrix(table: pd.DataFrame) -> np.ndarray:
    missing = [c for c in FEATURES if c not in table.columns]
    if missing:
        raise SchemaError(f"missing feature columns: {missing}")
    X = np.empty((len(table), len(FEATURES)), dtype=np.float64)
    for j, col in enumerate(FEATURES):
        if col == "imsi":
            X[:, j] = [int(v, 16) for v in table[col].astype(str)]
        else:
            X[:, j] = table[col].to_numpy(dtype=np.float64)
    return X


def extra_trees(spec: EnsembleSpec) -> EnsembleSpec:
    """The timeslot head's default: same size, no bootstrap, random thresholds."""
    return replace(spec, bootstrap=False, random_thresholds=True, seed=spec.seed + 1)


@dataclass
class TrainedPredictor:
    location_head: TreeEnsemble
    timeslot_head: TreeEnsemble
    mobility: str = ""
    schema_hash: str = SCHEMA_HASH
    degenerate: list[str] = field(default_factory=list)

    def predict_matrix(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.location_head.predict(X), self.timeslot_head.predict(X)

    def save(self, path) -> None:
        arrays = {}
        arrays.update(self.location_head.to_arrays("loc_"))
        arrays.update(self.timeslot_head.to_arrays("ts_"))
        arrays["meta"] = np.array(json.dumps({"mobility": self.mobility, "schema_hash": self.schema_hash,
                                              "features": FEATURES, "degenerate": self.degenerate}))
        with open(path, "wb") as fh:
            np.savez_compressed(fh, **arrays)

    @classmethod
    def load(cls, path) -> "TrainedPredictor":
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        meta = json.loads(str(arrays["meta"]))
        if meta["schema_hash"] != SCHEMA_HASH:
            raise SchemaError(f"{path}: model schema {meta['schema_hash']} != {SCHEMA_HASH}")
        return cls(TreeEnsemble.from_arrays(arrays, "loc_"), TreeEnsemble.from_arrays(arrays, "ts_"),
                   meta["mobility"], meta["schema_hash"], meta["degenerate"])


def train(train_set: pd.DataFrame, spec: EnsembleSpec = EnsembleSpec(),
          timeslot_spec: EnsembleSpec | None = None, mobility: str = "", n_jobs: int = 1) -> TrainedPredictor:
    """Fit both heads independently on the same 21 features.

    The location head uses ``spec`` as given (bootstrap best-split by default);
    the timeslot head defaults to the extra-trees variant of it.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    timeslot_spec = timeslot_spec or extra_trees(spec)
    X = feature_matrix(train_set)
    degenerate = []
    for col in ("label_location", "label_timeslot_bin"):
        if train_set[col].nunique() == 1:
            log.warning("%s has a single class; fitting a constant predictor", col)
            degenerate.append(col)
    loc = TreeEnsemble(spec).fit(X, train_set["label_location"].to_numpy(), n_jobs)
    ts = TreeEnsemble(timeslot_spec).fit(X, train_set["label_timeslot_bin"].to_numpy(), n_jobs)
    return TrainedPredictor(loc, ts, mobility, SCHEMA_HASH, degenerate)


def predict(model: TrainedPredictor, events) -> tuple[np.ndarray, np.ndarray]:
    """(cell, timeslot bin) predictions for a table of enriched events or one event mapping."""
    if isinstance(events, dict):
        events = pd.DataFrame([events])
    elif isinstance(events, pd.Series):
        events = events.to_frame().T
    if model.schema_hash != SCHEMA_HASH:
        raise SchemaError("model was trained on a different feature schema")
    return model.predict_matrix(feature_matrix(events))


@dataclass
class PopulationScore:
    n: int
    n_location_correct: int
    n_both_correct: int

    @property
    def accuracy(self) -> float:
        return self.n_both_correct / self.n if self.n else float("nan")

    @property
    def location_accuracy(self) -> float:
        return self.n_location_correct / self.n if self.n else float("nan")


@dataclass
class AccuracyReport:
    n: int
    n_location_correct: int
    n_both_correct: int
    breakdown: dict[str, PopulationScore]
    # per-event outcome: 1 iff both heads are right
    outcomes: np.ndarray = field(repr=False, default=None)

    @property
    def accuracy(self) -> float:
        return self.n_both_correct / self.n

    @property
    def location_accuracy(self) -> float:
        return self.n_location_correct / self.n

    def rows(self) -> list[dict]:
        rows = [{"population": "all", "n": self.n, "n_location_correct": self.n_location_correct,
                 "n_both_correct": self.n_both_correct, "accuracy": self.accuracy,
                 "location_accuracy": self.location_accuracy}]
        for pop in sorted(self.breakdown):
            s = self.breakdown[pop]
            rows.append({"population": pop, "n": s.n, "n_location_correct": s.n_location_correct,
                         "n_both_correct": s.n_both_correct, "accuracy": s.accuracy,
                         "location_accuracy": s.location_accuracy})
        return rows

    def to_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)

    def to_text(self) -> str:
        lines = [f"{'population':<12}{'n':>9}{'loc_acc':>9}{'acc':>9}"]
        for r in self.rows():
            lines.append(f"{r['population']:<12}{r['n']:>9}{r['location_accuracy']:>9.4f}{r['accuracy']:>9.4f}")
        return "\n".join(lines) + "\n"


def score(true_cell, true_bin, pred_cell, pred_bin, populations) -> AccuracyReport:
    true_cell, true_bin = np.asarray(true_cell), np.asarray(true_bin)
    loc_ok = np.asarray(pred_cell) == true_cell
    both = loc_ok & (np.asarray(pred_bin) == true_bin)
    populations = np.asarray(populations)
    breakdown = {}
    for pop in np.unique(populations):
        m = populations == pop
        breakdown[str(pop)] = PopulationScore(int(m.sum()), int(loc_ok[m].sum()), int(both[m].sum()))
    return AccuracyReport(len(true_cell), int(loc_ok.sum()), int(both.sum()), breakdown, both.astype(np.int8))


def evaluate(model: TrainedPredictor, test_set: pd.DataFrame) -> AccuracyReport:
    """An event scores 1 only if the predicted cell and the predicted timeslot bin are both right."""
    if len(test_set) == 0:
        raise ValueError("empty test set")
    pc, pb = predict(model, test_set)
    return score(test_set["label_location"], test_set["label_timeslot_bin"], pc, pb,
                 test_set["truth_label"].fillna("legit"))


class DecompositionError(ValueError):
    pass


def mixed_accuracy_decomposition(report: AccuracyReport) -> dict:
    """Split total accuracy into event-weighted per-population terms, checked exactly."""
    n = sum(s.n for s in report.breakdown.values())
    if n != report.n or sum(s.n_both_correct for s in report.breakdown.values()) != report.n_both_correct:
        raise DecompositionError("population breakdown does not add up to the report totals")
    terms = {pop: Fraction(s.n, n) * Fraction(s.n_both_correct, s.n)
             for pop, s in report.breakdown.items() if s.n}
    total = sum(terms.values(), Fraction(0))
    exact = Fraction(report.n_both_correct, report.n)
    if total != exact:
        raise DecompositionError(f"weighted mean {total} != accuracy {exact}")
    return {"accuracy": exact, "terms": terms,
            "weights": {pop: Fraction(s.n, n) for pop, s in report.breakdown.items()}}


def write_report_json(report: AccuracyReport, path) -> None:
    Path(path).write_text(json.dumps({"rows": report.rows()}, indent=2, sort_keys=True) + "\n")


__all__ = ["AccuracyReport", "EnsembleSpec", "TrainedPredictor", "evaluate", "feature_matrix",
           "mixed_accuracy_decomposition", "predict", "train", "asdict"]
