"""IMSI-keyed raw traces, the labels sidecar, and their on-disk formats."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

LEGIT = "legit"
ATTACK_LABELS = ("tuple", "quintuple", "decuple", "gmaps")
LABELS = (LEGIT,) + ATTACK_LABELS


class TraceError(ValueError):
    pass


@dataclass
class RawTrace:
    """Attachment changes of one IMSI: ``records`` is a list of (minute, cell, signal)."""

    imsi: str
    records: list[tuple[int, int, float]] = field(default_factory=list)
    # debug only: UE position at each record, never serialised
    positions: list[tuple[float, float]] | None = field(default=None, compare=False, repr=False)

    def validate(self) -> None:
        for (t0, c0, _), (t1, c1, _) in zip(self.records, self.records[1:]):
            if t1 <= t0:
                raise TraceError(f"{self.imsi}: timestamps not strictly increasing ({t0} -> {t1})")
            if c1 == c0:
                raise TraceError(f"{self.imsi}: consecutive records on the same cell {c0} at {t1}")
        for _, _, s in self.records:
            if not 0.0 <= s <= 1.0:
                raise TraceError(f"{self.imsi}: signal {s} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps({
            "imsi": self.imsi,
            "enodeb_path": {str(t): int(c) for t, c, _ in self.records},
            "signal_strength": {str(t): float(s) for t, _, s in self.records},
        })

    @classmethod
    def from_json(cls, line: str) -> "RawTrace":
        obj = json.loads(line)
        try:
            path = obj["enodeb_path"]
            sig = obj["signal_strength"]
            ts = sorted(int(t) for t in path)
            records = [(t, int(path[str(t)]), float(sig[str(t)])) for t in ts]
            return cls(str(obj["imsi"]), records)
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"malformed trace line: {exc}") from None


@dataclass
class Dataset:
    traces: list[RawTrace]
    labels: dict[str, str]
    horizon: int

    def __post_init__(self):
        missing = [t.imsi for t in self.traces if t.imsi not in self.labels]
        if missing:
            raise TraceError(f"traces without a label: {missing[:5]}")

    @property
    def imsis(self) -> set[str]:
        return {t.imsi for t in self.traces}

    def n_events(self) -> int:
        return sum(len(t.records) for t in self.traces)

    def by_label(self, label: str) -> "Dataset":
        keep = [t for t in self.traces if self.labels[t.imsi] == label]
        return Dataset(keep, {t.imsi: label for t in keep}, self.horizon)


def empty_dataset(horizon: int) -> Dataset:
    return Dataset([], {}, horizon)


def merge(legit: Dataset, adversarial: Dataset) -> Dataset:
    """Disjoint union of two datasets; labels carry provenance."""
    clash = legit.imsis & adversarial.imsis
    if clash:
        raise TraceError(f"IMSI collision between datasets: {sorted(clash)[:5]}")
    labels = dict(legit.labels)
    labels.update(adversarial.labels)
    return Dataset(legit.traces + adversarial.traces, labels, max(legit.horizon, adversarial.horizon))


class ImsiAllocator:
    """Seeded 8-hex-digit identities; re-hashes on collision so every IMSI is unique."""

    def __init__(self, seed: int, taken=()):
        self.seed = int(seed)
        self.taken = set(taken)

    def __call__(self, population: str, index: int) -> str:
        attempt = 0
        while True:
            key = f"{self.seed}/{population}/{index}/{attempt}".encode()
            imsi = hashlib.blake2b(key, digest_size=4).hexdigest()
            if imsi not in self.taken:
                self.taken.add(imsi)
                return imsi
            attempt += 1


def write_traces(path, traces) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tr in traces:
            fh.write(tr.to_json())
            fh.write("\n")


def read_traces(path) -> list[RawTrace]:
    with open(path, encoding="utf-8") as fh:
        return [RawTrace.from_json(line) for line in fh if line.strip()]


def write_labels(path, labels: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["imsi", "label"])
        for imsi in sorted(labels):
            w.writerow([imsi, labels[imsi]])


def read_labels(path) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["imsi", "label"]:
            raise TraceError(f"{path}: expected header imsi,label")
        out = {}
        for row in reader:
            if row["label"] not in LABELS:
                raise TraceError(f"{path}: unknown label {row['label']!r}")
            out[row["imsi"]] = row["label"]
    return out


def write_dataset(dataset: Dataset, traces_path, labels_path) -> None:
    write_traces(traces_path, sorted(dataset.traces, key=lambda t: t.imsi))
    write_labels(labels_path, dataset.labels)


def read_dataset(traces_path, labels_path, horizon: int) -> Dataset:
    traces = read_traces(traces_path)
    labels = read_labels(labels_path)
    return Dataset(traces, {t.imsi: labels[t.imsi] for t in traces if t.imsi in labels}, horizon)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
