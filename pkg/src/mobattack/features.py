"""Event-based transformation of raw traces and the 21-column enriched training table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .topology import N_NEIGHBORS, Topology
from .traces import Dataset, RawTrace

MINUTES_PER_DAY = 1440
PAD = -1

HISTORY = 4
TIME_BINS = ("early_morn", "morning", "noon", "evening", "night")
# upper edges (exclusive) of early_morning, morning, noon, evening; night runs to 1440
TIME_BIN_EDGES = (360, 660, 900, 1200)

FEATURES = (
    [f"enode_{i}" for i in range(1, HISTORY + 1)]
    + [f"time_{i}" for i in range(1, HISTORY + 1)]
    + ["target_time", "sig_st", "imsi", "home_enb"]
    + list(TIME_BINS)
    + [f"neigh_{i}" for i in range(1, N_NEIGHBORS + 1)]
)
LABEL_COLUMNS = ["label_location", "label_timeslot_bin", "day", "split", "truth_label"]
# raw values kept for clustering and auditing
EXTRA_COLUMNS = ["timestamp", "timeslot"]
COLUMNS = FEATURES + LABEL_COLUMNS + EXTRA_COLUMNS


@dataclass(frozen=True)
class MobilityEvent:
    imsi: str
    cell: int
    timestamp: int
    signal: float
    timeslot: int


@dataclass(frozen=True)
class TimeslotBinning:
    """Inclusive upper edges in minutes; the last bin is open-ended.

    The default gives [1-5], [6-15], [16-30], [31-60], [61-180], [181+].
    """

    upper_edges: tuple[int, ...] = (5, 15, 30, 60, 180)

    def __post_init__(self):
        e = self.upper_edges
        if not e or e[0] < 1 or any(b <= a for a, b in zip(e, e[1:])):
            raise ValueError(f"bin edges must be strictly increasing and >= 1: {e}")

    @property
    def n_bins(self) -> int:
        return len(self.upper_edges) + 1

    def __call__(self, timeslot):
        ts = np.asarray(timeslot)
        if (ts < 1).any():
            raise ValueError("timeslots must be >= 1")
        return np.searchsorted(np.asarray(self.upper_edges), ts, side="left")

    def labels(self) -> list[str]:
        lo = [1] + [e + 1 for e in self.upper_edges]
        hi = [str(e) for e in self.upper_edges] + [""]
        return [f"{a}-{b}" if b else f"{a}+" for a, b in zip(lo, hi)]


def to_events(raw: RawTrace, horizon: int) -> list[MobilityEvent]:
    """One event per record; the last record's timeslot runs to the horizon end."""
    out = []
    recs = raw.records
    for i, (t, cell, sig) in enumerate(recs):
        nxt = recs[i + 1][0] if i + 1 < len(recs) else horizon
        out.append(MobilityEvent(raw.imsi, int(cell), int(t), float(sig), max(1, int(nxt - t))))
    return out


def time_of_day_bin(minute_of_day) -> int:
    if not 0 <= minute_of_day < MINUTES_PER_DAY:
        raise ValueError(f"minute_of_day {minute_of_day} outside [0, 1440)")
    return int(np.searchsorted(TIME_BIN_EDGES, minute_of_day, side="right"))


def events_frame(dataset: Dataset) -> pd.DataFrame:
    """All events of a dataset, sorted by IMSI then timestamp."""
    imsi, cell, ts, sig = [], [], [], []
    for tr in dataset.traces:
        n = len(tr.records)
        if not n:
            continue
        imsi.extend([tr.imsi] * n)
        for t, c, s in tr.records:
            ts.append(t)
            cell.append(c)
            sig.append(s)
    df = pd.DataFrame({
        "imsi": pd.Series(imsi, dtype=object),
        "cell": np.asarray(cell, dtype=np.int64),
        "timestamp": np.asarray(ts, dtype=np.int64),
        "signal": np.asarray(sig, dtype=float),
    })
    df = df.sort_values(["imsi", "timestamp"], kind="stable").reset_index(drop=True)
    nxt = df.groupby("imsi", sort=False)["timestamp"].shift(-1)
    nxt = nxt.fillna(dataset.horizon).astype(np.int64)
    df["timeslot"] = np.maximum(1, nxt - df["timestamp"]).astype(np.int64)
    df["truth_label"] = df["imsi"].map(dataset.labels)
    return df


def home_enb(events: pd.DataFrame, boundary: int) -> pd.Series:
    """Per-IMSI cell with the largest attached time before ``boundary`` (lowest id on ties)."""
    start = events["timestamp"].to_numpy()
    end = np.minimum(start + events["timeslot"].to_numpy(), boundary)
    dur = np.clip(end - start, 0, None)
    frame = pd.DataFrame({"imsi": events["imsi"], "cell": events["cell"], "dur": dur})
    frame = frame[frame["dur"] > 0]
    tot = frame.groupby(["imsi", "cell"], sort=True)["dur"].sum().reset_index()
    tot = tot.sort_values(["imsi", "dur", "cell"], ascending=[True, False, True], kind="stable")
    return tot.drop_duplicates("imsi").set_index("imsi")["cell"]


def enrich(dataset: Dataset, topology: Topology, binning: TimeslotBinning | None = None,
           boundary_day: int = 4) -> pd.DataFrame:
    """Enriched table in canonical (imsi, timestamp) order with FEATURES + labels.

    History columns only ever look at the same IMSI's earlier events.
    """
    binning = binning or TimeslotBinning()
    ev = events_frame(dataset)
    boundary = boundary_day * MINUTES_PER_DAY
    out = pd.DataFrame(index=ev.index)
    g = ev.groupby("imsi", sort=False)
    for k in range(1, HISTORY + 1):
        out[f"enode_{k}"] = g["cell"].shift(k).fillna(PAD).astype(np.int64)
    tod = ev["timestamp"] % MINUTES_PER_DAY
    for k in range(1, HISTORY + 1):
        out[f"time_{k}"] = g["timestamp"].shift(k).mod(MINUTES_PER_DAY).fillna(PAD).astype(np.int64)
    out["target_time"] = tod.astype(np.int64)
    out["sig_st"] = ev["signal"]
    out["imsi"] = ev["imsi"]
    home = home_enb(ev, boundary)
    out["home_enb"] = ev["imsi"].map(home).fillna(PAD).astype(np.int64)

    day = (ev["timestamp"] // MINUTES_PER_DAY).astype(np.int64)
    tbin = np.searchsorted(TIME_BIN_EDGES, tod.to_numpy(), side="right")
    counts = (pd.DataFrame({"imsi": ev["imsi"], "day": day, "bin": tbin})
              .groupby(["imsi", "day", "bin"]).size().unstack("bin", fill_value=0)
              .reindex(columns=range(len(TIME_BINS)), fill_value=0))
    counts.columns = list(TIME_BINS)
    joined = pd.DataFrame({"imsi": ev["imsi"], "day": day}).join(counts, on=["imsi", "day"])
    for name in TIME_BINS:
        out[name] = joined[name].to_numpy(dtype=np.int64)

    ids = topology.ids
    neigh = np.full((len(ids), N_NEIGHBORS), PAD, dtype=np.int64)
    for i, c in enumerate(ids):
        nb = topology.adjacency[int(c)]
        neigh[i, :len(nb)] = nb
    pos = np.array([topology.index_of(c) for c in ev["cell"].unique()]) if len(ev) else np.zeros(0, int)
    lookup = dict(zip(ev["cell"].unique(), pos))
    cell_idx = ev["cell"].map(lookup).to_numpy(dtype=np.int64) if len(ev) else np.zeros(0, int)
    for k in range(N_NEIGHBORS):
        out[f"neigh_{k + 1}"] = neigh[cell_idx, k]

    out["label_location"] = ev["cell"]
    out["label_timeslot_bin"] = binning(ev["timeslot"].to_numpy()).astype(np.int64)
    out["day"] = day
    out["split"] = np.where(ev["timestamp"] < boundary, "train", "test")
    out["truth_label"] = ev["truth_label"]
    out["timestamp"] = ev["timestamp"]
    out["timeslot"] = ev["timeslot"]
    return out[COLUMNS]


def split(table: pd.DataFrame, boundary_day: int = 4) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Day-based partition: timestamps before ``boundary_day`` train, the rest test."""
    boundary = boundary_day * MINUTES_PER_DAY
    mask = table["timestamp"] < boundary
    train, test = table[mask], table[~mask]
    if train.empty or test.empty:
        raise ValueError(f"split at day {boundary_day} leaves an empty side "
                         f"(train={len(train)}, test={len(test)})")
    return train, test


def write_enriched(table: pd.DataFrame, path) -> None:
    table[COLUMNS].to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def read_enriched(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"imsi": str})
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return df[COLUMNS]
