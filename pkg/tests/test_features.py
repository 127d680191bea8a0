import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from mobattack.features import (COLUMNS, FEATURES, TIME_BINS, TimeslotBinning, enrich, events_frame, home_enb,
                                read_enriched, split, time_of_day_bin, to_events, write_enriched)
from mobattack.topology import generate_topology
from mobattack.traces import Dataset, RawTrace

TOPO = generate_topology(20, bounds=(0, 0, 5000, 5000), seed=2)


def dataset(traces, horizon=7200, label="legit"):
    return Dataset(traces, {t.imsi: label for t in traces}, horizon)


def random_trace(rng, imsi, horizon=7200, n=40):
    times = np.sort(rng.choice(horizon, size=n, replace=False))
    cells, prev = [], -1
    for _ in times:
        c = int(rng.integers(20))
        while c == prev:
            c = int(rng.integers(20))
        cells.append(c)
        prev = c
    return RawTrace(imsi, [(int(t), c, float(rng.uniform(0.05, 1))) for t, c in zip(times, cells)])


def test_first_event_row_features():
    tr = RawTrace("09ccc864", [(163, 12, 0.189), (348, 10, 0.186)])
    ev = to_events(tr, 7200)
    assert (ev[0].cell, ev[0].timestamp, ev[0].timeslot) == (12, 163, 185)
    assert ev[1].timeslot == 7200 - 348
    assert TIME_BINS[time_of_day_bin(163)] == "early_morn"


def test_timeslot_clip_rules():
    assert [e.timeslot for e in to_events(RawTrace("a", [(0, 1, 0.5)]), 7200)] == [7200]
    assert [e.timeslot for e in to_events(RawTrace("a", [(0, 1, 0.5), (10, 2, 0.5), (20, 1, 0.5)]), 7200)] \
        == [10, 10, 7180]


def test_time_of_day_edges():
    assert TIME_BINS[time_of_day_bin(0)] == "early_morn"
    assert TIME_BINS[time_of_day_bin(1439)] == "night"
    with pytest.raises(ValueError):
        time_of_day_bin(1440)


def test_binning_upper_edges():
    b = TimeslotBinning()
    assert b([1, 5, 6, 15, 16, 30, 31, 60, 61, 180, 181, 7200]).tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    assert b.labels() == ["1-5", "6-15", "16-30", "31-60", "61-180", "181+"]
    with pytest.raises(ValueError):
        TimeslotBinning((5, 5))


def test_history_padding_and_sliding_window():
    rng = np.random.default_rng(0)
    traces = [random_trace(rng, f"{i:08x}") for i in range(3)]
    table = enrich(dataset(traces), TOPO)
    assert list(table.columns) == COLUMNS
    for tr in traces:
        rows = table[table.imsi == tr.imsi].reset_index(drop=True)
        first = rows.iloc[0]
        assert all(first[f"enode_{k}"] == -1 and first[f"time_{k}"] == -1 for k in range(1, 5))
        # the fifth event looks back at events 4, 3, 2, 1
        for i in range(len(tr.records)):
            for k in range(1, 5):
                want = tr.records[i - k][1] if i - k >= 0 else -1
                want_t = tr.records[i - k][0] % 1440 if i - k >= 0 else -1
                assert rows.loc[i, f"enode_{k}"] == want
                assert rows.loc[i, f"time_{k}"] == want_t
            assert rows.loc[i, "label_location"] == tr.records[i][1]
            assert rows.loc[i, "target_time"] == tr.records[i][0] % 1440
            assert list(rows.loc[i, [f"neigh_{k}" for k in range(1, 5)]]) == TOPO.neighbors(tr.records[i][1])


def test_time_bin_counts_match_manual_count():
    rng = np.random.default_rng(1)
    tr = random_trace(rng, "0000abcd", n=80)
    table = enrich(dataset([tr]), TOPO)
    for _, row in table.iterrows():
        day = row.timestamp // 1440
        same_day = [t % 1440 for t, _, _ in tr.records if t // 1440 == day]
        counts = [0] * 5
        for m in same_day:
            counts[time_of_day_bin(m)] += 1
        assert [row[b] for b in TIME_BINS] == counts


def test_home_enb_is_longest_attached_cell():
    # office 600 min/day, home the rest but split by a short hop elsewhere
    recs = []
    for d in range(4):
        base = d * 1440
        recs += [(base, 1, 0.5), (base + 480, 2, 0.5), (base + 1080, 3, 0.5), (base + 1100, 1, 0.5)]
    tr = RawTrace("0000beef", recs)
    ev = events_frame(dataset([tr], horizon=5760))
    # cell 1: 480 + 340 per day = 820 > 600 on cell 2
    assert home_enb(ev, 5760)["0000beef"] == 1


def test_home_enb_office_dominant():
    recs = []
    for d in range(2):
        base = d * 1440
        recs += [(base, 1, 0.5), (base + 500, 2, 0.5), (base + 1100, 3, 0.5)]
    ev = events_frame(dataset([RawTrace("00000001", recs)], horizon=2880))
    # per day: cell 1 500 min, cell 2 600 min, cell 3 340 min
    assert home_enb(ev, 2880)["00000001"] == 2


def test_split_partition_and_ratio():
    rng = np.random.default_rng(5)
    traces = [random_trace(rng, f"{i:08x}", n=200) for i in range(20)]
    table = enrich(dataset(traces), TOPO)
    train, test = split(table, 4)
    assert len(train) + len(test) == len(table)
    assert (test.timestamp >= 4 * 1440).all() and (train.timestamp < 4 * 1440).all()
    assert abs(len(train) / (4 * len(test)) - 1) < 0.05
    with pytest.raises(ValueError):
        split(table, 10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_history_never_crosses_imsis(seed):
    rng = np.random.default_rng(seed)
    traces = [random_trace(rng, f"{i:08x}", n=int(rng.integers(1, 8))) for i in range(4)]
    table = enrich(dataset(traces), TOPO)
    for tr in traces:
        rows = table[table.imsi == tr.imsi]
        own = {c for _, c, _ in tr.records} | {-1}
        for k in range(1, 5):
            assert set(rows[f"enode_{k}"]) <= own


def test_enriched_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    table = enrich(dataset([random_trace(rng, "00c0ffee")]), TOPO)
    write_enriched(table, tmp_path / "e.csv")
    back = read_enriched(tmp_path / "e.csv")
    pd.testing.assert_frame_equal(back.reset_index(drop=True), table.reset_index(drop=True), check_dtype=False)
    assert len(FEATURES) == 21
