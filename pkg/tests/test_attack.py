import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobattack.attack import (AttackConfigError, GMapsConfig, JumpAttackConfig, adversarial_event_count,
                              gmaps_traces, jump_attack_traces, walk_positions)
from mobattack.features import to_events
from mobattack.topology import CellSite, Topology, generate_topology

TOPO = generate_topology(60, bounds=(0, 0, 10_000, 10_000), seed=4)


@pytest.mark.parametrize("k,events,idle", [(2, 50, 1), (5, 20, 4), (10, 10, 9)])
def test_small_attack_counts(k, events, idle):
    cfg = JumpAttackConfig(10, k, dwell=1)
    assert tuple(adversarial_event_count(cfg, 10)) == (events, idle)
    assert jump_attack_traces(cfg, TOPO, 10, seed=0).n_events() == events


def test_zero_ues():
    assert adversarial_event_count(JumpAttackConfig(0, 2), 7200).events == 0
    assert jump_attack_traces(JumpAttackConfig(0, 2), TOPO, 7200, 0).traces == []


def test_five_day_tuple_count():
    # 100 sets * floor(7200 / 5)
    cfg = JumpAttackConfig(200, 2, dwell=5)
    assert adversarial_event_count(cfg, 7200).events == 144_000
    assert abs(144_000 - 142_560) / 142_560 < 0.05


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 5, 10]), st.integers(0, 8), st.integers(1, 30), st.integers(1, 600))
def test_count_formula_matches_generator(k, sets, dwell, duration):
    cfg = JumpAttackConfig(sets * k, k, dwell)
    ds = jump_attack_traces(cfg, TOPO, duration, seed=sets)
    assert ds.n_events() == adversarial_event_count(cfg, duration).events == sets * (duration // dwell)


def test_sets_cycle_cells_with_constant_timeslot():
    ds = jump_attack_traces(JumpAttackConfig(10, 5, dwell=7), TOPO, 700, seed=3)
    for tr in ds.traces:
        tr.validate()
        cells = [c for _, c, _ in tr.records]
        assert len(set(cells[:5])) == 5
        assert all(cells[i] == cells[i % 5] for i in range(len(cells)))
        ts = [e.timeslot for e in to_events(tr, 700)]
        assert set(ts) == {7}


def test_smaller_attack_is_prefix_of_larger():
    small = jump_attack_traces(JumpAttackConfig(20, 2), TOPO, 500, seed=9)
    large = jump_attack_traces(JumpAttackConfig(60, 2), TOPO, 500, seed=9)
    assert [t.records for t in small.traces] == [t.records for t in large.traces[:10]]


def test_invalid_configs():
    with pytest.raises(AttackConfigError):
        JumpAttackConfig(3, 2)
    with pytest.raises(AttackConfigError):
        JumpAttackConfig(2, 3)
    with pytest.raises(AttackConfigError):
        JumpAttackConfig(2, 2, cell_assignment=((1, 1),))
    with pytest.raises(AttackConfigError):
        GMapsConfig(1, path=((0, 0),))


def test_explicit_cell_assignment():
    ds = jump_attack_traces(JumpAttackConfig(4, 2, cell_assignment=((3, 8), (8, 3))), TOPO, 20, 0)
    assert [c for _, c, _ in ds.traces[0].records] == [3, 8, 3, 8]
    assert [c for _, c, _ in ds.traces[1].records] == [8, 3, 8, 3]


def test_distant_sets_are_spread_out():
    ds = jump_attack_traces(JumpAttackConfig(2, 2, distant=True), TOPO, 10, 0)
    a, b = ds.traces[0].records[0][1], ds.traces[0].records[1][1]
    (ax, ay), (bx, by) = TOPO.position(a), TOPO.position(b)
    d = np.hypot(TOPO.xy[:, None, 0] - TOPO.xy[None, :, 0], TOPO.xy[:, None, 1] - TOPO.xy[None, :, 1])
    assert np.hypot(ax - bx, ay - by) == pytest.approx(d[TOPO.index_of(a)].max())


def test_gmaps_single_cell_gives_one_record():
    topo = Topology.from_cells([CellSite(0, 0, 0, 10), CellSite(1, 10_000, 10_000, 10)], bounds=(0, 0, 10_000, 10_000))
    ds = gmaps_traces(GMapsConfig(1, path=((0, 0), (500, 0))), topo, 7200, 0)
    assert len(ds.traces[0].records) == 1


def test_gmaps_traces_identical_except_imsi():
    ds = gmaps_traces(GMapsConfig(200), TOPO, 7200, 0)
    assert len(ds.imsis) == 200
    first = ds.traces[0].records
    assert all(t.records == first for t in ds.traces)


def test_gmaps_records_match_minute_by_minute_attach():
    path = ((1000.0, 5000.0), (4000.0, 5000.0))
    ds = gmaps_traces(GMapsConfig(2, path=path), TOPO, 600, 0)
    expected, prev = [], None
    for t in range(600):
        # walk 84 m/min, bouncing on the 3 km segment
        s = (84.0 * t) % 6000.0
        s = 6000.0 - s if s > 3000.0 else s
        p = (1000.0 + s, 5000.0)
        sig = [(1 / (1 + np.hypot(p[0] - c.x, p[1] - c.y) / 500), -c.id) for c in TOPO.cells]
        best = -max(sig)[1]
        if best != prev:
            expected.append((t, best))
            prev = best
    assert [(t, c) for t, c, _ in ds.traces[0].records] == expected


def test_walk_bounces_between_ends():
    path = ((0.0, 0.0), (300.0, 0.0), (300.0, 300.0))
    pos = walk_positions(path, 100.0, np.array([0, 3, 5, 6, 7, 12]))
    assert pos.tolist() == [[0, 0], [300, 0], [300, 200], [300, 300], [300, 200], [0, 0]]
