import numpy as np
import pytest
from hypothesis import given, strategies as st

from mobattack.attack import JumpAttackConfig, jump_attack_traces
from mobattack.physics import PhysicsDetector, cross_plane, distance_bound, implied_velocities
from mobattack.simulate import ScenarioConfig
from mobattack.topology import CellSite, Topology, signal_strength
from mobattack.traces import RawTrace

from conftest import SMALL_SCENARIO

LINE = Topology.from_cells([CellSite(0, 0, 0, 10), CellSite(1, 10_000, 0, 10)], bounds=(0, 0, 10_000, 10_000))


@given(st.floats(0, 50_000), st.floats(0, 1))
def test_distance_bound_covers_true_distance(d, load):
    s = signal_strength(LINE, (d, 0.0), 0, load)
    assert distance_bound(s, LINE.d0) >= d * (1 - 1e-9) - 1e-6


def test_implied_velocity_by_hand():
    # both records at signal 0.5 -> radius 500 each; 10 km apart, 5 minutes
    tr = RawTrace("x", [(0, 0, 0.5), (5, 1, 0.5)])
    assert implied_velocities(tr, LINE).tolist() == [(10_000 - 1000) / 5]
    near = RawTrace("y", [(0, 0, 0.01), (1, 1, 0.01)])
    assert implied_velocities(near, LINE).tolist() == [0.0]


def test_cross_plane():
    assert cross_plane(LINE, 0, 1)
    mid = Topology.from_cells([CellSite(0, 0, 0, 1), CellSite(1, 100, 0, 1)], bounds=(0, 0, 10_000, 10_000))
    assert not cross_plane(mid, 0, 1)


def test_legit_traces_never_flagged(small_result):
    cfg = ScenarioConfig.from_dict(SMALL_SCENARIO)
    det = PhysicsDetector(small_result.topology, cfg.max_legit_speed())
    for ds in small_result.legit.values():
        assert det.flagged(ds) == set()


def test_cross_plane_tuples_always_flagged(small_result):
    topo = small_result.topology
    det = PhysicsDetector(topo, 700.0)
    ds = jump_attack_traces(JumpAttackConfig(200, 2), topo, 600, seed=1)
    crossing = {t.imsi for t in ds.traces if cross_plane(topo, t.records[0][1], t.records[1][1])}
    assert crossing
    assert crossing <= det.flagged(ds)
