import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobattack.topology import (CellSite, Topology, TopologyError, attach, attach_many, generate_topology,
                                hilbert_index, load_topology, signal_strength)


def write_csv(path, rows):
    path.write_text("cell_id,x_m,y_m,capacity\n" + "".join(f"{i},{x},{y},{c}\n" for i, x, y, c in rows))
    return path


def brute_neighbors(cells, k=4):
    """Sort every other cell by (distance, id) by hand."""
    out = {}
    for a in cells:
        others = sorted((np.hypot(a.x - b.x, a.y - b.y), b.id) for b in cells if b.id != a.id)
        out[a.id] = [i for _, i in others[:k]]
    return out


def test_single_cell_has_empty_adjacency(tmp_path):
    topo = load_topology(write_csv(tmp_path / "t.csv", [(0, 10, 10, 100)]))
    assert topo.neighbors(0) == []


def test_collinear_adjacency(tmp_path):
    topo = load_topology(write_csv(tmp_path / "t.csv", [(i, i, 0, 100) for i in range(5)]))
    assert topo.neighbors(0) == [1, 2, 3, 4]


def test_coincident_cells_list_each_other(tmp_path):
    topo = load_topology(write_csv(tmp_path / "t.csv", [(7, 5, 5, 10), (3, 5, 5, 10)]))
    assert topo.neighbors(7) == [3]
    assert topo.neighbors(3) == [7]


@pytest.mark.parametrize("rows,msg", [
    ([(1, 0, 0, 10), (1, 5, 5, 10)], "duplicate"),
    ([(1, 0, 0, 0)], "capacity"),
])
def test_invalid_files_rejected(tmp_path, rows, msg):
    with pytest.raises(TopologyError, match=msg):
        load_topology(write_csv(tmp_path / "t.csv", rows))


def test_bad_header_and_malformed_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("id,x,y\n1,2,3\n")
    with pytest.raises(TopologyError, match="header"):
        load_topology(p)
    p.write_text("cell_id,x_m,y_m,capacity\n1,2,3\n")
    with pytest.raises(TopologyError, match="4 fields"):
        load_topology(p)


def test_generate_single_and_deterministic():
    assert generate_topology(1, seed=0).neighbors(0) == []
    a, b = generate_topology(50, seed=42), generate_topology(50, seed=42)
    assert a.cells == b.cells


def test_generated_adjacency_matches_brute_force():
    topo = generate_topology(200, bounds=(0, 0, 10_000, 10_000), seed=3)
    oracle = brute_neighbors(topo.cells)
    for c in topo.cells:
        nb = topo.neighbors(c.id)
        assert nb == oracle[c.id]
        assert len(nb) == 4
        for j in nb:
            assert np.hypot(c.x - topo.position(j)[0], c.y - topo.position(j)[1]) <= topo.diagonal


@pytest.mark.parametrize("order", ["random", "hilbert"])
def test_id_orders_are_permutations(order):
    topo = generate_topology(30, seed=5, id_order=order)
    assert sorted(topo.ids.tolist()) == list(range(30))
    assert sorted((c.x, c.y) for c in topo.cells) == sorted((c.x, c.y) for c in generate_topology(30, seed=5).cells)


def test_hilbert_index_visits_every_cell_once():
    order = 3
    keys = sorted(hilbert_index(x, y, order) for x in range(8) for y in range(8))
    assert keys == list(range(64))
    # consecutive curve positions are grid neighbours
    pos = {hilbert_index(x, y, order): (x, y) for x in range(8) for y in range(8)}
    for i in range(63):
        (ax, ay), (bx, by) = pos[i], pos[i + 1]
        assert abs(ax - bx) + abs(ay - by) == 1


def two_cell(ids=(0, 1), xs=(0.0, 1000.0)):
    return Topology.from_cells([CellSite(ids[0], xs[0], 0.0, 10), CellSite(ids[1], xs[1], 0.0, 10)],
                               bounds=(0, -10, 1000, 10))


def test_signal_examples():
    topo = two_cell()
    assert signal_strength(topo, (0, 0), 0) == 1.0
    assert signal_strength(topo, (500, 0), 0) == 0.5
    # frozen from 1 / (1 + 2145/500)
    assert signal_strength(topo, (2145, 0), 0) == pytest.approx(0.18903591682419657, abs=1e-15)
    assert round(signal_strength(topo, (2145, 0), 0), 3) == 0.189
    assert signal_strength(topo, (0, 0), 0, load_fraction=1.0) == 0.5
    with pytest.raises(ValueError):
        signal_strength(topo, (0, 0), 0, load_fraction=1.5)


@given(st.floats(0, 1e5), st.floats(0, 1e5), st.floats(0, 1), st.floats(0, 1))
def test_signal_monotone(d1, d2, l1, l2):
    topo = two_cell()
    s = lambda d, l: signal_strength(topo, (d, 0.0), 0, l)
    if d1 <= d2:
        assert s(d1, l1) >= s(d2, l1)
    if l1 <= l2:
        assert s(d1, l1) >= s(d1, l2)
    assert 0.0 <= s(d1, l1) <= 1.0


def test_attach_rules():
    single = Topology.from_cells([CellSite(5, 0, 0, 1)], bounds=(0, 0, 100, 100))
    assert attach(single, (100, 100)) == 5
    topo = two_cell(ids=(9, 4), xs=(0.0, 1000.0))
    assert attach(topo, (500, 0)) == 4


def test_attach_load_flip_matches_formula():
    topo = two_cell()
    pos = (400.0, 0.0)
    near = (1 / (1 + 400 / 500)) * 0.5
    far = 1 / (1 + 600 / 500)
    assert near < far
    assert attach(topo, pos, loads=[10, 0]) == 1
    assert attach(topo, pos) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_attach_many_matches_exhaustive_scan(seed, loaded):
    rng = np.random.default_rng(seed)
    topo = generate_topology(40, bounds=(0, 0, 5000, 5000), seed=seed)
    pos = rng.uniform(-500, 5500, size=(50, 2))
    frac = rng.uniform(0, 1, len(topo)) if loaded else None
    idx, sig = attach_many(topo, pos, frac)
    for p, i, s in zip(pos, idx, sig):
        best = max(((signal_strength(topo, p, int(c), 0.0 if frac is None else frac[j]), -int(c))
                    for j, c in enumerate(topo.ids)))
        assert int(topo.ids[i]) == -best[1]
        assert s == pytest.approx(best[0], rel=1e-12)


def test_csv_roundtrip(tmp_path):
    topo = generate_topology(20, seed=1)
    topo.to_csv(tmp_path / "t.csv")
    back = load_topology(tmp_path / "t.csv", bounds=topo.bounds)
    assert back.cells == topo.cells
    assert back.adjacency == topo.adjacency
