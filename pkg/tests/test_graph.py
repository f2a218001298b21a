import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perc_chem.errors import ConfigError, GeometryError, ResourceError
from perc_chem.graph import (
    VertexSet,
    build_box,
    build_heisenberg,
    build_lattice,
    heisenberg_mul,
    lattice_ball_size,
    read_region,
    require_interior,
    write_region,
)

from conftest import heis_ball_oracle, l1_ball


def test_z2_small_ball():
    g = build_lattice(2, 3)
    assert g.n_vertices == 25
    interior = [v for v in range(g.n_vertices) if g.within(v, 1)]
    assert set(g.degrees()[interior].tolist()) == {4}


def test_degenerate_ball():
    g = build_lattice(1, 0)
    assert g.n_vertices == 1 and g.n_edges == 0


def test_z3_count_matches_enumeration():
    assert build_lattice(3, 5).n_vertices == len(l1_ball(3, 5)) == 231


@pytest.mark.parametrize("d,L", [(1, 4), (2, 6), (3, 3), (4, 2)])
def test_lattice_matches_oracle(d, L):
    g = build_lattice(d, L)
    assert sorted(map(tuple, g.coords.tolist())) == sorted(l1_ball(d, L))
    assert lattice_ball_size(d, L) == g.n_vertices
    # edges are exactly unit L1 steps
    diff = np.abs(g.coords[g.edges[:, 0]] - g.coords[g.edges[:, 1]]).sum(axis=1)
    assert (diff == 1).all()
    expected = sum(1 for c in l1_ball(d, L) for i in range(d) if sum(map(abs, c)) - abs(c[i]) + abs(c[i] + 1) <= L)
    assert g.n_edges == expected


def test_ids_follow_bfs_order():
    for g in (build_lattice(2, 5), build_heisenberg(4)):
        assert g.base == 0
        assert (np.diff(g.base_dist) >= 0).all()


def test_simple_symmetric_adjacency(heis6):
    g = heis6
    e = g.edges
    assert (e[:, 0] < e[:, 1]).all()
    assert len({tuple(x) for x in e.tolist()}) == len(e)
    for v in range(0, g.n_vertices, 37):
        for w in g.neighbors(v):
            assert v in g.neighbors(int(w))


def test_heisenberg_small():
    assert build_heisenberg(1).n_vertices == 5
    h = build_heisenberg(2)
    assert h.n_vertices == len(heis_ball_oracle(2))


def test_heisenberg_matches_matrix_oracle():
    h = build_heisenberg(6)
    oracle = heis_ball_oracle(6)
    got = {h.coord(v): int(h.base_dist[v]) for v in range(h.n_vertices)}
    assert got == oracle


def test_heisenberg_group_law_is_matrix_product():
    from conftest import heis_matrix

    rs = np.random.default_rng(0)
    for _ in range(200):
        g, k = (tuple(int(x) for x in rs.integers(-5, 6, 3)) for _ in range(2))
        m = heis_matrix(g) @ heis_matrix(k)
        assert heisenberg_mul(g, k) == (m[0, 1], m[1, 2], m[0, 2])


def test_heisenberg_interior_degree(heis6):
    inner = [v for v in range(heis6.n_vertices) if heis6.within(v, 1)]
    assert set(heis6.degrees()[inner].tolist()) == {4}


def test_heisenberg_ball_and_center():
    h = build_heisenberg(4)
    ball = h.ball(h.base, 2)
    oracle = {c for c, d in heis_ball_oracle(2).items()}
    assert {h.coord(v) for v in ball} == oracle
    assert h.distance(h.base, h.vertex((0, 0, 1))) == 4


def test_heisenberg_growth_degree():
    h = build_heisenberg(12)
    sizes = [int(np.count_nonzero(h.base_dist <= r)) for r in range(6, 13)]
    slope = np.polyfit(np.log(range(6, 13)), np.log(sizes), 1)[0]
    assert 3.4 < slope < 4.3


def test_ball_sphere_distance(z2_small):
    g = z2_small
    o = g.base
    assert list(g.ball(o, 0)) == [o]
    assert len(g.ball(o, 1)) == 5
    assert len(g.sphere(o, 2)) == 8
    assert g.distance(g.vertex((0, 0)), g.vertex((2, 3))) == 5
    assert g.distance(7, 7) == 0


def test_transitivity_on_interior():
    g = build_lattice(2, 12)
    h = build_heisenberg(8)
    for region, r in ((g, 4), (h, 3)):
        size = len(region.ball(region.base, r))
        for v in range(region.n_vertices):
            if region.within(v, r):
                assert len(region.ball(v, r)) == size


def test_metric_on_random_triples():
    h = build_heisenberg(8)
    rs = np.random.default_rng(1)
    inner = np.flatnonzero(h.base_dist <= 2)
    for _ in range(1000):
        a, b, c = (int(x) for x in rs.choice(inner, 3))
        dab, dbc, dac = h.distance(a, b), h.distance(b, c), h.distance(a, c)
        assert dab == h.distance(b, a)
        assert dac <= dab + dbc


def test_z2_growth_exact():
    for r in range(11):
        assert lattice_ball_size(2, r) == 2 * r * r + 2 * r + 1
        assert lattice_ball_size(3, r) == len(l1_ball(3, r))


def test_interior_margin_certifies_distance():
    g = build_lattice(2, 6)
    u = g.vertex((1, 0))
    v = g.vertex((-2, 1))
    assert g.interior_margin(u, v)
    assert not g.interior_margin(g.vertex((6, 0)), g.vertex((0, 6)))


def test_require_interior_names_min_radius():
    g = build_lattice(2, 5)
    with pytest.raises(GeometryError, match="L >= 7"):
        require_interior(g, g.vertex((3, 0)), 4)


def test_budget(monkeypatch):
    monkeypatch.setenv("PERC_CHEM_BUDGET_MB", "1")
    with pytest.raises(ResourceError, match="vertices"):
        build_lattice(3, 60)


def test_export_roundtrip(heis6):
    buf = io.StringIO()
    write_region(heis6, buf)
    text = buf.getvalue()
    assert text.splitlines()[1] == "family heisenberg"
    back = read_region(io.StringIO(text))
    assert np.array_equal(back.edges, heis6.edges)
    assert np.array_equal(back.coords, heis6.coords)


def test_box_is_grid():
    b = build_box((3, 4))
    assert b.n_vertices == 12 and b.n_edges == 2 * 4 + 3 * 3
    with pytest.raises(ConfigError):
        build_box((0, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**20))
def test_vertexset_algebra(bits):
    n = 21
    m = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
    a = VertexSet(m)
    b = VertexSet.from_ids(n, [0, 3, 5])
    assert (a | b) - b <= a
    assert (a & b) <= b
    assert len(a) == int(m.sum())
    assert set(a) == set(np.flatnonzero(m).tolist())
