import warnings
from collections import deque

import numpy as np
import pytest

from perc_chem.coarse import (
    CLOSED,
    OPEN,
    UNDEFINED,
    MacroSiteConfig,
    build_net,
    coarse_contraction_bound,
    coarse_graph,
    degree_bound,
    forbidden_set,
    giant_near,
    macro_site_config,
    precluster_sample,
    precluster_threshold,
    sandwich_violations,
    star_violations,
    uniqueness_event,
    voronoi_assign,
)
from perc_chem.errors import ConfigError, GeometryError
from perc_chem.graph import build_heisenberg, build_lattice
from perc_chem.percolation import sample_config


@pytest.fixture(scope="module")
def z2_40():
    return build_lattice(2, 40)


@pytest.fixture(scope="module")
def cg60(z2_40):
    return coarse_graph(z2_40, 60)


def all_pairs(g):
    return np.stack([g.distances(v) for v in range(g.n_vertices)])


def test_net_r1_is_everything():
    g = build_lattice(2, 4)
    assert build_net(g, 1).tolist() == list(range(g.n_vertices))


@pytest.mark.parametrize("region", [build_lattice(2, 6), build_heisenberg(3)])
def test_net_separated_and_maximal(region):
    r = 2
    net = build_net(region, r).tolist()
    D = all_pairs(region)
    for a in net:
        for b in net:
            if a != b:
                assert D[a, b] >= r
    for v in set(range(region.n_vertices)) - set(net):
        assert min(D[v, c] for c in net) < r


def test_net_huge_separation():
    g = build_lattice(2, 3)
    assert build_net(g, 7).tolist() == [g.base]


def star_oracle(region, net, tile):
    """Walk every geodesic predecessor chain from x toward its centre."""
    bad = 0
    for x in range(region.n_vertices):
        c = int(net[tile[x]])
        d = region.distances(c)
        stack = [x]
        seen = set()
        while stack:
            y = stack.pop()
            if y in seen:
                continue
            seen.add(y)
            if tile[y] != tile[x]:
                bad += 1
                break
            stack.extend(int(w) for w in region.neighbors(y) if d[w] == d[y] - 1)
    return bad


def test_voronoi_nearest_and_star():
    g = build_lattice(2, 10)
    net = build_net(g, 3)
    tile, dist = voronoi_assign(g, net)
    D = np.stack([g.distances(int(c)) for c in net])
    for x in range(g.n_vertices):
        best = D[:, x].min()
        assert dist[x] == best
        assert tile[x] == int(np.flatnonzero(D[:, x] == best)[0])
    assert all(tile[c] == i for i, c in enumerate(net.tolist()))
    assert star_oracle(g, net, tile) == 0


@pytest.mark.parametrize("R", [60, 90, 150])
def test_sandwich_small(R):
    g = build_lattice(2, 40)
    cg = coarse_graph(g, R)
    assert sandwich_violations(cg) == 0
    assert star_violations(cg) == 0
    # tiles partition the vertices
    assert sum(len(t) for t in cg.tiles()) == g.n_vertices


def test_coarse_graph_basic(cg60, z2_40):
    with pytest.raises(ConfigError):
        coarse_graph(z2_40, 59)
    tiny = build_lattice(2, 1)
    one = coarse_graph(tiny, 90)
    assert one.n_sites == 1 and one.graph.n_edges == 0
    assert cg60.max_degree <= degree_bound(z2_40, 60)


def test_adjacency_is_tile_contact(cg60):
    g = cg60.region
    t = cg60.tile_of
    pairs = {tuple(sorted((int(t[a]), int(t[b])))) for a, b in g.edges.tolist() if t[a] != t[b]}
    assert pairs == {tuple(e) for e in cg60.graph.edges.tolist()}
    for a, b in cg60.graph.edges.tolist():
        assert g.distance(int(cg60.net[a]), int(cg60.net[b])) <= 60 // 15 + 1


def test_contraction_and_distance_decreasing():
    g = build_lattice(2, 150)
    cg = coarse_graph(g, 60)
    ratio = coarse_contraction_bound(cg, 200, 0)
    assert ratio <= 40 * cg.max_degree
    rs = np.random.default_rng(0)
    inner = np.flatnonzero(g.base_dist <= 40)
    for _ in range(1000):
        x, y = (int(v) for v in rs.choice(inner, 2))
        assert cg.coarse_distance(cg.site_of(x), cg.site_of(y)) <= g.distance(x, y)


def test_adjacent_ratio_bounded(cg60):
    g = cg60.region
    for a, b in cg60.graph.edges.tolist()[:200]:
        assert 60 / g.distance(int(cg60.net[a]), int(cg60.net[b])) <= 31


def test_uniform_degree_across_scales():
    g = build_lattice(2, 200)
    degs = [coarse_graph(g, R).max_degree for R in (60, 90, 120, 150)]
    assert max(degs) <= 8


def test_events_extremes():
    g = build_lattice(2, 60)
    o = g.base
    assert uniqueness_event(sample_config(g, 1.0, 0), o, 60)
    assert not uniqueness_event(sample_config(g, 0.0, 0), o, 60)
    assert uniqueness_event(sample_config(g, 0.0, 0), o, 60, deleted=0)
    with pytest.raises(GeometryError):
        uniqueness_event(sample_config(g, 1.0, 0), g.vertex((1, 0)), 60)


def test_event_probability_high():
    g = build_lattice(2, 60)
    n = 1000
    hits = sum(uniqueness_event(sample_config(g, 0.8, s), g.base, 60) for s in range(n))
    bound = 1 - np.exp(-np.sqrt(60))
    sigma = np.sqrt(bound * (1 - bound) / n)
    assert hits / n >= bound - 3 * sigma - 1 / n


def test_deleted_variant_is_uniqueness_with_edge_closed():
    g = build_lattice(2, 60)
    for s in range(20):
        smp = sample_config(g, 0.55, s)
        e = int(np.random.default_rng(s).integers(g.n_edges))
        forced = smp.with_open(np.where(np.arange(g.n_edges) == e, 0, smp.open))
        # with e closed the uniqueness clause alone; check against an independent recount
        from perc_chem.percolation import clusters

        ball = g.distances(g.base, 60) >= 0
        sub = forced.with_open(forced.open * ball[g.edges[:, 0]] * ball[g.edges[:, 1]])
        lab = clusters(sub).labels
        d = g.distances(g.base)
        near = set(lab[(d >= 0) & (d <= 12)].tolist())
        far = set(lab[d == 30].tolist())
        assert uniqueness_event(smp, g.base, 60, deleted=e) == (len(near & far) <= 1)


def test_crossing_clause_monotone():
    g = build_lattice(2, 60)
    from perc_chem.coarse import ball_profile, _comps_touching

    for s in range(30):
        prev = False
        for p in (0.4, 0.5, 0.55, 0.6, 0.7, 0.9):
            prof = ball_profile(sample_config(g, p, s), g.base, 60)
            cross = len(_comps_touching(prof, prof.dist <= 6, prof.dist == 60)) > 0
            assert cross or not prev
            prev = cross


def test_giant_near(z2_40):
    g = build_lattice(2, 60)
    k = giant_near(sample_config(g, 1.0, 0), g.base, 60)
    assert len(k) == int(np.count_nonzero(g.distances(g.base, 60) >= 0))
    assert giant_near(sample_config(g, 0.0, 0), g.base, 60) is None


def test_macro_sites_extremes():
    g = build_lattice(2, 70)
    cg = coarse_graph(g, 60)
    for p, want in ((1.0, OPEN), (0.0, CLOSED)):
        st = macro_site_config(sample_config(g, p, 0), cg).state
        interior = np.array([cg.site_interior(i) for i in range(cg.n_sites)])
        assert (st[interior] == want).all()
        assert (st[~interior] == UNDEFINED).all()


def test_macro_sites_lazy_equals_eager():
    g = build_lattice(2, 70)
    cg = coarse_graph(g, 60)
    s = sample_config(g, 0.55, 3)
    eager = macro_site_config(s, cg).state
    lazy = macro_site_config(s, cg, lazy=True)
    assert [lazy.status(i) for i in range(cg.n_sites)] == eager.tolist()


@pytest.mark.slow
def test_far_events_uncorrelated():
    g = build_lattice(2, 125)
    a, b = g.vertex((-63, 0)), g.vertex((62, 0))
    assert g.within(a, 60) and g.within(b, 60) and g.distance(a, b) > 120
    n = 4000
    xa, xb = np.zeros(n), np.zeros(n)
    for s in range(n):
        smp = sample_config(g, 0.5, s)
        xa[s], xb[s] = uniqueness_event(smp, a, 60), uniqueness_event(smp, b, 60)
    assert 0.05 < xa.mean() < 0.95
    assert abs(np.corrcoef(xa, xb)[0, 1]) < 4 / np.sqrt(n)


def _manual_msc(cg, closed):
    state = np.full(cg.n_sites, OPEN, dtype=np.int8)
    state[list(closed)] = CLOSED
    return MacroSiteConfig(cg, None, state)


def closed_cluster_oracle(cg, closed, seeds, delta):
    out = set()
    q = deque(s for s in seeds if s in closed)
    out.update(q)
    while q:
        u = q.popleft()
        d = cg.graph.distances(u)
        for w in closed:
            if w not in out and 0 <= d[w] <= delta:
                out.add(w)
                q.append(w)
    return out


def test_forbidden_set_crafted():
    g = build_lattice(2, 150)
    cg = coarse_graph(g, 60)
    x, y = g.vertex((-10, 0)), g.vertex((10, 0))
    assert len(forbidden_set(_manual_msc(cg, []), x, y, 2, 2)) == 0
    cx = cg.site_of(x)
    near = [int(w) for w in cg.graph.neighbors(cx)][:2]
    chain = near + [int(w) for w in np.flatnonzero(cg.graph.distances(near[0]) == 4)[:1]]
    far_site = cg.site_of(g.vertex((100, 0)))
    far = {far_site} | {int(w) for w in cg.graph.neighbors(far_site)}
    closed = set(chain) | far
    fs = forbidden_set(_manual_msc(cg, closed), x, y, 2, 2)
    oracle = closed_cluster_oracle(cg, closed, fs.anchors.tolist(), 2)
    assert set(fs.sites.tolist()) == oracle
    assert not (far & oracle)
    assert set(near) <= oracle


def test_forbidden_set_all_closed():
    g = build_lattice(2, 20)
    cg = coarse_graph(g, 60)
    fs = forbidden_set(_manual_msc(cg, range(cg.n_sites)), g.base, g.vertex((2, 0)), 1, 1)
    assert len(fs) == cg.n_sites


def test_coarse_geodesic_deterministic(cg60):
    a, b = 0, cg60.n_sites - 1
    p1 = cg60.coarse_geodesic(a, b)
    assert p1 == cg60.coarse_geodesic(a, b)
    assert len(p1) - 1 == cg60.coarse_distance(a, b)


def test_precluster_extremes(cg60):
    assert precluster_sample(cg60, 0, 2, 1.0, 5) == 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert precluster_sample(cg60, 0, 1, 0.0, 5) == cg60.n_sites
    with pytest.warns(RuntimeWarning):
        precluster_sample(cg60, 0, 2, 0.9, 1)


def test_precluster_threshold():
    assert precluster_threshold(8, 2) == 1 - 1 / 128


def test_precluster_tail_and_moment():
    g = build_lattice(2, 40)
    cg = coarse_graph(g, 60)
    D = cg.max_degree
    delta, rho = 1, 0.995
    assert rho > precluster_threshold(D, delta)
    n = 20000
    sizes = np.array([precluster_sample(cg, cg.site_of(g.base), delta, rho, s) for s in range(n)])
    r = 2 * D**delta * (1 - rho)
    for k in range(1, 7):
        f = np.mean(sizes == k)
        assert f <= r**k + 3 * np.sqrt(max(f, 1 / n) / n)
    s = 0.5 * np.log(1 / r)
    lhs = np.mean(np.exp(s * sizes))
    rhs = sum((np.exp(s) * r) ** k for k in range(0, 200))
    assert lhs <= rhs + 3 * np.std(np.exp(s * sizes)) / np.sqrt(n)
