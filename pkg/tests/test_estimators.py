import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from perc_chem import estimators as E
from perc_chem.errors import ConfigError, PreconditionError
from perc_chem.graph import build_box, build_lattice
from perc_chem.percolation import chemical_distance, chemical_path, from_open_edges, sample_config


# --- D-tilde -----------------------------------------------------------------


def test_dtilde_closed_forms():
    g = build_lattice(2, 10)
    o, x = g.vertex((-3, 0)), g.vertex((3, 2))
    d = g.distance(o, x)
    r = E.dtilde(sample_config(g, 1.0, 0), o, x)
    assert r.value == d and (r.o_tilde, r.x_tilde) == (o, x)
    r0 = E.dtilde(sample_config(g, 0.0, 0), o, x)
    assert math.isclose(r0.value, E.penalty_weight(d) * d, rel_tol=1e-12)
    assert len(r0.path) == 1


def test_dtilde_preconditions():
    g = build_lattice(2, 4)
    with pytest.raises(PreconditionError):
        E.dtilde(sample_config(g, 0.5, 0), g.base, g.vertex((1, 1)))
    with pytest.raises(ConfigError):
        E.dtilde(sample_config(g, 0.5, 0), g.base, g.vertex((3, 0)), C=4)


def pair_oracle(s, o, x, C=5.0):
    """Exhaustive min over (o', x') with chemical distances from scratch."""
    g = s.region
    M = math.log(g.distance(o, x)) ** C
    best = math.inf
    for a in range(g.n_vertices):
        for b in range(g.n_vertices):
            d = chemical_distance(s, a, b)
            if d is not None:
                best = min(best, d + M * (g.distance(o, a) + g.distance(b, x)))
    return best


@pytest.mark.parametrize("seed", range(20))
def test_dtilde_against_pair_oracle(seed):
    b = build_box((4, 4))
    s = sample_config(b, 0.3 + 0.03 * seed, seed)
    o, x = b.vertex((0, 0)), b.vertex((3, 3))
    r = E.dtilde(s, o, x)
    assert abs(r.value - pair_oracle(s, o, x)) <= 1e-9
    assert abs(r.value - ((len(r.path) - 1) + r.M * (b.distance(o, r.o_tilde) + b.distance(r.x_tilde, x)))) < 1e-9
    assert s.path_is_open(r.path)
    assert r.value <= r.M * b.distance(o, x) + 1e-9
    assert r.augmented_length == b.distance(o, r.o_tilde) + len(r.path) - 1 + b.distance(r.x_tilde, x)
    assert r.augmented_length <= r.value + 1e-9


def test_pi_bar_at_full():
    g = build_lattice(2, 10)
    assert E.pi_bar_length(sample_config(g, 1.0, 0), g.base, g.vertex((4, 1))) == 5


# --- Russo -------------------------------------------------------------------


def test_russo_single_edge():
    b = build_box((1, 2))
    for row in E.russo_check(b, E.closed_indicator(0), [0.2, 0.7]):
        assert row.lhs == -1 and row.rhs == -1


def test_russo_constant():
    b = build_box((2, 2))
    for row in E.russo_check(b, E.constant(3), [0.5]):
        assert row.lhs == 0 and all(i == 0 for i in row.influences)


@pytest.mark.parametrize("obs", [E.capped_distance(8), E.disconnected(), E.cluster_count])
def test_russo_2x2_grid(obs):
    b = build_box((3, 3))
    for row in E.russo_check(b, obs, ["0.3", "0.5", "0.9"]):
        assert row.error <= 1e-12


def test_russo_expectation_brute_force():
    # the exact polynomial agrees with direct summation at a rational point
    b = build_box((2, 3))
    p = Fraction(2, 7)
    f = E.cluster_count
    direct = sum(
        Fraction(f(b, w)) * p ** bin(w).count("1") * (1 - p) ** (b.n_edges - bin(w).count("1")) for w in range(1 << b.n_edges)
    )
    vals = E.tabulate(b, f)
    pc = np.array([bin(w).count("1") for w in range(1 << b.n_edges)])
    coef = [sum(vals[pc == k], 0) for k in range(b.n_edges + 1)]
    assert E._poly_eval(coef, b.n_edges, p) == direct


def test_russo_refusals():
    with pytest.raises(ConfigError):
        E.russo_check(build_box((5, 5)), E.constant(), [0.5])
    increasing = lambda host, w: bin(w).count("1")
    with pytest.raises(PreconditionError):
        E.russo_check(build_box((2, 2)), increasing, [0.5])


# --- bypasses ----------------------------------------------------------------


def test_bypass_sum_full_lattice():
    g = build_lattice(2, 12)
    s = sample_config(g, 1.0, 0)
    path = [g.vertex((i, 0)) for i in range(-4, 5)]
    assert E.bypass_sum(s, path) == 3 * 8
    assert E.bypass_sum(s, [g.base]) == 0


def test_bypass_sum_terms():
    g = build_lattice(2, 30)
    s = sample_config(g, 0.8, 4)
    path = E.dtilde(s, g.vertex((-10, 0)), g.vertex((10, 0))).path
    total = 0
    for e in g.path_edges(path):
        mask = s.open.copy()
        mask[e] = 0
        u, v = (int(z) for z in g.edges[e])
        d = chemical_distance(from_open_edges(g, np.flatnonzero(mask)), u, v)
        total += d or 0
    assert E.bypass_sum(s, path) == total


def test_bypass_sum_rejects_closed():
    g = build_lattice(2, 4)
    with pytest.raises(PreconditionError):
        E.bypass_sum(sample_config(g, 0.0, 0), [g.base, g.vertex((1, 0))])


# --- tables, fits, determinism -----------------------------------------------


def test_log_slope_recovers_rate():
    n = 10**6
    ts = np.arange(0, 10)
    counts = np.round(n * 0.3 * np.exp(-0.4 * ts)).astype(int)
    fit = E.log_slope(ts, counts, n)
    assert abs(fit.slope + 0.4) < 1e-3 and fit.z > 100
    assert E.log_slope([1, 2], [5, 3], 100) is None
    assert E.log_slope([1, 2, 3, 4], [0, 0, 0, 7], 100) is None


def test_wilson_interval_contains_estimate():
    lo, hi = E.wilson_interval(3, 100)
    assert lo < 0.03 < hi
    assert E.wilson_interval(0, 50)[0] == 0.0


def test_tail_full_lattice():
    t = E.tail_estimate("zd", 60, 2, [1.0], 2, [20, 25], 20, 50, 0)
    assert all(v == 0 for v in t.select(variant="joint").column("estimate"))


def test_tail_margin():
    from perc_chem.errors import GeometryError

    with pytest.raises(GeometryError, match="L >= "):
        E.tail_estimate("zd", 30, 2, [0.7], 4, [40], 20, 10, 0)


def test_tail_coupled_comparison():
    t = E.tail_estimate("zd", 100, 2, [0.6, 0.8], 1.5, [20, 30, 40], 20, 2000, 3)
    lo = t.select(p=0.6, variant="joint").column("estimate")
    hi = t.select(p=0.8, variant="joint").column("estimate")
    se = t.select(p=0.6, variant="joint").column("stderr")
    assert all(b <= a + 2 * s for a, b, s in zip(lo, hi, se))


def test_tables_independent_of_workers():
    a = E.tail_estimate("zd", 80, 2, [0.65], 2, [20, 30], 20, 60, 9, workers=1).to_csv()
    b = E.tail_estimate("zd", 80, 2, [0.65], 2, [20, 30], 20, 60, 9, workers=3).to_csv()
    assert a == b


def test_csv_schema():
    t = E.EstimateTable(["p", "t"])
    t.add((0.5, 3), 0.25, 0.01, 100, 0, 99)
    assert t.to_csv() == "p,t,estimate,stderr,n,seed_lo,seed_hi\n0.5,3,0.25,0.01,100,0,99\n"
    with pytest.raises(ConfigError):
        t.add((1,), 0, 0, 0, 0, 0)


def test_time_constant_full_and_monotone():
    t = E.time_constant("zd", 40, 2, 1.0, [5, 10, 20], 5, 0)
    assert t.column("estimate") == [1.0, 1.0, 1.0]
    mus = [E.time_constant("zd", 60, 2, p, [30], 150, 1).column("estimate")[0] for p in (0.6, 0.75, 0.9)]
    assert mus[0] >= mus[1] >= mus[2]


def test_lipschitz_endpoint():
    rep = E.lipschitz_sweep("zd", 40, 2, [0.8, 0.9, 1.0], 20, 100, 2)
    est = rep.table.column("estimate")
    assert est[-1] == 1.0
    assert est[0] >= est[1] >= est[2]
    assert math.isfinite(rep.max_ratio)


def test_goodapprox_full():
    t = E.goodapprox_check("zd", 40, 2, 1.0, [5, 10, 20], 3, 0)
    assert t.column("estimate") == [0.0, 0.0, 0.0]


def test_ring_tail_full():
    t = E.ring_distance_tail("zd", 20, 2, 1.0, [0, 1], 3, 0)
    assert t.column("estimate") == [1.0, 0.0]


# --- lattice animals ---------------------------------------------------------


def test_coloring_classes_separated():
    g = build_lattice(2, 6)
    count, colors = E.coloring_bound(g, 1)
    assert count <= E.coloring_limit(g, 1)
    D = np.stack([g.distances(v) for v in range(g.n_vertices)])
    for c in range(count):
        es = np.flatnonzero(colors == c)
        for a, b in itertools.combinations(es.tolist(), 2):
            ea, eb = g.edges[a], g.edges[b]
            assert D[np.ix_(ea, eb)].min() > 2


def test_coloring_degenerate():
    g = build_lattice(2, 2)
    count, _ = E.coloring_bound(g, 10)
    assert count == g.n_edges


def exhaustive_animal(g, w, L):
    best = 0.0

    def dfs(u, depth, acc, seen):
        nonlocal best
        best = max(best, acc)
        if depth == L:
            return
        for k in range(g.indptr[u], g.indptr[u + 1]):
            v = int(g.indices[k])
            if v not in seen:
                dfs(v, depth + 1, acc + w[g.adj_edge[k]], seen | {v})

    dfs(g.base, 0, 0.0, {g.base})
    return best


def test_greedy_animal():
    g = build_lattice(2, 8)
    assert E.greedy_animal(g, np.zeros(g.n_edges), 8) == 0
    assert E.greedy_animal(g, np.ones(g.n_edges), 8) == 8
    rs = np.random.default_rng(0)
    for _ in range(5):
        w = (rs.random(g.n_edges) < 0.15).astype(float)
        assert E.greedy_animal(g, w, 7) == exhaustive_animal(g, w, 7)
    with pytest.raises(ConfigError):
        E.greedy_animal(g, np.ones(g.n_edges), 13)
