"""Monte Carlo estimators and exact small-instance verifiers.

Every estimator is a deterministic function of its parameters and a seed
range: sample ``i`` uses percolation seed ``seed + i``, per-sample results are
computed in independent seed blocks (optionally in worker processes) and
concatenated in seed order, so tables do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .coarse import coarse_graph, precluster_sample, precluster_threshold
from .errors import ConfigError, GeometryError, InvariantViolation, PreconditionError
from .graph import HEISENBERG, ZD, FiniteRegion, build_region
from .percolation import PercSample, chemical_distance_deleted, lazy_distance, ring_point, sample_config

DEFAULT_C = 5.0
DTILDE_TOL = 1e-9


# --- tables ------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class EstimateTable:
    """Rows of ``param..., estimate, stderr, n, seed_lo, seed_hi`` plus run metadata."""

    params: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    COLUMNS = ("estimate", "stderr", "n", "seed_lo", "seed_hi")

    def add(self, key: Sequence, estimate: float, stderr: float, n: int, seed_lo: int, seed_hi: int) -> None:
        if len(key) != len(self.params):
            raise ConfigError(f"row key {key} does not match parameters {self.params}")
        self.rows.append((*key, float(estimate), float(stderr), int(n), int(seed_lo), int(seed_hi)))

    def column(self, name: str) -> list:
        i = (list(self.params) + list(self.COLUMNS)).index(name)
        return [r[i] for r in self.rows]

    def select(self, **match) -> "EstimateTable":
        idx = {k: self.params.index(k) for k in match}
        out = EstimateTable(list(self.params), meta=dict(self.meta))
        out.rows = [r for r in self.rows if all(r[i] == match[k] for k, i in idx.items())]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.params) + list(self.COLUMNS))
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()

    def __len__(self) -> int:
        return len(self.rows)


def mean_se(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        return float("nan"), float("nan")
    if a.size == 1:
        return float(a[0]), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def binomial_se(k: int, n: int) -> float:
    if n == 0:
        return float("nan")
    f = k / n
    return math.sqrt(f * (1 - f) / n)


def wilson_interval(k: int, n: int, z: float = 1.0) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    f = k / n
    den = 1 + z * z / n
    mid = (f + z * z / (2 * n)) / den
    half = z * math.sqrt(f * (1 - f) / n + z * z / (4 * n * n)) / den
    return mid - half, mid + half


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int

    @property
    def z(self) -> float:
        return abs(self.slope) / self.stderr if self.stderr > 0 else float("inf")


def log_slope(xs, counts, n: int) -> Optional[SlopeFit]:
    """Weighted least squares of ``log(k/n)`` against ``x``.

    Rows with ``k = 0`` are dropped. Each point is weighted by the inverse
    variance of its log-frequency, taken from the 1σ Wilson interval.
    """
    pts = [(float(x), int(k)) for x, k in zip(xs, counts) if k > 0]
    if len(pts) < 3:
        return None
    x = np.array([p[0] for p in pts])
    k = np.array([p[1] for p in pts])
    f = k / n
    lo, hi = zip(*(wilson_interval(int(c), n) for c in k))
    sd_log = (np.asarray(hi) - np.asarray(lo)) / 2 / f
    w = 1.0 / sd_log**2
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (w * np.log(f)))
    resid = np.log(f) - X @ beta
    dof = len(x) - 2
    # scale by the reduced chi-square when it exceeds 1 so overdispersion widens the SE
    s2 = max(1.0, float(np.sum(w * resid**2)) / dof) if dof > 0 else 1.0
    cov = np.linalg.inv(A) * s2
    return SlopeFit(float(beta[1]), float(math.sqrt(cov[1, 1])), float(beta[0]), len(x))


# --- seed-block parallelism --------------------------------------------------


@lru_cache(maxsize=8)
def cached_region(family: str, L: int, dim: int) -> FiniteRegion:
    return build_region(family, L, dim)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _blocks(n: int, workers: int) -> list[tuple[int, int]]:
    k = max(1, min(workers, n))
    size = -(-n // k)
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def run_seeds(fn: Callable, args: tuple, n: int, workers: int = 1) -> list:
    """``fn(*args, lo, hi)`` over contiguous index blocks, concatenated in order.

    ``fn`` must be a module-level function returning one result per index.
    """
    if n <= 0:
        return []
    blocks = _blocks(n, workers)
    if workers <= 1 or len(blocks) == 1:
        return [r for lo, hi in blocks for r in fn(*args, lo, hi)]
    out = []
    with ProcessPoolExecutor(max_workers=len(blocks)) as ex:
        futures = [ex.submit(fn, *args, lo, hi) for lo, hi in blocks]
        for f in futures:
            out.extend(f.result())
    return out


# --- endpoints and margins ---------------------------------------------------


def axis_point(region: FiniteRegion, k: int, axis: int = 0) -> int:
    """``g^k o`` for the ``axis``-th generator (``e_i`` in Z^d, X or Y in Heisenberg)."""
    c = [0] * region.coords.shape[1]
    c[axis] = int(k)
    return region.vertex(c)


def endpoints(region: FiniteRegion, dist: int) -> tuple[int, int]:
    """Two vertices on the first axis at graph distance ``dist``, centred on the base."""
    a = dist // 2
    return axis_point(region, -a), axis_point(region, dist - a)


def min_radius_for_paths(x_depth: int, dist: int, max_len: int) -> int:
    """Smallest L so every path of length < ``max_len`` from x to y stays in the region.

    A vertex ``z`` on such a path has ``2 d(x, z) <= max_len - 1 + d(x, y)``.
    """
    return x_depth + (max_len - 1 + dist + 1) // 2


def require_radius(region: FiniteRegion, need: int, what: str) -> None:
    if region.radius < need:
        raise GeometryError(f"{what} needs L >= {need}, region has L = {region.radius}")


def check_lower_bound(region: FiniteRegion, u: int, v: int, d: Optional[int]) -> None:
    if d is not None and d < region.distance(u, v):
        raise InvariantViolation(f"chemical distance {d} below graph distance between {u} and {v}")


# --- chemical-distance tails -------------------------------------------------


def _tail_block(family, L, dim, dist, ps, seed, deleted_edge, lo, hi):
    region = cached_region(family, L, dim)
    x, y = endpoints(region, dist)
    out = []
    for i in range(lo, hi):
        row = []
        for p in ps:
            d = lazy_distance(region, seed + i, p, x, y, deleted_edge)
            check_lower_bound(region, x, y, d)
            row.append(-1 if d is None else d)
        out.append(row)
    return out


def tail_samples(family: str, L: int, dim: int, dist: int, ps: Sequence[float], n: int, seed: int, workers: int = 1) -> np.ndarray:
    """``(n, len(ps))`` array of chemical distances between the endpoints, ``-1`` if disconnected.

    Columns share seeds, so they are coupled samples.
    """
    res = run_seeds(_tail_block, (family, L, dim, dist, tuple(float(p) for p in ps), seed, -1), n, workers)
    return np.asarray(res, dtype=np.int64).reshape(n, len(ps))


def tail_estimate(
    family: str,
    L: int,
    dim: int,
    p: float | Sequence[float],
    K: float,
    t_grid: Sequence[int],
    dist: int,
    n: int,
    seed: int,
    workers: int = 1,
) -> EstimateTable:
    """Frequencies of ``{x <-> y, d_p(x, y) >= K t}`` and of the same event given ``x <-> y``."""
    ps = [float(p)] if np.isscalar(p) else [float(q) for q in p]
    for q in ps:
        if not 0.0 < q <= 1.0:
            raise ConfigError(f"p must lie in (0, 1], got {q}")
    region = cached_region(family, L, dim)
    x, _ = endpoints(region, dist)
    need = min_radius_for_paths(int(region.base_dist[x]), dist, int(math.ceil(K * max(t_grid))))
    require_radius(region, need, f"tail estimate with K*t up to {K * max(t_grid)}")
    d = tail_samples(family, L, dim, dist, ps, n, seed, workers)
    table = EstimateTable(["p", "K", "t", "variant"])
    table.meta = {"family": family, "L": L, "dim": dim, "dist": dist, "t_grid": list(t_grid), "p_grid": ps}
    for j, q in enumerate(ps):
        col = d[:, j]
        conn = col >= 0
        nc = int(conn.sum())
        table.meta[f"disconnected@{q}"] = int(n - nc)
        for t in t_grid:
            k = int(np.count_nonzero(conn & (col >= K * t)))
            table.add((q, K, t, "joint"), k / n, binomial_se(k, n), n, seed, seed + n - 1)
            fc = k / nc if nc else float("nan")
            table.add((q, K, t, "conditional"), fc, binomial_se(k, nc), nc, seed, seed + n - 1)
    return table


def tail_slope(table: EstimateTable, p: float, variant: str = "joint") -> Optional[SlopeFit]:
    sub = table.select(p=p, variant=variant)
    n = sub.column("n")[0] if len(sub) else 0
    counts = [round(f * n) for f in sub.column("estimate")]
    return log_slope(sub.column("t"), counts, n)


# --- bypass lengths ----------------------------------------------------------


def bypass_sum(sample: PercSample, path: Sequence[int]) -> int:
    """Sum over path edges of the bypass length, counting 0 where no bypass exists."""
    region = sample.region
    total = 0
    for e in region.path_edges(list(path)):
        if not sample.open[e]:
            raise PreconditionError(f"edge {e} of the path is closed")
        b = chemical_distance_deleted(sample, e)
        total += 0 if b is None else b
    return total


def bypass_samples(family: str, L: int, dim: int, ps: Sequence[float], n: int, seed: int, workers: int = 1) -> np.ndarray:
    """Bypass length of the edge ``{o, e_1}`` on ``n`` coupled samples; 0 when it has no bypass.

    The edge is conditioned on nothing: a closed edge still has a well-defined bypass.
    """
    res = run_seeds(_tail_block, (family, L, dim, 1, tuple(float(p) for p in ps), seed, _first_edge(family, L, dim)), n, workers)
    a = np.asarray(res, dtype=np.int64).reshape(n, len(ps))
    return np.where(a < 0, 0, a)


def _first_edge(family: str, L: int, dim: int) -> int:
    region = cached_region(family, L, dim)
    x, y = endpoints(region, 1)
    return region.edge_id(x, y)


def bypass_tail(family: str, L: int, dim: int, ps: Sequence[float], t_grid: Sequence[int], n: int, seed: int, workers: int = 1) -> EstimateTable:
    region = cached_region(family, L, dim)
    need = min_radius_for_paths(0, 1, max(t_grid))
    require_radius(region, need, f"bypass tail up to t = {max(t_grid)}")
    b = bypass_samples(family, L, dim, ps, n, seed, workers)
    table = EstimateTable(["p", "t"], meta={"family": family, "L": L, "dim": dim})
    for j, q in enumerate(ps):
        for t in t_grid:
            k = int(np.count_nonzero(b[:, j] >= t))
            table.add((float(q), t), k / n, binomial_se(k, n), n, seed, seed + n - 1)
    return table


# --- penalized distance ------------------------------------------------------


def penalty_weight(d: int, C: float = DEFAULT_C) -> float:
    return math.log(d) ** C


@dataclass
class DtildeResult:
    value: float
    o_tilde: int
    x_tilde: int
    path: list  # open path from o_tilde to x_tilde
    M: float
    o: int
    x: int
    augmented: list = field(default_factory=list)

    @property
    def augmented_length(self) -> int:
        return len(self.augmented) - 1


def _geodesic(region: FiniteRegion, a: int, b: int) -> list[int]:
    ones = np.ones(region.n_edges, dtype=np.uint8)
    dist, pred = kernels.open_bfs(region.indptr, region.indices, region.adj_edge, ones, int(a), int(b))
    path = [int(b)]
    while path[-1] != a:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def dtilde(sample: PercSample, o: int, x: int, C: float = DEFAULT_C) -> DtildeResult:
    """Minimise ``|pi| + M (d(o, o') + d(x', x))`` over open paths ``pi`` from ``o'`` to ``x'``.

    Every vertex starts at potential ``M d(o, v)``; unit-cost relaxation along
    open edges then gives the best cost of reaching ``v``, and the answer adds
    ``M d(x, v)``. Ties within ``1e-9`` go to the smallest vertex id.
    """
    if C < 5:
        raise ConfigError(f"penalty exponent must be >= 5, got {C}")
    region = sample.region
    dox = region.distance(o, x)
    if dox < 3:
        raise PreconditionError(f"need d(o, x) >= 3 so the penalty is >= 1, got {dox}")
    M = penalty_weight(dox, C)
    do = region.distances(o).astype(np.float64)
    dx = region.distances(x).astype(np.float64)
    dist, pred = kernels.potential_dijkstra(region.indptr, region.indices, region.adj_edge, sample.open, M * do)
    total = dist + M * dx
    best = float(total.min())
    xt = int(np.flatnonzero(total <= best + DTILDE_TOL)[0])
    path = [xt]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    path = path[::-1]
    ot = path[0]
    value = (len(path) - 1) + M * (do[ot] + dx[xt])
    if abs(value - best) > 1e-6 * max(1.0, best):
        raise InvariantViolation(f"recovered path cost {value} differs from the optimum {best}")
    if value > M * dox + DTILDE_TOL * max(1.0, M * dox):
        raise InvariantViolation("penalized distance exceeds M d(o, x)")
    aug = _geodesic(region, o, ot)[:-1] + path + _geodesic(region, xt, x)[1:]
    return DtildeResult(value, ot, xt, path, M, int(o), int(x), aug)


def dtilde_bruteforce(sample: PercSample, o: int, x: int, C: float = DEFAULT_C) -> float:
    """Reference minimiser over all ``(o', x')`` pairs with per-pair BFS."""
    region = sample.region
    M = penalty_weight(region.distance(o, x), C)
    do, dx = region.distances(o), region.distances(x)
    best = math.inf
    for a in range(region.n_vertices):
        dist, _ = kernels.open_bfs(region.indptr, region.indices, region.adj_edge, sample.open, a)
        for b in np.flatnonzero(dist >= 0).tolist():
            best = min(best, dist[b] + M * (do[a] + dx[b]))
    return best


def pi_bar_length(sample: PercSample, o: int, x: int, C: float = DEFAULT_C) -> int:
    return dtilde(sample, o, x, C).augmented_length


# --- ring points, D_p and derived estimators ---------------------------------


def ring_distance(sample: PercSample, o: int, x: int, tie_seed: int) -> Optional[int]:
    """``D_p(o, x)``: chemical distance between the ring points of ``o`` and ``x``."""
    a = ring_point(sample, o, tie_seed)
    b = ring_point(sample, x, tie_seed)
    g = sample.region
    dist, _ = kernels.open_bfs(g.indptr, g.indices, g.adj_edge, sample.open, a, b)
    d = int(dist[b])
    if d < 0:
        raise InvariantViolation("ring points of the giant cluster are not connected")
    check_lower_bound(g, a, b, d)
    return d


def _giant_ok(sample: PercSample) -> bool:
    return sample.n_open > 0


def _goodapprox_block(family, L, dim, p, dists, C, seed, lo, hi):
    region = cached_region(family, L, dim)
    o = region.base
    out = []
    for i in range(lo, hi):
        s = sample_config(region, p, seed + i)
        if not _giant_ok(s):
            out.append(None)
            continue
        row = []
        for d in dists:
            x = axis_point(region, d)
            Dp = ring_distance(s, o, x, seed + i)
            Dt = dtilde(s, o, x, C).value
            row.append(abs(Dp - Dt) / d)
        out.append(row)
    return out


def goodapprox_check(family: str, L: int, dim: int, p: float, dists: Sequence[int], n: int, seed: int, C: float = DEFAULT_C, workers: int = 1) -> EstimateTable:
    """Mean of ``|D_p - D~_p| / d(o, x)`` per distance; samples without open edges are skipped."""
    region = cached_region(family, L, dim)
    require_radius(region, 2 * max(dists), "ring points at the far endpoint")
    res = run_seeds(_goodapprox_block, (family, L, dim, float(p), tuple(dists), float(C), seed), n, workers)
    kept = [r for r in res if r is not None]
    table = EstimateTable(["p", "d"], meta={"family": family, "L": L, "dim": dim, "skipped": len(res) - len(kept)})
    for j, d in enumerate(dists):
        m, se = mean_se([r[j] for r in kept])
        table.add((float(p), d), m, se, len(kept), seed, seed + n - 1)
    return table


def _ring_block(family, L, dim, p, seed, lo, hi):
    region = cached_region(family, L, dim)
    out = []
    for i in range(lo, hi):
        s = sample_config(region, p, seed + i)
        if not _giant_ok(s):
            out.append(-1)
            continue
        r = ring_point(s, region.base, seed + i)
        out.append(region.distance(region.base, r))
    return out


def ring_distance_tail(family: str, L: int, dim: int, p: float, k_grid: Sequence[int], n: int, seed: int, workers: int = 1) -> EstimateTable:
    """``P(d(o, ring point of o) >= k)``."""
    res = np.asarray(run_seeds(_ring_block, (family, L, dim, float(p), seed), n, workers))
    kept = res[res >= 0]
    table = EstimateTable(["p", "k"], meta={"family": family, "L": L, "dim": dim, "skipped": int(n - kept.size)})
    for k in k_grid:
        c = int(np.count_nonzero(kept >= k))
        table.add((float(p), k), c / max(1, kept.size), binomial_se(c, kept.size), int(kept.size), seed, seed + n - 1)
    return table


def _pibar_block(family, L, dim, p, dist, C, seed, lo, hi):
    region = cached_region(family, L, dim)
    o, x = region.base, axis_point(region, dist)
    out = []
    for i in range(lo, hi):
        r = dtilde(sample_config(region, p, seed + i), o, x, C)
        if r.augmented_length > r.value + DTILDE_TOL:
            raise InvariantViolation("augmented path longer than the penalized distance")
        out.append(r.augmented_length)
    return out


def pi_bar_tail(family: str, L: int, dim: int, p: float, dist: int, t_grid: Sequence[int], n: int, seed: int, C: float = DEFAULT_C, workers: int = 1) -> EstimateTable:
    res = np.asarray(run_seeds(_pibar_block, (family, L, dim, float(p), dist, float(C), seed), n, workers))
    table = EstimateTable(["p", "d", "t"], meta={"family": family, "L": L, "dim": dim})
    for t in t_grid:
        c = int(np.count_nonzero(res >= t))
        table.add((float(p), dist, t), c / n, binomial_se(c, n), n, seed, seed + n - 1)
    return table


def _dp_block(family, L, dim, ps, targets, axis, seed, lo, hi):
    region = cached_region(family, L, dim)
    o = region.base
    xs = [axis_point(region, k, axis) for k in targets]
    g = region
    out = []
    for i in range(lo, hi):
        row = []
        for p in ps:
            s = sample_config(region, p, seed + i)
            if not _giant_ok(s):
                row.append([-1] * len(xs))
                continue
            a = ring_point(s, o, seed + i)
            dist, _ = kernels.open_bfs(g.indptr, g.indices, g.adj_edge, s.open, a)
            vals = []
            for x in xs:
                b = ring_point(s, x, seed + i)
                d = int(dist[b])
                if d < 0:
                    raise InvariantViolation("ring points of the giant cluster are not connected")
                check_lower_bound(region, a, b, d)
                vals.append(d)
            row.append(vals)
        out.append(row)
    return out


def ring_distances(family, L, dim, ps, targets, n, seed, axis=0, workers=1) -> np.ndarray:
    """``(n, len(ps), len(targets))`` array of ``D_p(o, g^k o)``; ``-1`` marks skipped samples."""
    region = cached_region(family, L, dim)
    require_radius(region, 2 * max(targets), "ring points at the far endpoint")
    res = run_seeds(_dp_block, (family, L, dim, tuple(float(p) for p in ps), tuple(targets), axis, seed), n, workers)
    return np.asarray(res, dtype=np.int64).reshape(n, len(ps), len(targets))


def time_constant(family: str, L: int, dim: int, p: float, n_grid: Sequence[int], samples: int, seed: int, axis: int = 0, workers: int = 1) -> EstimateTable:
    """Rows ``(p, n, mean D_p(o, g^n o) / n)``; the last row is the estimate of the time constant."""
    D = ring_distances(family, L, dim, [p], n_grid, samples, seed, axis, workers)[:, 0, :]
    ok = D[:, 0] >= 0
    table = EstimateTable(["p", "n_steps"], meta={"family": family, "L": L, "dim": dim, "axis": axis, "skipped": int((~ok).sum())})
    for j, k in enumerate(n_grid):
        m, se = mean_se(D[ok, j] / k)
        table.add((float(p), k), m, se, int(ok.sum()), seed, seed + samples - 1)
    return table


@dataclass
class LipschitzReport:
    table: EstimateTable  # mean D_p / d per p
    diffs: EstimateTable  # coupled differences E D_p - E D_q between neighbours, and ratios
    max_ratio: float
    max_ratio_se: float


def lipschitz_sweep(family: str, L: int, dim: int, p_grid: Sequence[float], d: int, samples: int, seed: int, workers: int = 1) -> LipschitzReport:
    ps = [float(p) for p in p_grid]
    if ps != sorted(ps):
        raise ConfigError("p grid must be sorted")
    D = ring_distances(family, L, dim, ps, [d], samples, seed, 0, workers)[:, :, 0]
    ok = (D >= 0).all(axis=1)
    D = D[ok] / d
    n = int(ok.sum())
    hi = seed + samples - 1
    table = EstimateTable(["p"], meta={"family": family, "L": L, "dim": dim, "d": d, "skipped": int(samples - n)})
    for j, p in enumerate(ps):
        m, se = mean_se(D[:, j])
        table.add((p,), m, se, n, seed, hi)
    diffs = EstimateTable(["p", "q", "kind"])
    best, best_se = -math.inf, float("nan")
    for j in range(len(ps) - 1):
        p, q = ps[j], ps[j + 1]
        m, se = mean_se(D[:, j] - D[:, j + 1])
        diffs.add((p, q, "difference"), m, se, n, seed, hi)
        r, rse = abs(m) / (q - p), se / (q - p)
        diffs.add((p, q, "ratio"), r, rse, n, seed, hi)
        if r > best:
            best, best_se = r, rse
    return LipschitzReport(table, diffs, best, best_se)


# --- preclusters -------------------------------------------------------------


def _precluster_block(family, L, dim, R, delta, rho, site, seed, lo, hi):
    import warnings

    coarse = _cached_coarse(family, L, dim, R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return [precluster_sample(coarse, site, delta, rho, seed + i) for i in range(lo, hi)]


@lru_cache(maxsize=4)
def _cached_coarse(family, L, dim, R):
    return coarse_graph(cached_region(family, L, dim), R)


def precluster_tail(family: str, L: int, dim: int, R: int, delta: int, rho: float, k_max: int, n: int, seed: int, workers: int = 1) -> EstimateTable:
    """``P(size >= k)`` for preclusters at the site containing the base, with the geometric bound."""
    coarse = _cached_coarse(family, L, dim, R)
    site = coarse.site_of(cached_region(family, L, dim).base)
    sizes = np.asarray(run_seeds(_precluster_block, (family, L, dim, R, delta, float(rho), site, seed), n, workers))
    D = coarse.max_degree
    base = 2 * D**delta * (1 - rho)
    table = EstimateTable(["rho", "k", "kind"])
    table.meta = {
        "family": family, "L": L, "dim": dim, "R": R, "delta": delta, "max_degree": D,
        "threshold": precluster_threshold(D, delta), "ratio": base,
    }
    for k in range(1, k_max + 1):
        c = int(np.count_nonzero(sizes >= k))
        table.add((float(rho), k, "empirical"), c / n, binomial_se(c, n), n, seed, seed + n - 1)
        table.add((float(rho), k, "bound"), 2 * base**k, 0.0, n, seed, seed + n - 1)
    return table


# --- exact Russo check -------------------------------------------------------


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    c = np.zeros(a.shape, dtype=np.int64)
    while a.any():
        c += (a & np.uint64(1)).astype(np.int64)
        a = a >> np.uint64(1)
    return c


def _poly_eval(coef: Sequence[int], m: int, p: Fraction) -> Fraction:
    # sum_k coef[k] p^k (1-p)^(m-k)
    q = 1 - p
    return sum((Fraction(c) * p**k * q ** (m - k) for k, c in enumerate(coef) if c), Fraction(0))


def _poly_deriv(coef: Sequence[int], m: int, p: Fraction) -> Fraction:
    q = 1 - p
    total = Fraction(0)
    for k, c in enumerate(coef):
        if not c:
            continue
        if k:
            total += Fraction(c) * k * p ** (k - 1) * q ** (m - k)
        if m - k:
            total -= Fraction(c) * (m - k) * p**k * q ** (m - k - 1)
    return total


def tabulate(host, observable: Callable, max_edges: int = 20) -> np.ndarray:
    """Observable on every configuration, indexed by the open-edge bitmask."""
    m = host.n_edges
    if m > max_edges:
        raise ConfigError(f"exhaustive enumeration refused: {m} edges > {max_edges}")
    return np.asarray([observable(host, w) for w in range(1 << m)], dtype=object)


def decreasing_witness(values: np.ndarray, m: int) -> Optional[tuple[int, int]]:
    """A pair ``(w, e)`` with ``f(w ∪ e) > f(w)``, or ``None`` if the table is decreasing."""
    f = np.asarray([Fraction(v) for v in values], dtype=object)
    idx = np.arange(1 << m, dtype=np.int64)
    for e in range(m):
        bit = 1 << e
        lo = idx[(idx & bit) == 0]
        bad = np.flatnonzero(f[lo | bit] > f[lo])
        if len(bad):
            return int(lo[bad[0]]), e
    return None


@dataclass
class RussoRow:
    p: Fraction
    lhs: Fraction  # d/dp E f
    rhs: Fraction  # -sum_e E[Delta_e f]
    influences: list

    @property
    def error(self) -> float:
        return float(abs(self.lhs - self.rhs))


def russo_check(host, observable: Callable, p_grid: Sequence, max_edges: int = 20) -> list[RussoRow]:
    """Both sides of Russo's formula by exhaustive enumeration, in exact rational arithmetic.

    ``observable(host, w)`` takes the open-edge bitmask ``w``. The left side
    differentiates the expectation polynomial; the right side sums the exact
    expected flip differences ``f(w without e) - f(w with e)``.
    """
    m = host.n_edges
    vals = tabulate(host, observable, max_edges)
    witness = decreasing_witness(vals, m)
    if witness is not None:
        raise PreconditionError(f"observable is not decreasing: adding edge {witness[1]} to {witness[0]:#x} increases it")
    idx = np.arange(1 << m, dtype=np.int64)
    pc = _popcount(idx)
    coef = [sum(vals[pc == k], 0) for k in range(m + 1)]
    flip = []
    for e in range(m):
        bit = 1 << e
        lo = idx[(idx & bit) == 0]
        delta = vals[lo] - vals[lo | bit]
        k = pc[lo]
        flip.append([sum(delta[k == j], 0) for j in range(m)])
    rows = []
    for p in p_grid:
        p = Fraction(str(p)) if not isinstance(p, Fraction) else p
        lhs = _poly_deriv(coef, m, p)
        infl = [_poly_eval(fe, m - 1, p) for fe in flip]
        rows.append(RussoRow(p, lhs, -sum(infl, Fraction(0)), infl))
    return rows


# observables on tiny hosts, keyed by open-edge bitmask


def _mask_bfs(host, w: int, src: int) -> list[int]:
    n = host.n_vertices
    dist = [-1] * n
    dist[src] = 0
    queue = [src]
    ip, ix, ae = host.indptr, host.indices, host.adj_edge
    for u in queue:
        for k in range(ip[u], ip[u + 1]):
            if (w >> int(ae[k])) & 1:
                v = int(ix[k])
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
    return dist


def far_corner(host) -> int:
    d = host.distances(0)
    return int(np.flatnonzero(d == d.max())[-1])


def capped_distance(cap: int = 8, u: int = 0, v: Optional[int] = None) -> Callable:
    def f(host, w):
        t = far_corner(host) if v is None else v
        d = _mask_bfs(host, w, u)[t]
        return cap if d < 0 else min(d, cap)

    f.__name__ = f"capped_distance_{cap}"
    return f


def disconnected(u: int = 0, v: Optional[int] = None) -> Callable:
    def f(host, w):
        t = far_corner(host) if v is None else v
        return int(_mask_bfs(host, w, u)[t] < 0)

    f.__name__ = "disconnected"
    return f


def cluster_count(host, w: int) -> int:
    parent = list(range(host.n_vertices))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    comps = host.n_vertices
    for e in range(host.n_edges):
        if (w >> e) & 1:
            a, b = find(int(host.edges[e, 0])), find(int(host.edges[e, 1]))
            if a != b:
                parent[max(a, b)] = min(a, b)
                comps -= 1
    return comps


def closed_indicator(e: int = 0) -> Callable:
    def f(host, w):
        return 1 - ((w >> e) & 1)

    f.__name__ = f"closed_{e}"
    return f


def constant(c: int = 1) -> Callable:
    def f(host, w):
        return c

    f.__name__ = f"constant_{c}"
    return f


# --- lattice animals ---------------------------------------------------------


def coloring_bound(region, N: int) -> tuple[int, np.ndarray]:
    """Greedy colouring of edges so that same-coloured edges are more than ``2N`` apart.

    Edge distance is the smallest vertex distance between endpoints. Returns
    the number of colours and the colour of each edge.
    """
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    m = region.n_edges
    colors = np.full(m, -1, dtype=np.int64)
    E = region.edges
    for e in range(m):
        u, v = int(E[e, 0]), int(E[e, 1])
        near = (region.distances(u, 2 * N) >= 0) | (region.distances(v, 2 * N) >= 0)
        nb = np.flatnonzero(near[E[:, 0]] | near[E[:, 1]])
        used = set(colors[nb].tolist())
        c = 0
        while c in used:
            c += 1
        colors[e] = c
    return int(colors.max()) + 1 if m else 0, colors


def coloring_limit(region, N: int) -> int:
    """Edges within ``2N`` of a given edge number at most ``|B(2N + 1)| * deg``; greedy needs one more."""
    from .coarse import family_ball_size

    r = 2 * N + 1
    size = family_ball_size(region, r) if r <= region.radius or region.family == ZD else region.n_vertices
    return size * int(region.degrees().max()) + 1


def greedy_animal(region, indicators, L: int) -> int:
    """Largest indicator sum along a self-avoiding path of at most ``L`` steps from the base."""
    if L > 12:
        raise ConfigError(f"exact animal search is limited to L <= 12, got {L}")
    w = np.asarray(indicators, dtype=np.float64)
    if w.shape != (region.n_edges,) or np.any(w < 0) or np.any(w > 1):
        raise ConfigError("indicators must be one value in [0, 1] per edge")
    ip, ix, ae = region.indptr.tolist(), region.indices.tolist(), region.adj_edge.tolist()
    wl = w.tolist()
    best = 0.0
    on = [False] * region.n_vertices

    def dfs(u, depth, acc):
        nonlocal best
        if acc > best:
            best = acc
        if depth == L or acc + (L - depth) <= best:
            return
        on[u] = True
        for k in range(ip[u], ip[u + 1]):
            v = ix[k]
            if not on[v]:
                dfs(v, depth + 1, acc + wl[ae[k]])
        on[u] = False

    dfs(region.base, 0, 0.0)
    return int(best) if float(best).is_integer() else best
