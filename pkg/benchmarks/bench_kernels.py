"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--L 60] [--repeat 3]

Both backends get identical inputs; outputs are compared before timing.
"""

import argparse
import time

import numpy as np

from perc_chem import _pykernels
from perc_chem.graph import build_lattice

try:
    from perc_chem import _ckernels
except ImportError:  # built without the extension
    _ckernels = None


def cases(g, seed=3, p=0.7):
    open_ = _pykernels.open_mask(seed, p, g.n_edges)
    o = g.base
    far = int(np.argmax(g.base_dist))
    init = g.distances(o).astype(np.float64) * 2.0
    return {
        "open_mask": (lambda k: k.open_mask(seed, p, g.n_edges)),
        "bfs": (lambda k: k.bfs(g.indptr, g.indices, o)),
        "open_bfs": (lambda k: k.open_bfs(g.indptr, g.indices, g.adj_edge, open_, o)),
        "pair_distance_lazy": (lambda k: k.pair_distance_lazy(g.indptr, g.indices, g.adj_edge, g.n_edges, seed, p, o, far)),
        "label_clusters": (lambda k: k.label_clusters(g.n_vertices, g.edges, open_)),
        "ball_components": (lambda k: k.ball_components(g.indptr, g.indices, g.adj_edge, open_, o, g.radius // 2)),
        "potential_dijkstra": (lambda k: k.potential_dijkstra(g.indptr, g.indices, g.adj_edge, open_, init)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def best_of(fn, repeat):
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    return min(t)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--L", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    g = build_lattice(2, args.L)
    print(f"Z^2 ball L={args.L}: {g.n_vertices} vertices, {g.n_edges} edges")
    print(f"{'kernel':<20}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, run in cases(g).items():
        tp = best_of(lambda: run(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<20}{tp:>12.4f}{'-':>12}{'-':>10}")
            continue
        if not _same(run(_pykernels), run(_ckernels)):
            raise SystemExit(f"{name}: backends disagree")
        tc = best_of(lambda: run(_ckernels), args.repeat)
        print(f"{name:<20}{tp:>12.4f}{tc:>12.5f}{tp / tc:>9.0f}x")


if __name__ == "__main__":
    main()
