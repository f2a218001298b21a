"""Monotone-coupled Bernoulli bond percolation on a region.

Edge ``e`` is open in the sample ``(seed, p)`` iff ``U(seed, e) < p`` (see
:mod:`perc_chem.rng`), so for a fixed seed the open set grows with ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, TextIO

import numpy as np

from . import kernels, rng
from .errors import ConfigError, GeometryError, PreconditionError
from .graph import FiniteRegion, Graph, write_region

TIE_TAG = 0x7153


@dataclass(eq=False)
class PercSample:
    region: FiniteRegion
    p: float
    seed: int
    open: np.ndarray  # uint8 per edge

    @property
    def n_open(self) -> int:
        return int(self.open.sum())

    def is_open(self, e: int) -> bool:
        return bool(self.open[e])

    def with_open(self, mask: np.ndarray) -> "PercSample":
        return PercSample(self.region, self.p, self.seed, np.ascontiguousarray(mask, dtype=np.uint8))

    def path_is_open(self, path: list[int]) -> bool:
        return all(self.open[e] for e in self.region.path_edges(path))

    @cached_property
    def labeling(self) -> "ClusterLabeling":
        return clusters(self)


@dataclass(eq=False)
class ClusterLabeling:
    labels: np.ndarray
    sizes: np.ndarray
    giant: int

    @property
    def giant_size(self) -> int:
        return int(self.sizes[self.giant])

    def giant_mask(self) -> np.ndarray:
        return self.labels == self.giant

    def same(self, u: int, v: int) -> bool:
        return self.labels[u] == self.labels[v]


def sample_config(region: FiniteRegion, p: float, seed: int) -> PercSample:
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"p must lie in [0, 1], got {p}")
    return PercSample(region, float(p), int(seed), kernels.open_mask(int(seed), float(p), region.n_edges))


def from_open_edges(region: FiniteRegion, open_edges, p: float = float("nan"), seed: int = -1) -> PercSample:
    """Hand-built configuration with exactly ``open_edges`` open."""
    mask = np.zeros(region.n_edges, dtype=np.uint8)
    mask[np.asarray(list(open_edges), dtype=np.int64)] = 1
    return PercSample(region, p, seed, mask)


def clusters(sample: PercSample) -> ClusterLabeling:
    """Open components; labels are numbered by smallest member id."""
    labels, sizes = kernels.label_clusters(sample.region.n_vertices, sample.region.edges, sample.open)
    # argmax returns the first maximum, i.e. the cluster with the smallest minimum id
    return ClusterLabeling(labels, sizes, int(np.argmax(sizes)))


def chemical_path(sample: PercSample, u: int, v: int, deleted: int = -1, allowed=None) -> Optional[list[int]]:
    g = sample.region
    dist, pred = kernels.open_bfs(g.indptr, g.indices, g.adj_edge, sample.open, int(u), int(v), int(deleted), allowed)
    if dist[v] < 0:
        return None
    path = [int(v)]
    while path[-1] != u:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def chemical_distance(sample: PercSample, u: int, v: int) -> Optional[int]:
    """Length of the shortest open path, or ``None`` if ``u`` and ``v`` are in different clusters."""
    g = sample.region
    dist, _ = kernels.open_bfs(g.indptr, g.indices, g.adj_edge, sample.open, int(u), int(v))
    return None if dist[v] < 0 else int(dist[v])


def chemical_distance_deleted(sample: PercSample, e: int) -> Optional[int]:
    """Bypass length: distance between the endpoints of ``e`` with ``e`` forced closed."""
    g = sample.region
    u, v = (int(x) for x in g.edges[e])
    dist, _ = kernels.open_bfs(g.indptr, g.indices, g.adj_edge, sample.open, u, v, int(e))
    return None if dist[v] < 0 else int(dist[v])


def lazy_distance(region: Graph, seed: int, p: float, u: int, v: int, deleted: int = -1) -> Optional[int]:
    """:func:`chemical_distance` without materialising the sample.

    Edge states are drawn on demand from the same ``U(seed, e)``, so the answer
    equals ``chemical_distance(sample_config(region, p, seed), u, v)``.
    """
    d = kernels.pair_distance_lazy(
        region.indptr, region.indices, region.adj_edge, region.n_edges, int(seed), float(p), int(u), int(v), int(deleted)
    )
    return None if d < 0 else int(d)


def ring_point(sample: PercSample, u: int, tie_seed: int, check_margin: bool = True) -> int:
    """Vertex of the giant-cluster proxy nearest to ``u`` in the graph metric.

    Ties are broken uniformly with a draw keyed by ``(tie_seed, u)``. The giant
    cluster of the region stands in for the infinite cluster, so by default
    ``u`` must lie within ``L/2`` of the base.
    """
    region = sample.region
    if check_margin and 2 * int(region.base_dist[u]) > region.radius:
        raise GeometryError(f"ring_point queried at vertex {u} beyond L/2 from the base")
    lab = sample.labeling
    if lab.giant_size <= 1 and sample.n_open == 0:
        raise PreconditionError("no open edges: giant cluster proxy is empty")
    giant = lab.giant_mask()
    if giant[u]:
        return int(u)
    dist = region.distances(int(u))
    hit = giant & (dist >= 0)
    best = int(dist[hit].min())
    candidates = np.flatnonzero(hit & (dist == best))
    if len(candidates) == 1:
        return int(candidates[0])
    k = int(rng.uniform(rng.derive(tie_seed, TIE_TAG), int(u)) * len(candidates))
    return int(candidates[k])


def write_sample(sample: PercSample, fh: TextIO) -> None:
    """Region text format followed by the sample's parameters and open edge ids."""
    write_region(sample.region, fh)
    fh.write(f"p {sample.p!r}\n")
    fh.write(f"seed {sample.seed}\n")
    fh.write("open " + " ".join(map(str, np.flatnonzero(sample.open).tolist())) + "\n")


def read_sample(fh: TextIO) -> PercSample:
    from io import StringIO

    from .graph import read_region

    text = fh.read()
    head, _, tail = text.partition("\np ")
    region = read_region(StringIO(head + "\n"))
    rest = ("p " + tail).splitlines()
    meta = {ln.split(" ", 1)[0]: ln.split(" ", 1)[1] if " " in ln else "" for ln in rest if ln}
    ids = [int(x) for x in meta.get("open", "").split()]
    return from_open_edges(region, ids, float(meta["p"]), int(meta["seed"]))
