"""F2 edge chains, small-cycle bases and the path surgery built on them.

A :class:`Chain1` is a set of edges of a host graph, stored as a Python int
bitmask so that ``^`` is symmetric difference. Paths are passed around as
vertex lists and converted to chains where the algebra needs it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .coarse import CoarseGraph, MacroSiteConfig, forbidden_set, giant_near, macro_site_config
from .errors import CertificationError, GeometryError, InvariantViolation, PreconditionError
from .graph import Graph, VertexSet
from .percolation import PercSample


def _ids_to_bits(ids: Iterable[int]) -> int:
    ids = np.asarray(list(ids), dtype=np.int64)
    if ids.size == 0:
        return 0
    mask = np.zeros(int(ids.max()) + 1, dtype=bool)
    np.logical_xor.at(mask, ids, True)
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def _bits_to_ids(bits: int) -> np.ndarray:
    if bits == 0:
        return np.zeros(0, dtype=np.int64)
    raw = bits.to_bytes((bits.bit_length() + 7) // 8, "little")
    return np.flatnonzero(np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little"))


class Chain1:
    """An F2 1-chain on ``host``: a finite edge set under symmetric difference."""

    __slots__ = ("host", "bits")

    def __init__(self, host: Graph, bits: int = 0):
        self.host = host
        self.bits = bits

    @classmethod
    def from_edges(cls, host: Graph, edges: Iterable[int]) -> "Chain1":
        # repeated edges cancel, as they should over F2
        return cls(host, _ids_to_bits(edges))

    @classmethod
    def from_path(cls, host: Graph, path: Sequence[int]) -> "Chain1":
        return cls.from_edges(host, host.path_edges(list(path)))

    def edges(self) -> np.ndarray:
        return _bits_to_ids(self.bits)

    def vertices(self) -> np.ndarray:
        e = self.edges()
        return np.unique(self.host.edges[e].ravel()) if len(e) else np.zeros(0, dtype=np.int64)

    def boundary(self) -> np.ndarray:
        return boundary(self)

    def is_cycle(self) -> bool:
        return len(boundary(self)) == 0

    def touches(self, vertex_mask: np.ndarray) -> bool:
        v = self.vertices()
        return bool(np.any(vertex_mask[v])) if len(v) else False

    def _check(self, other: "Chain1") -> None:
        if other.host is not self.host:
            raise PreconditionError("chains live on different host graphs")

    def __xor__(self, other: "Chain1") -> "Chain1":
        self._check(other)
        return Chain1(self.host, self.bits ^ other.bits)

    def __len__(self) -> int:
        return self.bits.bit_count() if hasattr(int, "bit_count") else bin(self.bits).count("1")

    def __bool__(self) -> bool:
        return self.bits != 0

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Chain1) and other.host is self.host and other.bits == self.bits

    def __hash__(self) -> int:
        return hash(self.bits)

    def __repr__(self) -> str:
        return f"Chain1({self.edges().tolist()})"


def boundary(c: Chain1) -> np.ndarray:
    """Vertices of odd incidence; a path from x to y has boundary {x, y}."""
    e = c.edges()
    if len(e) == 0:
        return np.zeros(0, dtype=np.int64)
    ends = c.host.edges[e].ravel()
    counts = np.bincount(ends)
    return np.flatnonzero(counts % 2)


# --- small-cycle bases -------------------------------------------------------


class _Echelon:
    """Incremental F2 row echelon form that remembers how each row was built."""

    def __init__(self):
        self.rows: dict[int, tuple[int, int]] = {}  # leading bit -> (row, combination)

    def reduce(self, v: int) -> tuple[int, int]:
        combo = 0
        rows = self.rows
        while v:
            lead = v.bit_length() - 1
            hit = rows.get(lead)
            if hit is None:
                break
            v ^= hit[0]
            combo ^= hit[1]
        return v, combo

    def insert(self, v: int, tag: int) -> bool:
        # full reduction so ``reduce`` of a span member always reaches zero
        combo = 0
        rows = self.rows
        residue = 0
        while v:
            lead = v.bit_length() - 1
            hit = rows.get(lead)
            if hit is None:
                residue = v
                break
            v ^= hit[0]
            combo ^= hit[1]
        if not residue:
            return False
        rows[residue.bit_length() - 1] = (residue, combo ^ (1 << tag))
        return True


@dataclass(eq=False)
class CycleBasis:
    """Independent cycles of diameter at most ``delta`` found around ``window``."""

    host: Graph
    delta: int
    window: VertexSet
    generators: list = field(default_factory=list)  # list[Chain1]
    n_candidates: int = 0
    _ech: _Echelon = field(default_factory=_Echelon, repr=False)
    _seen: set = field(default_factory=set, repr=False)
    _near: object = field(default=None, repr=False)

    def __post_init__(self):
        if self._near is None:
            self._near = _near_sets(self.host, self.delta)

    @property
    def rank(self) -> int:
        return len(self.generators)

    def decompose(self, q: Chain1) -> Optional[list[int]]:
        return decompose_cycle(q, self)


def _near_sets(host: Graph, radius: int):
    cache: dict[int, set] = {}

    def near(u: int) -> set:
        s = cache.get(u)
        if s is None:
            order, _ = kernels.bfs(host.indptr, host.indices, u, radius)
            s = set(order.tolist())
            cache[u] = s
        return s

    return near


def cycle_diameter(host: Graph, c: Chain1) -> int:
    verts = c.vertices().tolist()
    best = 0
    for a in verts:
        d = host.distances(a)
        best = max(best, int(d[verts].max()))
    return best


def _ball_cycles(host: Graph, v: int, delta: int):
    """Fundamental cycles of the smallest-id-parent BFS tree of ``B(v, delta)``."""
    order, dist = kernels.bfs(host.indptr, host.indices, v, delta)
    ip, ix, ae = host.indptr, host.indices, host.adj_edge
    parent = {}
    pedge = {}
    for w in order.tolist()[1:]:
        nb = ix[ip[w] : ip[w + 1]]
        k = int(np.flatnonzero(dist[nb] == dist[w] - 1)[0])  # neighbours ascend: first is smallest id
        parent[w] = int(nb[k])
        pedge[w] = int(ae[ip[w] + k])
    inball = dist >= 0
    for a in order.tolist():
        for k in range(ip[a], ip[a + 1]):
            b = int(ix[k])
            e = int(ae[k])
            if b <= a or not inball[b] or pedge.get(b) == e or pedge.get(a) == e:
                continue
            edges = [e]
            s, t = a, b
            while s != t:
                if dist[s] >= dist[t]:
                    edges.append(pedge[s])
                    s = parent[s]
                else:
                    edges.append(pedge[t])
                    t = parent[t]
            yield edges


def _extend(basis: CycleBasis, vertices: Iterable[int]) -> None:
    host, delta = basis.host, basis.delta
    near = basis._near
    seen = basis._seen
    for v in vertices:
        for edges in _ball_cycles(host, v, delta):
            key = tuple(sorted(edges))
            if key in seen:
                continue
            seen.add(key)
            verts = np.unique(host.edges[list(key)]).tolist()
            if any(not near(a).issuperset(verts) for a in verts):
                continue
            basis.n_candidates += 1
            bits = 0
            for e in key:
                bits |= 1 << e
            if basis._ech.insert(bits, len(basis.generators)):
                basis.generators.append(Chain1(host, bits))


def small_cycle_generators(host: Graph, delta: int, window: VertexSet | Iterable[int]) -> CycleBasis:
    """Independent generators for the span of small fundamental cycles near ``window``."""
    if delta < 1:
        raise PreconditionError(f"delta must be >= 1, got {delta}")
    if not isinstance(window, VertexSet):
        window = VertexSet.from_ids(host.n_vertices, list(window))
    basis = CycleBasis(host, delta, window)
    _extend(basis, window.ids().tolist())
    return basis


def grow_basis(basis: CycleBasis, window: VertexSet) -> CycleBasis:
    """Enlarge ``basis`` in place to cover ``window`` as well; generator indices are kept."""
    new = window.mask & ~basis.window.mask
    basis.window = VertexSet(basis.window.mask | window.mask)
    _extend(basis, np.flatnonzero(new).tolist())
    return basis


def decompose_cycle(q: Chain1, basis: CycleBasis) -> Optional[list[int]]:
    """Indices of basis generators whose XOR is ``q``, or ``None`` if outside the span."""
    if q.host is not basis.host:
        raise PreconditionError("cycle and basis live on different hosts")
    if not q.is_cycle():
        raise PreconditionError(f"chain has nonempty boundary {boundary(q).tolist()}")
    residue, combo = basis._ech.reduce(q.bits)
    if residue:
        return None
    return _bits_to_ids(combo).tolist()


def xor_all(host: Graph, chains: Iterable[Chain1]) -> Chain1:
    bits = 0
    for c in chains:
        bits ^= c.bits
    return Chain1(host, bits)


def spanning_forest_cycles(host: Graph, window: VertexSet) -> list[Chain1]:
    """Fundamental cycles of a BFS spanning forest of the window's induced subgraph."""
    allowed = window.mask.astype(np.uint8)
    parent_edge = np.full(host.n_vertices, -1, dtype=np.int64)
    seen = np.zeros(host.n_vertices, dtype=bool)
    ones = np.ones(host.n_edges, dtype=np.uint8)
    for r in window.ids().tolist():
        if seen[r]:
            continue
        dist, pred = kernels.open_bfs(host.indptr, host.indices, host.adj_edge, ones, r, -1, -1, allowed)
        reached = np.flatnonzero(dist >= 0)
        seen[reached] = True
        for w in reached.tolist():
            if pred[w] >= 0:
                parent_edge[w] = host.edge_id(int(pred[w]), w)
    tree = set(parent_edge[parent_edge >= 0].tolist())
    both = window.mask[host.edges[:, 0]] & window.mask[host.edges[:, 1]]
    cycles = []
    for e in np.flatnonzero(both).tolist():
        if e in tree:
            continue
        a, b = (int(z) for z in host.edges[e])
        path_a, path_b = [a], [b]
        anc_a = {a: 0}
        while parent_edge[path_a[-1]] >= 0:
            u = path_a[-1]
            pe = host.edges[parent_edge[u]]
            nxt = int(pe[0] if pe[1] == u else pe[1])
            anc_a[nxt] = len(path_a)
            path_a.append(nxt)
        while path_b[-1] not in anc_a:
            u = path_b[-1]
            pe = host.edges[parent_edge[u]]
            path_b.append(int(pe[0] if pe[1] == u else pe[1]))
        lca = path_b[-1]
        loop = path_a[: anc_a[lca] + 1] + path_b[::-1][1:] + [a]
        cycles.append(Chain1.from_path(host, loop))
    cycles.sort(key=lambda c: (len(c), c.edges()[0]))
    return cycles


@dataclass
class Certificate:
    ok: bool
    delta: int
    basis: CycleBasis
    n_tested: int
    witness: Optional[Chain1] = None


def check_delta_simply_connected(
    host: Graph, delta: int, window: VertexSet | Iterable[int], interior: Optional[np.ndarray] = None
) -> Certificate:
    """Do small cycles generate every cycle of the window's induced subgraph?

    ``interior`` marks host vertices whose Δ-neighbourhood is unclipped; for a
    :class:`~perc_chem.graph.FiniteRegion` it is derived from the region radius.
    On failure the shortest undecomposable fundamental cycle is returned as
    ``witness``.
    """
    if not isinstance(window, VertexSet):
        window = VertexSet.from_ids(host.n_vertices, list(window))
    if interior is None and hasattr(host, "within"):
        interior = host.base_dist + delta <= host.radius
    if interior is not None and np.any(window.mask & ~np.asarray(interior, dtype=bool)):
        raise GeometryError(f"window reaches within {delta} of the host boundary")
    basis = small_cycle_generators(host, delta, window)
    tested = 0
    for c in spanning_forest_cycles(host, window):
        tested += 1
        if decompose_cycle(c, basis) is None:
            return Certificate(False, delta, basis, tested, c)
    return Certificate(True, delta, basis, tested)


def smallest_delta(host: Graph, window, max_delta: int = 12, interior=None) -> Certificate:
    """Scan Δ = 1, 2, ... and return the first certificate that succeeds."""
    for delta in range(1, max_delta + 1):
        cert = check_delta_simply_connected(host, delta, window, interior)
        if cert.ok:
            return cert
    raise CertificationError(f"no Δ <= {max_delta} certifies the window")


def coarse_image(coarse: CoarseGraph, c: Chain1) -> Chain1:
    """Push a chain on the region forward to the coarse graph; intra-tile edges map to zero."""
    if c.host is not coarse.region:
        raise PreconditionError("chain does not live on the coarse graph's region")
    t = coarse.tile_of[c.host.edges[c.edges()]]
    t = t[t[:, 0] != t[:, 1]]
    return Chain1.from_edges(coarse.graph, [coarse.graph.edge_id(int(a), int(b)) for a, b in t])


def coarse_image_vertices(coarse: CoarseGraph, verts: np.ndarray) -> np.ndarray:
    """Mod-2 image of a vertex multiset under the tile map."""
    counts = np.bincount(coarse.tile_of[np.asarray(verts, dtype=np.int64)], minlength=coarse.n_sites)
    return np.flatnonzero(counts % 2)


# --- obstacle rerouting ------------------------------------------------------


def _validate_path(host: Graph, path: Sequence[int], name: str) -> None:
    if len(path) == 0:
        raise PreconditionError(f"{name} is empty")
    if len(set(path)) != len(path):
        raise PreconditionError(f"{name} is not a simple path")
    for a, b in zip(path[:-1], path[1:]):
        host.edge_id(int(a), int(b))


def path_in_chain(c: Chain1, x: int, y: int) -> Optional[list[int]]:
    """Shortest x-y vertex path using only edges of ``c``."""
    host = c.host
    if x == y:
        return [x]
    allowed_edges = np.zeros(host.n_edges, dtype=np.uint8)
    allowed_edges[c.edges()] = 1
    dist, pred = kernels.open_bfs(host.indptr, host.indices, host.adj_edge, allowed_edges, int(x), int(y))
    if dist[y] < 0:
        return None
    path = [int(y)]
    while path[-1] != x:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def neighborhood(host: Graph, seeds: Iterable[int], radius: int) -> np.ndarray:
    mask = np.zeros(host.n_vertices, dtype=bool)
    for s in seeds:
        mask |= host.distances(int(s), radius) >= 0
    return mask


@dataclass
class Reroute:
    path: list
    chain: Chain1
    selection: list  # generator indices in the decomposition of beta ^ gamma
    touching: list  # the subset meeting F
    gamma2: Chain1  # beta ^ (XOR of touching generators)
    basis: CycleBasis


def _filled(host: Graph, mask: np.ndarray) -> np.ndarray:
    """``mask`` plus every component of its complement except the largest."""
    rest = ~mask
    ones = np.ones(host.n_edges, dtype=np.uint8)
    allowed = rest.astype(np.uint8)
    comps = []
    todo = rest.copy()
    for r in np.flatnonzero(rest).tolist():
        if not todo[r]:
            continue
        dist, _ = kernels.open_bfs(host.indptr, host.indices, host.adj_edge, ones, r, -1, -1, allowed)
        comp = dist >= 0
        todo &= ~comp
        comps.append(comp)
    out = mask.copy()
    if comps:
        big = max(range(len(comps)), key=lambda i: int(comps[i].sum()))
        for i, comp in enumerate(comps):
            if i != big:
                out |= comp
    return out


def _adaptive_basis(host: Graph, q: Chain1, delta: int):
    # start from the support's neighbourhood with enclosed holes filled, then widen
    support = q.vertices().tolist()
    radius = delta
    basis = None
    while True:
        window = VertexSet(_filled(host, neighborhood(host, support, radius)))
        if basis is None:
            basis = small_cycle_generators(host, delta, window)
        else:
            grow_basis(basis, window)
        sel = decompose_cycle(q, basis)
        if sel is not None or basis.window.mask.all():
            return basis, sel
        radius *= 2


def reroute_path(
    host: Graph,
    beta: Sequence[int],
    gamma: Sequence[int],
    forbidden: Iterable[int] | np.ndarray,
    delta: int,
    basis: Optional[CycleBasis] = None,
) -> Reroute:
    """An x-y path inside ``(N(F, delta) ∪ beta) \\ F`` built from ``beta`` and ``gamma``.

    ``beta`` is any x-y path, ``gamma`` an x-y path avoiding ``F``. The cycle
    ``beta ^ gamma`` is split into small cycles; those meeting ``F`` are added
    to ``beta`` and the x-y component of the result is returned as a simple
    path. Without ``basis`` the small cycles are enumerated around a window
    that grows until the decomposition succeeds.
    """
    beta = [int(v) for v in beta]
    gamma = [int(v) for v in gamma]
    _validate_path(host, beta, "beta")
    _validate_path(host, gamma, "gamma")
    x, y = beta[0], beta[-1]
    if (gamma[0], gamma[-1]) != (x, y):
        raise PreconditionError("beta and gamma must share endpoints")
    fmask = np.zeros(host.n_vertices, dtype=bool)
    fids = np.asarray(list(forbidden) if not isinstance(forbidden, np.ndarray) else forbidden, dtype=np.int64)
    fmask[fids] = True
    if fmask[gamma].any():
        raise PreconditionError("gamma meets the forbidden set")
    cb, cg = Chain1.from_path(host, beta), Chain1.from_path(host, gamma)
    q = cb ^ cg
    if basis is None:
        basis, selection = _adaptive_basis(host, q, delta)
    else:
        selection = decompose_cycle(q, basis)
    if selection is None:
        raise CertificationError("beta ^ gamma is not generated by cycles of diameter <= delta")
    touching = [i for i in selection if basis.generators[i].touches(fmask)]
    gamma2 = cb ^ xor_all(host, (basis.generators[i] for i in touching))
    path = path_in_chain(gamma2, x, y)
    if path is None:
        raise InvariantViolation("x and y are not joined inside gamma''")
    allowed = (neighborhood(host, fids.tolist(), delta) | np.isin(np.arange(host.n_vertices), beta)) & ~fmask
    if not allowed[path].all():
        raise InvariantViolation("rerouted path leaves (N(F, delta) ∪ beta) \\ F")
    return Reroute(path, Chain1.from_path(host, path), selection, touching, gamma2, basis)


# --- macroscopic to microscopic ----------------------------------------------


def loop_erase(walk: Sequence[int]) -> list[int]:
    """Chronological loop erasure; the result visits a subset of the walk's vertices."""
    out: list[int] = []
    pos: dict[int, int] = {}
    for v in walk:
        v = int(v)
        if v in pos:
            cut = pos[v]
            for w in out[cut + 1 :]:
                del pos[w]
            del out[cut + 1 :]
        else:
            pos[v] = len(out)
            out.append(v)
    return out


def ball_union(coarse: CoarseGraph, sites: Iterable[int]) -> np.ndarray:
    region = coarse.region
    mask = np.zeros(region.n_vertices, dtype=bool)
    for i in sites:
        mask |= region.distances(int(coarse.net[int(i)]), coarse.R) >= 0
    return mask


def macro_to_micro_path(
    sample: PercSample, coarse: CoarseGraph, msc: MacroSiteConfig, sites: Sequence[int], xi: int, zeta: int
) -> list[int]:
    """Open xi-zeta path inside the union of ``B(v, R)`` over an open coarse path."""
    sites = [int(s) for s in sites]
    for a, b in zip(sites[:-1], sites[1:]):
        if a != b and b not in coarse.graph.neighbors(a):
            raise PreconditionError(f"coarse sites {a} and {b} are not adjacent")
    closed = [s for s in sites if not msc.is_open(s)]
    if closed:
        raise PreconditionError(f"coarse path has closed or undefined sites {closed[:5]}")
    for end, v in ((sites[0], xi), (sites[-1], zeta)):
        kappa = giant_near(sample, int(coarse.net[end]), coarse.R)
        if kappa is None or v not in set(kappa.tolist()):
            raise PreconditionError(f"vertex {v} is not in the giant component near site {end}")
    allowed = ball_union(coarse, sites)
    g = sample.region
    dist, pred = kernels.open_bfs(g.indptr, g.indices, g.adj_edge, sample.open, int(xi), int(zeta), -1, allowed.astype(np.uint8))
    if dist[zeta] < 0:
        raise InvariantViolation(f"no open path from {xi} to {zeta} inside the ball union of an open coarse path")
    path = [int(zeta)]
    while path[-1] != xi:
        path.append(int(pred[path[-1]]))
    return path[::-1]


@dataclass
class RepairStep:
    excursion: tuple  # (start, end) indices into the path before the step
    coarse_detour: list  # gamma-hat
    coarse_beta: list
    coarse_new: list  # gamma-hat'
    splice: tuple  # (xi, zeta)


@dataclass
class Repair:
    path: list
    forbidden: object
    target: np.ndarray  # vertex mask of the allowed ball union
    steps: list


def _excursions(outside: np.ndarray) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, o in enumerate(outside.tolist()):
        if o and start is None:
            start = i
        elif not o and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(outside) - 1))
    return runs


def geodesic_repair(
    sample: PercSample,
    coarse: CoarseGraph,
    path: Sequence[int],
    delta: int,
    k_prime: int,
    msc: Optional[MacroSiteConfig] = None,
) -> Repair:
    """Replace excursions of an open x-y path until it lies in the target ball union.

    The target is the union of ``B(v, R)`` over coarse sites in ``I_{x,y}`` and
    within ``delta`` of the forbidden set. Each round reroutes one excursion at
    the coarse level and splices in a microscopic open path.
    """
    region = sample.region
    pi = [int(v) for v in path]
    if not sample.path_is_open(pi):
        raise PreconditionError("input path is not open")
    x, y = pi[0], pi[-1]
    if msc is None:
        msc = macro_site_config(sample, coarse, lazy=True)
    fs = forbidden_set(msc, x, y, delta, k_prime)
    for i in fs.anchors.tolist():
        if not coarse.site_interior(i):
            v = int(coarse.net[i])
            raise GeometryError(
                f"anchor site {i} has its R-ball outside the region; need L >= {int(region.base_dist[v]) + coarse.R}"
            )
    fmask_sites = np.zeros(coarse.n_sites, dtype=bool)
    fmask_sites[fs.sites] = True
    near_f = neighborhood(coarse.graph, fs.sites.tolist(), delta) if len(fs) else np.zeros(coarse.n_sites, bool)
    target_sites = near_f.copy()
    target_sites[fs.anchors] = True
    target = ball_union(coarse, np.flatnonzero(target_sites).tolist())
    cx, cy = coarse.site_of(x), coarse.site_of(y)
    stop_x = fmask_sites | (coarse.graph.distances(cx, k_prime - 1) >= 0)
    stop_y = fmask_sites | (coarse.graph.distances(cy, k_prime - 1) >= 0)
    allowed_sites = target_sites.astype(np.uint8)
    ones = np.ones(coarse.graph.n_edges, dtype=np.uint8)

    steps = []
    cap = len(_excursions(~target[pi])) + 1
    while True:
        runs = _excursions(~target[pi])
        if not runs:
            return Repair(pi, fs, target, steps)
        if len(steps) >= cap:
            raise InvariantViolation(f"excursions not eliminated after {cap} rounds")
        s, t = runs[0]
        seq, where = [], []
        for v in pi:
            site = coarse.site_of(v)
            if not seq or seq[-1] != site:
                seq.append(site)
            where.append(len(seq) - 1)
        js, je = where[s], where[t]
        before = [j for j in range(js) if stop_x[seq[j]]]
        after = [j for j in range(je + 1, len(seq)) if stop_y[seq[j]]]
        if not before or not after:
            raise InvariantViolation("excursion is not bracketed by anchor or forbidden sites")
        ju, jv = before[-1] + 1, after[0] - 1
        detour = loop_erase(seq[ju : jv + 1])
        su, sv = detour[0], detour[-1]
        dist, pred = kernels.open_bfs(
            coarse.graph.indptr, coarse.graph.indices, coarse.graph.adj_edge, ones, su, sv, -1, allowed_sites
        )
        if dist[sv] < 0:
            raise InvariantViolation(f"sites {su} and {sv} are not joined inside I ∪ N(F, Δ)")
        cbeta = [sv]
        while cbeta[-1] != su:
            cbeta.append(int(pred[cbeta[-1]]))
        cbeta = cbeta[::-1]
        new_sites = reroute_path(coarse.graph, cbeta, detour, fs.sites, delta).path
        iu = next(i for i, v in enumerate(pi) if coarse.site_of(v) == su)
        iv = max(i for i, v in enumerate(pi) if coarse.site_of(v) == sv)
        try:
            micro = macro_to_micro_path(sample, coarse, msc, new_sites, pi[iu], pi[iv])
        except PreconditionError as exc:
            raise InvariantViolation(f"surgery preconditions failed: {exc}") from exc
        steps.append(RepairStep((s, t), detour, cbeta, new_sites, (pi[iu], pi[iv])))
        pi = loop_erase(pi[:iu] + micro + pi[iv + 1 :])
