"""Pure-Python implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the compiled versions are benchmarked and cross-checked against.
Signatures and return values match ``_ckernels.pyx`` exactly.
"""

from __future__ import annotations

from collections import deque
import heapq

import numpy as np

from .rng import GOLDEN, MASK64, _INV53, mix64, stream_key, uniforms

NAME = "python"


def open_mask(seed, p, m):
    if p >= 1.0:
        return np.ones(m, dtype=np.uint8)
    if p <= 0.0:
        return np.zeros(m, dtype=np.uint8)
    return (uniforms(seed, m) < p).astype(np.uint8)


def bfs(indptr, indices, src, radius=-1, allowed=None):
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=np.int32)
    dist[src] = 0
    order = [src]
    ip = indptr.tolist()
    ix = indices.tolist()
    dl = [-1] * n
    dl[src] = 0
    al = allowed.tolist() if allowed is not None else None
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        du = dl[u]
        if radius >= 0 and du >= radius:
            continue
        for k in range(ip[u], ip[u + 1]):
            w = ix[k]
            if dl[w] < 0 and (al is None or al[w]):
                dl[w] = du + 1
                order.append(w)
    dist[:] = dl
    return np.asarray(order, dtype=np.int32), dist


def open_bfs(indptr, indices, adj_edge, open_, src, dst=-1, deleted=-1, allowed=None):
    n = len(indptr) - 1
    ip = indptr.tolist()
    ix = indices.tolist()
    ae = adj_edge.tolist()
    op = open_.tolist()
    al = allowed.tolist() if allowed is not None else None
    dl = [-1] * n
    pl = [-1] * n
    dl[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        if u == dst:
            break
        du = dl[u]
        for k in range(ip[u], ip[u + 1]):
            e = ae[k]
            if not op[e] or e == deleted:
                continue
            w = ix[k]
            if dl[w] < 0 and (al is None or al[w]):
                dl[w] = du + 1
                pl[w] = u
                q.append(w)
    return np.asarray(dl, dtype=np.int32), np.asarray(pl, dtype=np.int32)


def pair_distance_lazy(indptr, indices, adj_edge, m, seed, p, src, dst, deleted=-1):
    """Bidirectional BFS over edges with ``U(seed, e) < p``; -1 if disconnected."""
    if src == dst:
        return 0
    key = stream_key(seed)
    state = {}

    def is_open(e):
        s = state.get(e)
        if s is None:
            h = mix64((key + (e + 1) * GOLDEN) & MASK64)
            s = (h >> 11) * _INV53 < p
            state[e] = s
        return s

    ip = indptr.tolist() if not isinstance(indptr, list) else indptr
    ix = indices
    ae = adj_edge
    dist = ({src: 0}, {dst: 0})
    front = ([src], [dst])
    best = -1
    while front[0] and front[1]:
        side = 0 if len(front[0]) <= len(front[1]) else 1
        mine, other = dist[side], dist[1 - side]
        nxt = []
        for u in front[side]:
            du = mine[u]
            for k in range(ip[u], ip[u + 1]):
                e = int(ae[k])
                if e == deleted or not is_open(e):
                    continue
                w = int(ix[k])
                dw = other.get(w)
                if dw is not None:
                    c = du + 1 + dw
                    if best < 0 or c < best:
                        best = c
                if w not in mine:
                    mine[w] = du + 1
                    nxt.append(w)
        if best >= 0:
            return best
        front = (nxt, front[1]) if side == 0 else (front[0], nxt)
    return -1


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def label_clusters(n, edges, open_):
    parent = list(range(n))
    for e in np.flatnonzero(open_).tolist():
        a = _find(parent, int(edges[e, 0]))
        b = _find(parent, int(edges[e, 1]))
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    labels = np.empty(n, dtype=np.int32)
    remap = {}
    for v in range(n):
        r = _find(parent, v)
        lab = remap.get(r)
        if lab is None:
            lab = len(remap)
            remap[r] = lab
        labels[v] = lab
    sizes = np.bincount(labels, minlength=len(remap)).astype(np.int64)
    return labels, sizes


def ball_components(indptr, indices, adj_edge, open_, center, radius, deleted=-1):
    order, dist = bfs(indptr, indices, center, radius)
    local = {v: i for i, v in enumerate(order.tolist())}
    parent = list(range(len(order)))
    ip = indptr
    for i, u in enumerate(order.tolist()):
        for k in range(ip[u], ip[u + 1]):
            e = int(adj_edge[k])
            if e == deleted or not open_[e]:
                continue
            j = local.get(int(indices[k]))
            if j is None or j <= i:
                continue
            a, b = _find(parent, i), _find(parent, j)
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    comp = np.array([_find(parent, i) for i in range(len(order))], dtype=np.int32)
    return order, dist[order], comp


def potential_dijkstra(indptr, indices, adj_edge, open_, init):
    n = len(indptr) - 1
    dist = [float(x) for x in init]
    pred = [-1] * n
    heap = [(dist[v], v) for v in range(n)]
    heapq.heapify(heap)
    done = [False] * n
    ip = indptr.tolist()
    ix = indices.tolist()
    ae = adj_edge.tolist()
    op = open_.tolist()
    while heap:
        d, u = heapq.heappop(heap)
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        nd = d + 1.0
        for k in range(ip[u], ip[u + 1]):
            if not op[ae[k]]:
                continue
            w = ix[k]
            if nd < dist[w]:
                dist[w] = nd
                pred[w] = u
                heapq.heappush(heap, (nd, w))
    return np.asarray(dist, dtype=np.float64), np.asarray(pred, dtype=np.int32)
