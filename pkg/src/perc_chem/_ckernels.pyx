# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot kernels. Mirrors ``_pykernels`` call-for-call."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport calloc, malloc, free
from libc.stdint cimport uint64_t, int32_t, uint8_t
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double unif(uint64_t key, long long i) noexcept nogil:
    return <double>(mix64(key + <uint64_t>(i + 1) * GOLDEN) >> 11) * INV53


def open_mask(seed, double p, Py_ssize_t m):
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.zeros(m, dtype=np.uint8)
    cdef uint64_t key = mix64(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef Py_ssize_t e
    cdef uint8_t[::1] o = out
    with nogil:
        for e in range(m):
            o[e] = unif(key, e) < p
    return out


def bfs(const int32_t[::1] indptr, const int32_t[::1] indices, int src,
        int radius=-1, allowed=None):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] dist_a = np.full(n, -1, dtype=np.int32)
    cdef int32_t[::1] dist = dist_a
    cdef int32_t* order = <int32_t*> malloc(n * sizeof(int32_t))
    cdef const uint8_t[::1] al
    cdef bint use_al = allowed is not None
    if use_al:
        al = allowed
    cdef Py_ssize_t head = 0, tail = 1, k
    cdef int u, w, du
    order[0] = src
    dist[src] = 0
    while head < tail:
        u = order[head]
        head += 1
        du = dist[u]
        if radius >= 0 and du >= radius:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            if dist[w] < 0 and (not use_al or al[w]):
                dist[w] = du + 1
                order[tail] = w
                tail += 1
    out = np.empty(tail, dtype=np.int32)
    cdef int32_t[::1] ov = out
    for k in range(tail):
        ov[k] = order[k]
    free(order)
    return out, dist_a


def open_bfs(const int32_t[::1] indptr, const int32_t[::1] indices,
             const int32_t[::1] adj_edge, const uint8_t[::1] open_, int src,
             int dst=-1, int deleted=-1, allowed=None):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] dist_a = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pred_a = np.full(n, -1, dtype=np.int32)
    cdef int32_t[::1] dist = dist_a
    cdef int32_t[::1] pred = pred_a
    cdef const uint8_t[::1] al
    cdef bint use_al = allowed is not None
    if use_al:
        al = allowed
    cdef int32_t* q = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t head = 0, tail = 1, k
    cdef int u, w, e
    q[0] = src
    dist[src] = 0
    while head < tail:
        u = q[head]
        head += 1
        if u == dst:
            break
        for k in range(indptr[u], indptr[u + 1]):
            e = adj_edge[k]
            if not open_[e] or e == deleted:
                continue
            w = indices[k]
            if dist[w] < 0 and (not use_al or al[w]):
                dist[w] = dist[u] + 1
                pred[w] = u
                q[tail] = w
                tail += 1
    free(q)
    return dist_a, pred_a


def pair_distance_lazy(const int32_t[::1] indptr, const int32_t[::1] indices,
                       const int32_t[::1] adj_edge, Py_ssize_t m, seed, double p,
                       int src, int dst, int deleted=-1):
    if src == dst:
        return 0
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef uint64_t key = mix64(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    # distances stored +1 so calloc'ed zero means unvisited
    cdef int32_t* da = <int32_t*> calloc(n, sizeof(int32_t))
    cdef int32_t* db = <int32_t*> calloc(n, sizeof(int32_t))
    cdef uint8_t* st = <uint8_t*> calloc(m, sizeof(uint8_t))
    cdef int32_t* qa = <int32_t*> malloc(n * sizeof(int32_t))
    cdef int32_t* qb = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t a_lo = 0, a_hi = 1, a_end = 1, b_lo = 0, b_hi = 1, b_end = 1
    cdef Py_ssize_t i, k
    cdef int u, w, e, c, best = -1
    cdef int32_t* mine
    cdef int32_t* other
    cdef int32_t* q
    cdef Py_ssize_t* end
    cdef Py_ssize_t lo, hi
    cdef bint side_a
    qa[0] = src
    qb[0] = dst
    da[src] = 1
    db[dst] = 1
    with nogil:
        while a_lo < a_hi and b_lo < b_hi:
            side_a = (a_hi - a_lo) <= (b_hi - b_lo)
            if side_a:
                mine = da; other = db; q = qa; lo = a_lo; hi = a_hi; end = &a_end
            else:
                mine = db; other = da; q = qb; lo = b_lo; hi = b_hi; end = &b_end
            for i in range(lo, hi):
                u = q[i]
                for k in range(indptr[u], indptr[u + 1]):
                    e = adj_edge[k]
                    if e == deleted:
                        continue
                    if st[e] == 0:
                        st[e] = 2 if unif(key, e) < p else 1
                    if st[e] != 2:
                        continue
                    w = indices[k]
                    if other[w] > 0:
                        c = mine[u] + other[w] - 1
                        if best < 0 or c < best:
                            best = c
                    if mine[w] == 0:
                        mine[w] = mine[u] + 1
                        q[end[0]] = w
                        end[0] += 1
            if best >= 0:
                break
            if side_a:
                a_lo = a_hi; a_hi = a_end
            else:
                b_lo = b_hi; b_hi = b_end
    free(da); free(db); free(st); free(qa); free(qb)
    return best


cdef inline int uf_find(int32_t* parent, int x) noexcept nogil:
    cdef int root = x, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef inline void uf_union(int32_t* parent, int a, int b) noexcept nogil:
    a = uf_find(parent, a)
    b = uf_find(parent, b)
    if a == b:
        return
    if a < b:
        parent[b] = a
    else:
        parent[a] = b


def label_clusters(Py_ssize_t n, const int32_t[:, ::1] edges, const uint8_t[::1] open_):
    cdef int32_t* parent = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t v, e, m = edges.shape[0]
    cdef int r, nlab = 0
    cdef cnp.ndarray[cnp.int32_t, ndim=1] labels_a = np.empty(n, dtype=np.int32)
    cdef int32_t[::1] labels = labels_a
    cdef int32_t* remap = <int32_t*> malloc(n * sizeof(int32_t))
    with nogil:
        for v in range(n):
            parent[v] = v
            remap[v] = -1
        for e in range(m):
            if open_[e]:
                uf_union(parent, edges[e, 0], edges[e, 1])
        for v in range(n):
            r = uf_find(parent, v)
            if remap[r] < 0:
                remap[r] = nlab
                nlab += 1
            labels[v] = remap[r]
    free(parent)
    free(remap)
    sizes = np.bincount(labels_a, minlength=nlab).astype(np.int64)
    return labels_a, sizes


def ball_components(const int32_t[::1] indptr, const int32_t[::1] indices,
                    const int32_t[::1] adj_edge, const uint8_t[::1] open_,
                    int center, int radius, int deleted=-1):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef int32_t* local = <int32_t*> calloc(n, sizeof(int32_t))  # local index + 1
    cdef int32_t* order = <int32_t*> malloc(n * sizeof(int32_t))
    cdef int32_t* dist = <int32_t*> malloc(n * sizeof(int32_t))
    cdef Py_ssize_t head = 0, tail = 1, k, i
    cdef int u, w, e, j
    order[0] = center
    dist[0] = 0
    local[center] = 1
    with nogil:
        while head < tail:
            u = order[head]
            if dist[head] < radius:
                for k in range(indptr[u], indptr[u + 1]):
                    w = indices[k]
                    if local[w] == 0:
                        local[w] = tail + 1
                        order[tail] = w
                        dist[tail] = dist[head] + 1
                        tail += 1
            head += 1
    cdef int32_t* parent = <int32_t*> malloc(tail * sizeof(int32_t))
    with nogil:
        for i in range(tail):
            parent[i] = i
        for i in range(tail):
            u = order[i]
            for k in range(indptr[u], indptr[u + 1]):
                e = adj_edge[k]
                if e == deleted or not open_[e]:
                    continue
                j = local[indices[k]] - 1
                if j <= i:
                    continue
                uf_union(parent, i, j)
    verts = np.empty(tail, dtype=np.int32)
    dists = np.empty(tail, dtype=np.int32)
    comp = np.empty(tail, dtype=np.int32)
    cdef int32_t[::1] vv = verts, dd = dists, cc = comp
    for i in range(tail):
        vv[i] = order[i]
        dd[i] = dist[i]
        cc[i] = uf_find(parent, i)
    free(local); free(order); free(dist); free(parent)
    return verts, dists, comp


ctypedef pair[double, int] item_t


def potential_dijkstra(const int32_t[::1] indptr, const int32_t[::1] indices,
                       const int32_t[::1] adj_edge, const uint8_t[::1] open_,
                       const double[::1] init):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist_a = np.array(init, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pred_a = np.full(n, -1, dtype=np.int32)
    cdef double[::1] dist = dist_a
    cdef int32_t[::1] pred = pred_a
    cdef uint8_t* done = <uint8_t*> calloc(n, sizeof(uint8_t))
    cdef priority_queue[item_t] heap  # max-heap over (-dist, -vertex)
    cdef Py_ssize_t v, k
    cdef int u, w
    cdef double d, nd
    cdef item_t top
    with nogil:
        for v in range(n):
            heap.push(item_t(-dist[v], -v))
        while not heap.empty():
            top = heap.top()
            heap.pop()
            d = -top.first
            u = -top.second
            if done[u] or d > dist[u]:
                continue
            done[u] = 1
            nd = d + 1.0
            for k in range(indptr[u], indptr[u + 1]):
                if not open_[adj_edge[k]]:
                    continue
                w = indices[k]
                if nd < dist[w]:
                    dist[w] = nd
                    pred[w] = u
                    heap.push(item_t(-nd, -w))
    free(done)
    return dist_a, pred_a
