# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for neighbour search, nearest-reference queries and
complete-linkage agglomeration. Mirrors ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, asin, sqrt, INFINITY, M_PI
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.queue cimport priority_queue
from libcpp.unordered_map cimport unordered_map
from cython.operator cimport dereference as deref, preincrement as inc

from bss_expand.errors import InvariantError

cnp.import_array()

cdef double EARTH_R = 6371000.0
# same constant CPython's math.radians multiplies by
cdef double DEG2RAD = M_PI / 180.0

ctypedef pair[long, long] LL
ctypedef pair[double, LL] Entry


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) nogil:
    cdef double phi1 = lat1 * DEG2RAD
    cdef double phi2 = lat2 * DEG2RAD
    cdef double s_dphi = sin((phi2 - phi1) / 2.0)
    cdef double s_dlam = sin((lon2 * DEG2RAD - lon1 * DEG2RAD) / 2.0)
    cdef double a = s_dphi * s_dphi + cos(phi1) * cos(phi2) * s_dlam * s_dlam
    if a > 1.0:
        a = 1.0
    elif a < 0.0:
        a = 0.0
    return 2.0 * EARTH_R * asin(sqrt(a))


def haversine(double lat1, double lon1, double lat2, double lon2):
    return _hav(lat1, lon1, lat2, lon2)


def neighbor_pairs(lat, lon, double radius):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] la = np.ascontiguousarray(lat, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lo = np.ascontiguousarray(lon, dtype=np.float64)
    cdef Py_ssize_t n = la.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.argsort(la, kind="stable").astype(np.int64)
    cdef double band = (radius / EARTH_R) * (180.0 / M_PI) * (1.0 + 1e-9) + 1e-12
    cdef vector[long] vi
    cdef vector[long] vj
    cdef vector[double] vd
    cdef Py_ssize_t a, b
    cdef long p, q
    cdef double d
    with nogil:
        for a in range(n):
            p = order[a]
            for b in range(a + 1, n):
                q = order[b]
                if la[q] - la[p] > band:
                    break
                d = _hav(la[p], lo[p], la[q], lo[q])
                if d <= radius:
                    if p < q:
                        vi.push_back(p)
                        vj.push_back(q)
                    else:
                        vi.push_back(q)
                        vj.push_back(p)
                    vd.push_back(d)
    cdef Py_ssize_t m = vi.size()
    i_arr = np.empty(m, np.int64)
    j_arr = np.empty(m, np.int64)
    d_arr = np.empty(m, np.float64)
    cdef cnp.int64_t[:] iv = i_arr
    cdef cnp.int64_t[:] jv = j_arr
    cdef double[:] dv = d_arr
    cdef Py_ssize_t k
    for k in range(m):
        iv[k] = vi[k]
        jv[k] = vj[k]
        dv[k] = vd[k]
    srt = np.lexsort((j_arr, i_arr))
    return i_arr[srt], j_arr[srt], d_arr[srt]


def nearest(qlat, qlon, rlat, rlon):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qa = np.ascontiguousarray(qlat, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qo = np.ascontiguousarray(qlon, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ra = np.ascontiguousarray(rlat, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ro = np.ascontiguousarray(rlon, dtype=np.float64)
    cdef Py_ssize_t nq = qa.shape[0]
    cdef Py_ssize_t nr = ra.shape[0]
    if nr == 0:
        raise ValueError("no reference points")
    idx_arr = np.empty(nq, np.int64)
    dist_arr = np.empty(nq, np.float64)
    cdef cnp.int64_t[:] iv = idx_arr
    cdef double[:] dv = dist_arr
    cdef Py_ssize_t a, k
    cdef double best, d
    cdef long best_k
    with nogil:
        for a in range(nq):
            best = INFINITY
            best_k = -1
            for k in range(nr):
                d = _hav(qa[a], qo[a], ra[k], ro[k])
                if d < best:
                    best = d
                    best_k = k
            iv[a] = best_k
            dv[a] = best
    return idx_arr, dist_arr


def complete_linkage(long n, pi, pj, pd):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ai = np.ascontiguousarray(pi, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] aj = np.ascontiguousarray(pj, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ad = np.ascontiguousarray(pd, dtype=np.float64)
    cdef vector[unordered_map[long, double]] nbr = vector[unordered_map[long, double]](n)
    # max-heap on negated keys pops the minimum (d, lo, hi)
    cdef priority_queue[Entry] heap
    cdef vector[char] alive = vector[char](n, 1)
    cdef vector[long] parent = vector[long](n)
    cdef vector[double] mh
    cdef vector[long] ma
    cdef vector[long] mb
    cdef Py_ssize_t k, m = ai.shape[0]
    cdef long a, b, c, t
    cdef double d, da, db, last = -INFINITY
    cdef Entry e
    cdef unordered_map[long, double] merged
    cdef unordered_map[long, double].iterator it, found
    for k in range(n):
        parent[k] = k
    for k in range(m):
        a = ai[k]
        b = aj[k]
        if a == b:
            continue
        if a > b:
            t = a
            a = b
            b = t
        nbr[a][b] = ad[k]
        nbr[b][a] = ad[k]
        heap.push(Entry(-ad[k], LL(-a, -b)))
    while not heap.empty():
        e = heap.top()
        heap.pop()
        d = -e.first
        a = -e.second.first
        b = -e.second.second
        if not (alive[a] and alive[b]):
            continue
        found = nbr[a].find(b)
        if found == nbr[a].end() or deref(found).second != d:
            continue
        if d < last:
            raise InvariantError(f"complete-linkage merge height decreased: {d} < {last}")
        last = d
        nbr[a].erase(b)
        nbr[b].erase(a)
        merged.clear()
        it = nbr[a].begin()
        while it != nbr[a].end():
            c = deref(it).first
            da = deref(it).second
            found = nbr[b].find(c)
            if found != nbr[b].end():
                db = deref(found).second
                merged[c] = da if da >= db else db
            nbr[c].erase(a)
            inc(it)
        it = nbr[b].begin()
        while it != nbr[b].end():
            nbr[deref(it).first].erase(b)
            inc(it)
        it = merged.begin()
        while it != merged.end():
            c = deref(it).first
            nbr[c][a] = deref(it).second
            if a < c:
                heap.push(Entry(-deref(it).second, LL(-a, -c)))
            else:
                heap.push(Entry(-deref(it).second, LL(-c, -a)))
            inc(it)
        nbr[a] = merged
        nbr[b].clear()
        alive[b] = 0
        parent[b] = a
        ma.push_back(a)
        mb.push_back(b)
        mh.push_back(d)

    labels = np.empty(n, np.int64)
    cdef cnp.int64_t[:] lv = labels
    cdef long r
    for k in range(n):
        r = k
        while parent[r] != r:
            r = parent[r]
        lv[k] = r
    merges = np.empty((mh.size(), 3), np.float64)
    cdef double[:, :] mv = merges
    for k in range(<Py_ssize_t>mh.size()):
        mv[k, 0] = ma[k]
        mv[k, 1] = mb[k]
        mv[k, 2] = mh[k]
    return labels, merges
