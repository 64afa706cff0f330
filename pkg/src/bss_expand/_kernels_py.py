"""Pure-Python kernels. Same contracts and bit-identical results as ``_hac_ext``."""

from __future__ import annotations

import heapq
import math

import numpy as np

from bss_expand.errors import InvariantError
from bss_expand.geo import EARTH_RADIUS_M, haversine_m


def _lat_band_deg(radius: float) -> float:
    # meridional arc is a lower bound on great-circle distance
    return math.degrees(radius / EARTH_RADIUS_M) * (1.0 + 1e-9) + 1e-12


def neighbor_pairs(lat, lon, radius):
    """All index pairs (i < j) with haversine distance <= radius.

    Returns ``(i, j, d)`` arrays sorted by ``(i, j)``.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    n = len(lat)
    order = np.argsort(lat, kind="stable").tolist()
    lat_l = lat.tolist()
    lon_l = lon.tolist()
    band = _lat_band_deg(radius)
    out = []
    for a in range(n):
        p = order[a]
        plat, plon = lat_l[p], lon_l[p]
        for b in range(a + 1, n):
            q = order[b]
            qlat = lat_l[q]
            if qlat - plat > band:
                break
            d = haversine_m(plat, plon, qlat, lon_l[q])
            if d <= radius:
                out.append((p, q, d) if p < q else (q, p, d))
    out.sort()
    if not out:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64))
    i, j, d = zip(*out)
    return np.array(i, np.int64), np.array(j, np.int64), np.array(d, np.float64)


def nearest(qlat, qlon, rlat, rlon):
    """Index of and distance to the nearest reference point for every query.

    Ties go to the lowest reference index.
    """
    rl = list(zip(np.asarray(rlat, np.float64).tolist(), np.asarray(rlon, np.float64).tolist()))
    if not rl:
        raise ValueError("no reference points")
    ql = zip(np.asarray(qlat, np.float64).tolist(), np.asarray(qlon, np.float64).tolist())
    idx, dist = [], []
    for a, b in ql:
        best = math.inf
        best_k = -1
        for k, (c, e) in enumerate(rl):
            d = haversine_m(a, b, c, e)
            if d < best:
                best = d
                best_k = k
        idx.append(best_k)
        dist.append(best)
    return np.array(idx, np.int64), np.array(dist, np.float64)


def complete_linkage(n, pi, pj, pd):
    """Complete-linkage agglomeration over a sparse set of admissible pairs.

    ``(pi, pj, pd)`` must list every point pair whose distance is within the
    cut (and no other pair); a missing pair means the two points can never
    share a cluster. The global minimum ``(linkage, lo, hi)`` is merged at each
    step, where ``lo``/``hi`` are the smallest member indices of the two
    clusters. Returns ``(labels, merges)``: ``labels[k]`` is the smallest
    member index of point k's cluster, ``merges`` is an ``(m, 3)`` float array
    of ``(lo, hi, linkage)`` rows in merge order.
    """
    nbr = [dict() for _ in range(n)]
    heap = []
    for a, b, d in zip(np.asarray(pi).tolist(), np.asarray(pj).tolist(), np.asarray(pd).tolist()):
        if a == b:
            continue
        if a > b:
            a, b = b, a
        nbr[a][b] = d
        nbr[b][a] = d
        heap.append((d, a, b))
    heapq.heapify(heap)
    alive = [True] * n
    parent = list(range(n))
    merges = []
    last = -math.inf
    while heap:
        d, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        cur = nbr[a].get(b)
        if cur is None or cur != d:
            continue
        if d < last:
            raise InvariantError(f"complete-linkage merge height decreased: {d} < {last}")
        last = d
        na = nbr[a]
        nb = nbr[b]
        del na[b]
        del nb[a]
        merged = {}
        for c, da in na.items():
            db = nb.get(c)
            if db is not None:
                merged[c] = da if da >= db else db
        for c in na:
            del nbr[c][a]
        for c in nb:
            del nbr[c][b]
        for c, dc in merged.items():
            nbr[c][a] = dc
            heapq.heappush(heap, (dc, a, c) if a < c else (dc, c, a))
        nbr[a] = merged
        nbr[b] = {}
        alive[b] = False
        parent[b] = a
        merges.append((a, b, d))

    labels = np.empty(n, np.int64)
    for k in range(n):
        r = k
        while parent[r] != r:
            r = parent[r]
        labels[k] = r
    merges_arr = np.array(merges, np.float64).reshape(-1, 3)
    return labels, merges_arr
