"""Independent reference implementations used only by the tests.

Each one is deliberately naive so that it is easy to check by eye.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Dict, List, Sequence, Tuple

import numpy as np

WGS84_A = 6_378_137.0
WGS84_F = 1 / 298.257223563


def vincenty_m(lat1, lon1, lat2, lon2, iters=200):
    """Ellipsoidal (WGS-84) inverse geodesic distance, Vincenty's method."""
    a, f = WGS84_A, WGS84_F
    b = (1 - f) * a
    L = math.radians(lon2 - lon1)
    U1 = math.atan((1 - f) * math.tan(math.radians(lat1)))
    U2 = math.atan((1 - f) * math.tan(math.radians(lat2)))
    sinU1, cosU1 = math.sin(U1), math.cos(U1)
    sinU2, cosU2 = math.sin(U2), math.cos(U2)
    lam = L
    for _ in range(iters):
        sinl, cosl = math.sin(lam), math.cos(lam)
        sin_sigma = math.hypot(cosU2 * sinl, cosU1 * sinU2 - sinU1 * cosU2 * cosl)
        if sin_sigma == 0:
            return 0.0
        cos_sigma = sinU1 * sinU2 + cosU1 * cosU2 * cosl
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cosU1 * cosU2 * sinl / sin_sigma
        cos2_alpha = 1 - sin_alpha**2
        cos2sm = cos_sigma - 2 * sinU1 * sinU2 / cos2_alpha if cos2_alpha else 0.0
        C = f / 16 * cos2_alpha * (4 + f * (4 - 3 * cos2_alpha))
        prev = lam
        lam = L + (1 - C) * f * sin_alpha * (sigma + C * sin_sigma * (cos2sm + C * cos_sigma * (-1 + 2 * cos2sm**2)))
        if abs(lam - prev) < 1e-13:
            break
    u2 = cos2_alpha * (a**2 - b**2) / b**2
    A = 1 + u2 / 16384 * (4096 + u2 * (-768 + u2 * (320 - 175 * u2)))
    B = u2 / 1024 * (256 + u2 * (-128 + u2 * (74 - 47 * u2)))
    ds = B * sin_sigma * (cos2sm + B / 4 * (cos_sigma * (-1 + 2 * cos2sm**2)
                                          - B / 6 * cos2sm * (-3 + 4 * sin_sigma**2) * (-3 + 4 * cos2sm**2)))
    return b * A * (sigma - ds)


def chord_great_circle_m(lat1, lon1, lat2, lon2, R=6_371_000.0):
    """Great-circle distance through the 3-D chord length (no haversine)."""
    def xyz(lat, lon):
        p, l = math.radians(lat), math.radians(lon)
        return np.array([math.cos(p) * math.cos(l), math.cos(p) * math.sin(l), math.sin(p)])

    c = float(np.linalg.norm(xyz(lat1, lon1) - xyz(lat2, lon2)))
    return 2 * R * math.asin(min(1.0, c / 2))


def naive_complete_linkage(ids: Sequence[str], dist, cut: float) -> List[Tuple[str, ...]]:
    """O(n^3) agglomeration: each step rescans every cluster pair.

    ``dist(i, j)`` takes positions in the original ``ids``. The pair with the
    least (linkage, lower smallest-member rank, higher smallest-member rank)
    merges, ranks being positions in id order.
    """
    order = sorted(range(len(ids)), key=lambda k: ids[k])
    ids = [ids[k] for k in order]
    clusters = [[i] for i in range(len(ids))]
    D = [[dist(order[i], order[j]) for j in range(len(ids))] for i in range(len(ids))]
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                link = max(D[i][j] for i in clusters[a] for j in clusters[b])
                lo, hi = sorted((min(clusters[a]), min(clusters[b])))
                key = (link, lo, hi)
                if best is None or key < best[0]:
                    best = (key, a, b)
        (link, _, _), a, b = best
        if link > cut:
            break
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    groups = [tuple(ids[i] for i in sorted(c)) for c in clusters]
    return sorted(groups)


def direct_modularity(nodes, weights: Dict[Tuple[str, str], float], assignment, resolution=1.0) -> float:
    """Q = 1/(2m) sum_ij [A_ij - k_i k_j / (2m)] delta(c_i, c_j), dense."""
    idx = {n: k for k, n in enumerate(nodes)}
    n = len(nodes)
    A = np.zeros((n, n))
    for (u, v), w in weights.items():
        if u == v:
            A[idx[u], idx[u]] += 2 * w
        else:
            A[idx[u], idx[v]] += w
            A[idx[v], idx[u]] += w
    two_m = A.sum()
    k = A.sum(axis=1)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if assignment[nodes[i]] == assignment[nodes[j]]:
                total += A[i, j] - resolution * k[i] * k[j] / two_m
    return total / two_m


def brute_nearest(points, refs):
    """Index of and distance to the nearest ref for every point (smallest index on ties)."""
    from bss_expand.geo import haversine_distance

    out = []
    for p in points:
        best = min(range(len(refs)), key=lambda k: (haversine_distance(p, refs[k]), k))
        out.append((best, haversine_distance(p, refs[best])))
    return out


def classify_trips(trips, comm):
    """Per-trip within/out/in classification; ``trips`` are (src, dst) pairs."""
    within, out, inbound = Counter(), Counter(), Counter()
    for s, d in trips:
        if comm[s] == comm[d]:
            within[comm[s]] += 1
        else:
            out[comm[s]] += 1
            inbound[comm[d]] += 1
    return within, out, inbound


def naive_clean(rentals, locations, inside):
    """Rules applied one at a time with plain loops, to a fixpoint.

    ``rentals`` are (rid, src, dst) triples, ``locations`` are
    (lid, lat, lon, fixed) and ``inside(lat, lon)`` is the region test.
    """
    locs = {l[0]: l for l in locations}
    rents = {r[0]: r for r in rentals}
    for lid, l in list(locs.items()):
        if l[1] is not None and l[2] is not None and not inside(l[1], l[2]):
            del locs[lid]
            for rid, r in list(rents.items()):
                if lid in (r[1], r[2]):
                    del rents[rid]
    for lid, l in list(locs.items()):
        if l[1] is None or l[2] is None:
            del locs[lid]
            for rid, r in list(rents.items()):
                if lid in (r[1], r[2]):
                    del rents[rid]
    for rid, r in list(rents.items()):
        if r[1] is None or r[2] is None:
            del rents[rid]
    changed = True
    while changed:
        changed = False
        for rid, r in list(rents.items()):
            if r[1] not in locs or r[2] not in locs:
                del rents[rid]
                changed = True
        used = set()
        for r in rents.values():
            used.add(r[1])
            used.add(r[2])
        for lid, l in list(locs.items()):
            if not l[3] and lid not in used:
                del locs[lid]
                changed = True
    return set(rents), set(locs)
