"""Constrained complete-linkage clustering of non-station trip endpoints.

Locations close to a fixed station are absorbed into it first; everything else
is agglomerated under the haversine metric until the smallest complete-linkage
distance exceeds the cut, so no cluster is wider than the cut.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from bss_expand import kernels
from bss_expand.geo import GeoPoint, Meters, centroid, haversine_distance
from bss_expand.ingest import Location

CLUSTER_COLUMNS = ("cluster_id", "member_location_id", "centroid_lat", "centroid_lon", "anchored_station_id")

DEFAULT_ABSORPTION_RADIUS = 50.0
DEFAULT_CUT = 100.0


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    members: Tuple[str, ...]
    centroid: GeoPoint
    anchored_station_id: Optional[str] = None

    @property
    def is_anchored(self) -> bool:
        return self.anchored_station_id is not None


@dataclass(frozen=True)
class ClusterSet:
    clusters: Tuple[Cluster, ...]
    absorbed: Mapping[str, str] = field(default_factory=dict)

    @property
    def anchored(self) -> Tuple[Cluster, ...]:
        return tuple(c for c in self.clusters if c.is_anchored)

    @property
    def candidates(self) -> Tuple[Cluster, ...]:
        return tuple(c for c in self.clusters if not c.is_anchored)

    def membership(self) -> Dict[str, int]:
        return {m: c.cluster_id for c in self.clusters for m in c.members}

    def __len__(self):
        return len(self.clusters)


def _pick_backend(backend):
    if backend is None:
        return kernels
    try:
        return kernels.backends()[backend]
    except KeyError:
        raise ValueError(f"backend {backend!r} not available; have {sorted(kernels.backends())}") from None


def absorb_near_stations(
    locations: Iterable[Location],
    fixed_stations: Sequence[Location],
    radius: Meters = DEFAULT_ABSORPTION_RADIUS,
    backend=None,
) -> Tuple[Dict[str, str], List[Location]]:
    """Map every non-station location within ``radius`` (inclusive) of a fixed
    station to its nearest one; return ``(absorbed, remaining)``."""
    stations = sorted(fixed_stations, key=lambda s: s.location_id)
    if not stations:
        raise ValueError("absorption needs at least one fixed station")
    station_ids = {s.location_id for s in stations}
    others = [loc for loc in locations if loc.location_id not in station_ids and not loc.is_fixed_station]
    if not others:
        return {}, []
    k = _pick_backend(backend)
    idx, dist = k.nearest(
        [o.point.lat for o in others],
        [o.point.lon for o in others],
        [s.point.lat for s in stations],
        [s.point.lon for s in stations],
    )
    absorbed: Dict[str, str] = {}
    remaining: List[Location] = []
    for loc, i, d in zip(others, idx.tolist(), dist.tolist()):
        if d <= radius:
            absorbed[loc.location_id] = stations[i].location_id
        else:
            remaining.append(loc)
    return absorbed, remaining


def agglomerate(points: Sequence[Tuple[object, GeoPoint]], cut: Meters = DEFAULT_CUT, backend=None):
    """Complete-linkage groups of point ids plus the merge heights in order.

    Points are ranked by id, so ties in linkage resolve towards the pair whose
    smallest member id is least, independently of input order.
    """
    pts = sorted(points, key=lambda t: t[0])
    ids = [p[0] for p in pts]
    if len(set(ids)) != len(ids):
        raise ValueError("point ids must be distinct")
    n = len(pts)
    if n == 0:
        return [], np.empty(0)
    k = _pick_backend(backend)
    lat = np.fromiter((p[1].lat for p in pts), np.float64, n)
    lon = np.fromiter((p[1].lon for p in pts), np.float64, n)
    pi, pj, pd = k.neighbor_pairs(lat, lon, float(cut))
    labels, merges = k.complete_linkage(n, pi, pj, pd)
    groups: Dict[int, List[object]] = defaultdict(list)
    for i, lab in enumerate(labels.tolist()):
        groups[lab].append(ids[i])
    ordered = [tuple(groups[lab]) for lab in sorted(groups)]
    return ordered, merges[:, 2].copy()


def hac_complete_linkage(
    points: Sequence[Tuple[object, GeoPoint]], cut: Meters = DEFAULT_CUT, backend=None
) -> ClusterSet:
    """Non-anchored clusters, numbered from 0 in order of smallest member id."""
    where = {pid: p for pid, p in points}
    groups, _ = agglomerate(points, cut, backend)
    clusters = tuple(
        Cluster(cid, members, centroid([where[m] for m in members])) for cid, members in enumerate(groups)
    )
    return ClusterSet(clusters, {})


def finalize_clusters(
    non_anchored: ClusterSet, absorbed: Mapping[str, str], fixed_stations: Sequence[Location]
) -> ClusterSet:
    """Anchored clusters (one per fixed station, sorted by id) followed by the
    HAC clusters, renumbered contiguously."""
    stations = sorted(fixed_stations, key=lambda s: s.location_id)
    by_station: Dict[str, List[str]] = defaultdict(list)
    for loc_id, st in absorbed.items():
        by_station[st].append(loc_id)
    out: List[Cluster] = []
    for s in stations:
        members = (s.location_id,) + tuple(sorted(by_station.get(s.location_id, ())))
        out.append(Cluster(len(out), members, s.point, s.location_id))
    for c in non_anchored.clusters:
        out.append(Cluster(len(out), c.members, c.centroid, None))
    return ClusterSet(tuple(out), dict(absorbed))


def build_clusters(
    dataset,
    absorption_radius: Meters = DEFAULT_ABSORPTION_RADIUS,
    cut: Meters = DEFAULT_CUT,
    backend=None,
) -> ClusterSet:
    fixed = dataset.fixed_stations
    absorbed, remaining = absorb_near_stations(dataset.locations, fixed, absorption_radius, backend)
    hac = hac_complete_linkage([(loc.location_id, loc.point) for loc in remaining], cut, backend)
    return finalize_clusters(hac, absorbed, fixed)


def diameter(points: Sequence[GeoPoint]) -> float:
    """Largest pairwise haversine distance (exhaustive)."""
    best = 0.0
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            best = max(best, haversine_distance(points[a], points[b]))
    return best


def write_clusters(path, cs: ClusterSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLUSTER_COLUMNS)
        for c in cs.clusters:
            for m in c.members:
                w.writerow([c.cluster_id, m, repr(c.centroid.lat), repr(c.centroid.lon), c.anchored_station_id or ""])


def read_clusters(path) -> ClusterSet:
    rows: Dict[int, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cid = int(row["cluster_id"])
            entry = rows.setdefault(
                cid,
                {
                    "members": [],
                    "centroid": GeoPoint(float(row["centroid_lat"]), float(row["centroid_lon"])),
                    "anchor": row["anchored_station_id"] or None,
                },
            )
            entry["members"].append(row["member_location_id"])
    clusters = []
    absorbed = {}
    for cid in sorted(rows):
        e = rows[cid]
        clusters.append(Cluster(cid, tuple(e["members"]), e["centroid"], e["anchor"]))
        if e["anchor"] is not None:
            for m in e["members"]:
                if m != e["anchor"]:
                    absorbed[m] = e["anchor"]
    return ClusterSet(tuple(clusters), absorbed)
