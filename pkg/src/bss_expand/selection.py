"""Candidate ranking, rule-based station selection and trip reassignment."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

from bss_expand import kernels
from bss_expand.cluster import Cluster, ClusterSet
from bss_expand.errors import InvariantError
from bss_expand.geo import GeoPoint, Meters, haversine_distance
from bss_expand.ingest import CleanedDataset, Location, Rental

STATION_COLUMNS = ("station_id", "lat", "lon", "origin", "degree")
ASSIGNMENT_COLUMNS = ("location_id", "station_id")

DEFAULT_PROXIMITY = 250.0
MIN_CENTROID_SPACING = 50.0
FIXED = "fixed"
SELECTED = "selected"
NEW_STATION_PREFIX = "new-"


@dataclass(frozen=True)
class Candidate:
    cluster_id: int
    centroid: GeoPoint
    degree: int
    score: int = 0


@dataclass(frozen=True)
class Station:
    station_id: str
    point: GeoPoint
    origin: str
    degree: int = 0


@dataclass(frozen=True)
class StationSet:
    stations: Tuple[Station, ...]
    assignment: Mapping[str, str]

    def by_id(self) -> Dict[str, Station]:
        return {s.station_id: s for s in self.stations}

    def origins(self) -> Dict[str, str]:
        return {s.station_id: s.origin for s in self.stations}

    @property
    def fixed(self) -> Tuple[Station, ...]:
        return tuple(s for s in self.stations if s.origin == FIXED)

    @property
    def selected(self) -> Tuple[Station, ...]:
        return tuple(s for s in self.stations if s.origin == SELECTED)


@dataclass(frozen=True)
class SelectionOutcome:
    selected: Tuple[Candidate, ...]
    threshold: int
    iterations: int
    rejected_degree: int
    rejected_fixed_proximity: int
    rejected_elimination: int


def endpoint_counts(rentals: Iterable[Rental]) -> Counter:
    """Trip endpoints per location id (origins plus destinations)."""
    c: Counter = Counter()
    for r in rentals:
        c[r.rental_location_id] += 1
        c[r.return_location_id] += 1
    return c


def compute_degree(cluster: Union[Cluster, Iterable[str]], rentals) -> int:
    """Endpoints falling in the cluster; a trip that starts and ends inside
    counts twice. ``rentals`` may be rentals or a precomputed endpoint count."""
    members = cluster.members if isinstance(cluster, Cluster) else tuple(cluster)
    counts = rentals if isinstance(rentals, Mapping) else endpoint_counts(rentals)
    return sum(counts.get(m, 0) for m in set(members))


def min_fixed_degree(fixed_clusters: Sequence[Cluster], rentals) -> int:
    if not fixed_clusters:
        raise ValueError("no fixed stations to derive the degree threshold from")
    counts = rentals if isinstance(rentals, Mapping) else endpoint_counts(rentals)
    return min(compute_degree(c, counts) for c in fixed_clusters)


def _points(items) -> Tuple[np.ndarray, np.ndarray]:
    return (
        np.array([p.lat for p in items], np.float64),
        np.array([p.lon for p in items], np.float64),
    )


def select_stations(
    candidates: Sequence[Candidate],
    fixed: Sequence[Candidate],
    proximity: Meters = DEFAULT_PROXIMITY,
) -> SelectionOutcome:
    """Score, filter and pairwise-eliminate candidates.

    A candidate keeps its degree as score unless its degree is below the
    smallest fixed-station degree or its centroid lies within ``proximity``
    of a fixed station. Then, while two positive-score candidates lie within
    ``proximity`` of each other, the lower-degree one is zeroed; equal
    degrees zero the larger cluster id. Each pass visits candidates by
    descending degree, so the strongest lock in first.
    """
    if not fixed:
        raise ValueError("no fixed stations to derive the degree threshold from")
    threshold = min(f.degree for f in fixed)
    score = {c.cluster_id: c.degree for c in candidates}
    by_id = {c.cluster_id: c for c in candidates}
    if len(by_id) != len(candidates):
        raise ValueError("duplicate candidate cluster ids")

    rej_degree = rej_fixed = 0
    if candidates:
        clat, clon = _points([c.centroid for c in candidates])
        flat, flon = _points([f.centroid for f in fixed])
        _, dfix = kernels.nearest(clat, clon, flat, flon)
        for c, d in zip(candidates, dfix.tolist()):
            if c.degree < threshold:
                score[c.cluster_id] = 0
                rej_degree += 1
            elif d <= proximity:
                score[c.cluster_id] = 0
                rej_fixed += 1

    live = sorted((c for c in candidates if score[c.cluster_id] > 0), key=lambda c: (-c.degree, c.cluster_id))
    rank = {c.cluster_id: k for k, c in enumerate(live)}
    near: Dict[int, List[int]] = {c.cluster_id: [] for c in live}
    if len(live) > 1:
        llat, llon = _points([c.centroid for c in live])
        pi, pj, _ = kernels.neighbor_pairs(llat, llon, float(proximity))
        for a, b in zip(pi.tolist(), pj.tolist()):
            ca, cb = live[a].cluster_id, live[b].cluster_id
            near[ca].append(cb)
            near[cb].append(ca)

    def conflicting() -> bool:
        return any(score[a] > 0 and any(score[b] > 0 for b in near[a]) for a in near)

    iterations = 0
    rej_elim = 0
    while conflicting():
        iterations += 1
        if iterations > len(candidates):
            raise InvariantError("elimination loop exceeded candidate count")
        for c in live:
            cid = c.cluster_id
            if score[cid] == 0:
                continue
            for other in near[cid]:
                if score[other] > 0 and rank[other] > rank[cid]:
                    score[other] = 0
                    rej_elim += 1

    selected = sorted(
        (Candidate(c.cluster_id, c.centroid, c.degree, score[c.cluster_id]) for c in live if score[c.cluster_id] > 0),
        key=lambda c: (-c.score, c.cluster_id),
    )
    return SelectionOutcome(tuple(selected), threshold, iterations, rej_degree, rej_fixed, rej_elim)


def new_station_id(cluster_id: int) -> str:
    return f"{NEW_STATION_PREFIX}{cluster_id:05d}"


def reassign(
    clusters: ClusterSet,
    selected: Sequence[Candidate],
    locations: Mapping[str, Location],
) -> Tuple[Tuple[Station, ...], Dict[str, str]]:
    """Station list (fixed by id, then selected by score) and the
    location -> station assignment. Locations of unselected clusters go to
    the haversine-nearest station; ties to the earlier station in the list."""
    stations: List[Station] = []
    assignment: Dict[str, str] = {}
    for c in sorted(clusters.anchored, key=lambda c: c.anchored_station_id):
        stations.append(Station(c.anchored_station_id, c.centroid, FIXED))
        for m in c.members:
            assignment[m] = c.anchored_station_id
    taken = {s.station_id for s in stations} | set(locations)
    chosen = {c.cluster_id for c in selected}
    by_cid = {c.cluster_id: c for c in clusters.clusters}
    for cand in selected:
        sid = new_station_id(cand.cluster_id)
        if sid in taken:
            raise InvariantError(f"generated station id {sid!r} collides with an existing id")
        taken.add(sid)
        stations.append(Station(sid, cand.centroid, SELECTED))
        for m in by_cid[cand.cluster_id].members:
            assignment[m] = sid
    pending = [m for c in clusters.candidates if c.cluster_id not in chosen for m in c.members]
    if pending:
        slat, slon = _points([s.point for s in stations])
        qlat, qlon = _points([locations[m].point for m in pending])
        idx, _ = kernels.nearest(qlat, qlon, slat, slon)
        for m, k in zip(pending, idx.tolist()):
            assignment[m] = stations[k].station_id
    return tuple(stations), assignment


def _check_spacing(stations: Sequence[Station], proximity: Meters) -> None:
    sel = [s for s in stations if s.origin == SELECTED]
    fixed = [s for s in stations if s.origin == FIXED]
    for i, a in enumerate(sel):
        for b in fixed + sel[i + 1:]:
            d = haversine_distance(a.point, b.point)
            if d <= proximity:
                raise InvariantError(f"stations {a.station_id} and {b.station_id} only {d:.1f} m apart")
            if d < MIN_CENTROID_SPACING:
                raise InvariantError(f"station centroids {a.station_id}/{b.station_id} closer than 50 m")


def expand_network(
    dataset: CleanedDataset,
    clusters: ClusterSet,
    proximity: Meters = DEFAULT_PROXIMITY,
    check: bool = True,
) -> Tuple[StationSet, SelectionOutcome, List[Candidate]]:
    """Rank, select and reassign in one go; returns the final station set,
    the selection outcome and the full candidate list."""
    counts = endpoint_counts(dataset.rentals)
    fixed = [Candidate(c.cluster_id, c.centroid, compute_degree(c, counts)) for c in clusters.anchored]
    cands = [Candidate(c.cluster_id, c.centroid, compute_degree(c, counts)) for c in clusters.candidates]
    outcome = select_stations(cands, fixed, proximity)
    stations, assignment = reassign(clusters, outcome.selected, dataset.location_index())

    station_deg: Counter = Counter()
    for r in dataset.rentals:
        station_deg[assignment[r.rental_location_id]] += 1
        station_deg[assignment[r.return_location_id]] += 1
    stations = tuple(Station(s.station_id, s.point, s.origin, station_deg.get(s.station_id, 0)) for s in stations)
    if check:
        _check_spacing(stations, proximity)
        if sum(station_deg.values()) != 2 * len(dataset.rentals):
            raise InvariantError("trip endpoints not conserved by reassignment")
        missing = [loc.location_id for loc in dataset.locations if loc.location_id not in assignment]
        if missing:
            raise InvariantError(f"{len(missing)} locations left without a station, e.g. {missing[0]!r}")
    return StationSet(stations, assignment), outcome, cands


def write_stations(path, ss: StationSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_COLUMNS)
        for s in ss.stations:
            w.writerow([s.station_id, repr(s.point.lat), repr(s.point.lon), s.origin, s.degree])


def write_assignment(path, ss: StationSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSIGNMENT_COLUMNS)
        for loc_id in sorted(ss.assignment):
            w.writerow([loc_id, ss.assignment[loc_id]])


def read_station_set(stations_path, assignment_path) -> StationSet:
    with open(stations_path, newline="", encoding="utf-8") as fh:
        stations = tuple(
            Station(r["station_id"], GeoPoint(float(r["lat"]), float(r["lon"])), r["origin"], int(r["degree"]))
            for r in csv.DictReader(fh)
        )
    with open(assignment_path, newline="", encoding="utf-8") as fh:
        assignment = {r["location_id"]: r["station_id"] for r in csv.DictReader(fh)}
    return StationSet(stations, assignment)
