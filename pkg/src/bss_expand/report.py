"""Community composition and flow tables, temporal profiles, GeoJSON export."""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

from bss_expand.community import Partition
from bss_expand.errors import DataError, InvariantError
from bss_expand.graph import Granularity, TripGraph
from bss_expand.selection import FIXED, SELECTED, StationSet

COMMUNITY_STATS_COLUMNS = (
    "granularity",
    "strategy",
    "community_id",
    "old_stations",
    "new_stations",
    "total_stations",
    "within",
    "out",
    "in",
    "total_trips",
)
PROFILE_COLUMNS = ("granularity", "community_id", "bucket", "share")
STATION_SUMMARY_COLUMNS = ("origin", "stations", "trips_from", "trips_to", "edges_from", "edges_to")


@dataclass(frozen=True)
class CommunityStats:
    community_id: int
    old_stations: int
    new_stations: int
    within: int
    out: int
    inbound: int

    @property
    def total(self) -> int:
        return self.within + self.out + self.inbound

    @property
    def stations(self) -> int:
        return self.old_stations + self.new_stations


@dataclass(frozen=True)
class TemporalProfile:
    community_id: int
    granularity: Granularity
    shares: Tuple[float, ...]


def _require_cover(partition: Partition, nodes) -> None:
    missing = [n for n in nodes if n not in partition.assignment]
    if missing:
        raise ValueError(f"partition does not cover station {missing[0]!r}")


def community_stats(partition: Partition, graph: TripGraph, origins: Mapping[str, str]) -> List[CommunityStats]:
    """Within/out/in trip counts per community from directed trip counts.

    Buckets are summed, so a temporal graph gives the same answer as its
    collapsed form.
    """
    _require_cover(partition, graph.nodes)
    comm = partition.assignment
    within: Counter = Counter()
    out: Counter = Counter()
    inbound: Counter = Counter()
    for (s, d), w in graph.pair_weights().items():
        cs, cd = comm[s], comm[d]
        if cs == cd:
            within[cs] += w
        else:
            out[cs] += w
            inbound[cd] += w
    old: Counter = Counter()
    new: Counter = Counter()
    for node in graph.nodes:
        if origins.get(node, FIXED) == SELECTED:
            new[comm[node]] += 1
        else:
            old[comm[node]] += 1
    ids = sorted(set(comm[n] for n in graph.nodes))
    return [CommunityStats(c, old[c], new[c], within[c], out[c], inbound[c]) for c in ids]


def self_containment(stats: Sequence[CommunityStats]) -> float:
    """Share of trips whose origin and destination share a community."""
    within = sum(s.within for s in stats)
    trips = within + sum(s.out for s in stats)
    if trips == 0:
        raise DataError("no trips to compute self-containment over")
    return within / trips


def temporal_profiles(partition: Partition, graph: TripGraph) -> List[TemporalProfile]:
    """Per community, bucket shares of trips starting at its stations."""
    nb = graph.granularity.n_buckets
    if nb is None:
        raise ValueError("temporal profiles need a t_day or t_hour graph")
    _require_cover(partition, graph.nodes)
    counts: Dict[int, List[int]] = defaultdict(lambda: [0] * nb)
    for (s, _, b), w in graph.edges.items():
        counts[partition.assignment[s]][b] += w
    out = []
    for c in sorted(set(partition.assignment[n] for n in graph.nodes)):
        row = counts[c] if c in counts else [0] * nb
        total = sum(row)
        shares = tuple(x / total for x in row) if total else tuple(0.0 for _ in row)
        out.append(TemporalProfile(c, graph.granularity, shares))
    return out


def station_summary(stations: StationSet, graph: TripGraph) -> List[dict]:
    """Trips and distinct directed station pairs leaving/entering each station
    origin class, plus a total row."""
    origin = stations.origins()
    rows = {o: dict(origin=o, stations=0, trips_from=0, trips_to=0, edges_from=0, edges_to=0) for o in (FIXED, SELECTED)}
    for s in stations.stations:
        rows[s.origin]["stations"] += 1
    pairs = graph.pair_weights()
    for (s, d), w in pairs.items():
        rows[origin[s]]["trips_from"] += w
        rows[origin[d]]["trips_to"] += w
        rows[origin[s]]["edges_from"] += 1
        rows[origin[d]]["edges_to"] += 1
    total = dict(
        origin="total",
        stations=len(stations.stations),
        trips_from=graph.total_weight,
        trips_to=graph.total_weight,
        edges_from=len(pairs),
        edges_to=len(pairs),
    )
    return [rows[FIXED], rows[SELECTED], total]


def export_geojson(stations: StationSet, partition: Partition) -> dict:
    """RFC 7946 FeatureCollection with one Point per station (lon, lat order)."""
    _require_cover(partition, [s.station_id for s in stations.stations])
    features = []
    for s in stations.stations:
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.point.lon, s.point.lat]},
                "properties": {
                    "station_id": s.station_id,
                    "community_id": partition.assignment[s.station_id],
                    "origin": s.origin,
                    "degree": s.degree,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_geojson(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def write_community_stats(path, tables: Sequence[Tuple[Partition, Sequence[CommunityStats]]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMMUNITY_STATS_COLUMNS)
        for part, stats in tables:
            for s in stats:
                w.writerow([
                    part.granularity.value,
                    part.strategy,
                    s.community_id,
                    s.old_stations,
                    s.new_stations,
                    s.stations,
                    s.within,
                    s.out,
                    s.inbound,
                    s.total,
                ])


def write_profiles(path, profiles: Sequence[TemporalProfile]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for p in profiles:
            for b, share in enumerate(p.shares):
                w.writerow([p.granularity.value, p.community_id, b, repr(share)])


def write_station_summary(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=STATION_SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def check_identities(stats: Sequence[CommunityStats], total_trips: int) -> None:
    if sum(s.out for s in stats) != sum(s.inbound for s in stats):
        raise InvariantError("out trips do not balance in trips")
    if sum(s.within + s.out for s in stats) != total_trips:
        raise InvariantError("community trip counts do not add up to the trip total")
