"""Station trip graphs at three temporal granularities and their undirected
projections for community detection."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from bss_expand.errors import DataError
from bss_expand.ingest import Rental

EDGE_COLUMNS = ("src", "dst", "bucket", "weight", "granularity")

AGGREGATE = "aggregate"
BUCKET_SIMILARITY = "bucket-similarity"
STRATEGIES = (AGGREGATE, BUCKET_SIMILARITY)


class Granularity(str, Enum):
    T_NULL = "t_null"
    T_DAY = "t_day"
    T_HOUR = "t_hour"

    @property
    def n_buckets(self) -> Optional[int]:
        return {"t_null": None, "t_day": 7, "t_hour": 24}[self.value]

    @classmethod
    def parse(cls, text) -> "Granularity":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for g in cls:
            if key in (g.value, g.name.lower()):
                return g
        raise ValueError(f"unknown granularity {text!r}; expected one of t_null, t_day, t_hour")


DEFAULT_STRATEGY = {
    Granularity.T_NULL: AGGREGATE,
    Granularity.T_DAY: BUCKET_SIMILARITY,
    Granularity.T_HOUR: BUCKET_SIMILARITY,
}

EdgeKey = Tuple[str, str, Optional[int]]


def bucket_of(rental: Rental, granularity: Granularity) -> Optional[int]:
    """Weekday (Monday = 0) or start hour in the rental's local zone."""
    g = Granularity.parse(granularity)
    if g is Granularity.T_NULL:
        return None
    if g is Granularity.T_DAY:
        return rental.start_time.weekday()
    return rental.start_time.hour


@dataclass(frozen=True)
class TripGraph:
    nodes: Tuple[str, ...]
    edges: Mapping[EdgeKey, int]
    granularity: Granularity
    origins: Mapping[str, str] = field(default_factory=dict)

    @property
    def total_weight(self) -> int:
        return sum(self.edges.values())

    def pair_weights(self) -> Dict[Tuple[str, str], int]:
        """Directed (src, dst) weights summed over buckets."""
        out: Dict[Tuple[str, str], int] = defaultdict(int)
        for (s, d, _), w in self.edges.items():
            out[(s, d)] += w
        return dict(out)

    def collapse(self) -> "TripGraph":
        edges = {(s, d, None): w for (s, d), w in sorted(self.pair_weights().items())}
        return TripGraph(self.nodes, edges, Granularity.T_NULL, self.origins)

    def station_profiles(self) -> Dict[str, np.ndarray]:
        """Bucket counts of all trips touching each station (a loop trip once).

        An untimed graph has a single bucket.
        """
        nb = self.granularity.n_buckets or 1
        prof = {n: np.zeros(nb, np.float64) for n in self.nodes}
        for (s, d, b), w in self.edges.items():
            b = b or 0
            prof[s][b] += w
            if d != s:
                prof[d][b] += w
        return prof


def build_graph(
    rentals: Iterable[Rental],
    assignment: Mapping[str, str],
    granularity,
    nodes: Optional[Sequence[str]] = None,
    origins: Optional[Mapping[str, str]] = None,
) -> TripGraph:
    """One edge per (src station, dst station, bucket), weight = trip count.

    ``nodes`` fixes the node set (e.g. to include isolated fixed stations);
    by default it is every station an endpoint resolves to.
    """
    g = Granularity.parse(granularity)
    counts: Counter = Counter()
    for r in rentals:
        try:
            s = assignment[r.rental_location_id]
            d = assignment[r.return_location_id]
        except KeyError:
            raise DataError(f"rental {r.rental_id!r} has an endpoint with no station") from None
        counts[(s, d, bucket_of(r, g))] += 1
    if nodes is None:
        node_set = {k[0] for k in counts} | {k[1] for k in counts}
        nodes = sorted(node_set)
    else:
        nodes = tuple(nodes)
        known = set(nodes)
        for s, d, _ in counts:
            if s not in known or d not in known:
                raise DataError(f"edge ({s}, {d}) uses a station outside the node set")
    edges = {k: counts[k] for k in sorted(counts, key=_edge_sort_key)}
    return TripGraph(tuple(nodes), edges, g, dict(origins or {}))


def _edge_sort_key(k: EdgeKey):
    return (k[0], k[1], -1 if k[2] is None else k[2])


def graph_measures(g: TripGraph) -> Dict[str, int]:
    pairs = g.pair_weights()
    undirected = {tuple(sorted(p)) for p in pairs}
    return {
        "nodes": len(g.nodes),
        "undirected_edges": len(undirected),
        "undirected_edges_no_loops": sum(1 for u, v in undirected if u != v),
        "directed_edges": len(pairs),
        "directed_edges_no_loops": sum(1 for s, d in pairs if s != d),
        "trips": g.total_weight,
    }


@dataclass(frozen=True)
class UndirectedProjection:
    """Undirected weights keyed ``(u, v)`` with ``u <= v``; ``(u, u)`` is a loop.

    Adjacency convention: ``A[u][v] = A[v][u] = w(u, v)`` and ``A[u][u] = 2 w(u, u)``,
    so the total adjacency mass equals twice the total weight.
    """

    nodes: Tuple[str, ...]
    weights: Mapping[Tuple[str, str], float]
    granularity: Granularity = Granularity.T_NULL
    strategy: str = AGGREGATE

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights.values())

    def weight(self, u: str, v: str) -> float:
        return self.weights.get((u, v) if u <= v else (v, u), 0.0)

    def adjacency(self) -> Dict[str, Dict[str, float]]:
        adj: Dict[str, Dict[str, float]] = {n: {} for n in self.nodes}
        for (u, v), w in self.weights.items():
            if u == v:
                adj[u][u] = adj[u].get(u, 0.0) + 2.0 * w
            else:
                adj[u][v] = adj[u].get(v, 0.0) + w
                adj[v][u] = adj[v].get(u, 0.0) + w
        return adj

    def scaled(self, k: float) -> "UndirectedProjection":
        return UndirectedProjection(
            self.nodes, {e: w * k for e, w in self.weights.items()}, self.granularity, self.strategy
        )


def profile_cosine(p: np.ndarray, q: np.ndarray) -> float:
    """Cosine similarity of two non-negative bucket profiles, in [0, 1]."""
    pn = p / p.sum() if p.sum() > 0 else p
    qn = q / q.sum() if q.sum() > 0 else q
    if np.array_equal(pn, qn):
        return 1.0 if pn.any() else 0.0
    denom = float(np.linalg.norm(pn) * np.linalg.norm(qn))
    if denom == 0.0:
        return 0.0
    return min(1.0, max(0.0, float(np.dot(pn, qn)) / denom))


def project_for_communities(g: TripGraph, strategy: Optional[str] = None) -> UndirectedProjection:
    """Fold directions (and buckets) into undirected weights.

    ``aggregate`` sums trips over buckets and both directions.
    ``bucket-similarity`` multiplies that sum by ``1 + cos`` of the two
    stations' temporal profiles, so stations used at the same times bind
    more strongly. On an untimed graph every multiplier is 2.
    """
    if strategy is None:
        strategy = DEFAULT_STRATEGY[g.granularity]
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown projection strategy {strategy!r}; expected one of {STRATEGIES}")
    agg: Dict[Tuple[str, str], float] = defaultdict(float)
    for (s, d), w in g.pair_weights().items():
        agg[(s, d) if s <= d else (d, s)] += w
    if strategy == BUCKET_SIMILARITY:
        prof = g.station_profiles()
        agg = {(u, v): w * (1.0 + profile_cosine(prof[u], prof[v])) for (u, v), w in agg.items()}
    weights = {k: float(agg[k]) for k in sorted(agg)}
    return UndirectedProjection(tuple(g.nodes), weights, g.granularity, strategy)


def write_edges(path, graphs: Iterable[TripGraph]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        for g in graphs:
            for (s, d, b), wt in g.edges.items():
                w.writerow([s, d, "" if b is None else b, wt, g.granularity.value])


def read_edges(path, nodes: Sequence[str], origins: Optional[Mapping[str, str]] = None) -> Dict[Granularity, TripGraph]:
    raw: Dict[Granularity, Dict[EdgeKey, int]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            g = Granularity.parse(row["granularity"])
            b = None if row["bucket"] == "" else int(row["bucket"])
            raw[g][(row["src"], row["dst"], b)] = int(row["weight"])
    return {
        g: TripGraph(tuple(nodes), {k: e[k] for k in sorted(e, key=_edge_sort_key)}, g, dict(origins or {}))
        for g, e in raw.items()
    }
