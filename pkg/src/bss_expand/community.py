"""Modularity and Louvain community detection on undirected projections."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from bss_expand.errors import ConfigError, DataError, InvariantError
from bss_expand.graph import Granularity, UndirectedProjection

COMMUNITY_COLUMNS = ("granularity", "strategy", "station_id", "community_id")
META_COLUMNS = (
    "granularity",
    "strategy",
    "seed",
    "num_communities",
    "modularity",
    "passes",
    "resolution",
    "min_gain",
    "max_passes",
)

# gains below this are float noise, not improvements
_MOVE_EPS = 1e-12
_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class LouvainConfig:
    seed: int = 0
    resolution: float = 1.0
    min_gain: float = 1e-7
    max_passes: int = 20

    def __post_init__(self):
        if not (isinstance(self.resolution, (int, float)) and self.resolution > 0 and math.isfinite(self.resolution)):
            raise ConfigError(f"resolution must be a positive real, got {self.resolution!r}")
        if not (self.min_gain > 0 and math.isfinite(self.min_gain)):
            raise ConfigError(f"min_gain must be a positive real, got {self.min_gain!r}")
        if int(self.max_passes) != self.max_passes or self.max_passes < 1:
            raise ConfigError(f"max_passes must be a positive integer, got {self.max_passes!r}")
        if int(self.seed) != self.seed:
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")


@dataclass(frozen=True)
class Partition:
    assignment: Mapping[str, int]
    modularity: float
    granularity: Granularity = Granularity.T_NULL
    strategy: str = "aggregate"
    passes: int = 0
    pass_modularity: Tuple[float, ...] = ()
    config: LouvainConfig = field(default_factory=LouvainConfig)

    @property
    def num_communities(self) -> int:
        return len(set(self.assignment.values()))

    def communities(self) -> List[List[str]]:
        groups: Dict[int, List[str]] = defaultdict(list)
        for node in sorted(self.assignment):
            groups[self.assignment[node]].append(node)
        return [groups[c] for c in sorted(groups)]


def modularity(p: UndirectedProjection, assignment: Mapping[str, int], resolution: float = 1.0) -> float:
    """Q = sum over communities of in_c / 2m - resolution * (tot_c / 2m)^2."""
    m = p.total_weight
    if not m > 0:
        raise DataError("empty graph")
    missing = [n for n in p.nodes if n not in assignment]
    if missing:
        raise ValueError(f"assignment misses {len(missing)} nodes, e.g. {missing[0]!r}")
    # fsum per community keeps sums correctly rounded, so one community gives 0 exactly
    inside: Dict[int, List[float]] = defaultdict(list)
    tot: Dict[int, List[float]] = defaultdict(list)
    for (u, v), w in p.weights.items():
        cu = assignment[u]
        cv = assignment[v]
        tot[cu].append(w)
        tot[cv].append(w)
        if cu == cv:
            inside[cu].append(2.0 * w)
    two_m = 2.0 * m
    return math.fsum(
        math.fsum(inside[c]) / two_m - resolution * (math.fsum(tot[c]) / two_m) ** 2 for c in tot
    )


class _WorkGraph:
    """Integer-indexed adjacency with weights normalised to total weight 1."""

    __slots__ = ("n", "adj", "k")

    def __init__(self, n: int, adj: List[Dict[int, float]]):
        self.n = n
        self.adj = adj
        self.k = [math.fsum(a.values()) for a in adj]

    def quality(self, comm: Sequence[int], resolution: float) -> float:
        inside: Dict[int, float] = defaultdict(float)
        tot: Dict[int, float] = defaultdict(float)
        for i in range(self.n):
            ci = comm[i]
            tot[ci] += self.k[i]
            for j, w in self.adj[i].items():
                if comm[j] == ci:
                    inside[ci] += w
        # 2m == 2 after normalisation
        return math.fsum(inside[c] / 2.0 - resolution * (tot[c] / 2.0) ** 2 for c in tot)

    def aggregate(self, comm: Sequence[int], n_comm: int) -> "_WorkGraph":
        adj: List[Dict[int, float]] = [defaultdict(float) for _ in range(n_comm)]
        for i in range(self.n):
            ci = comm[i]
            row = adj[ci]
            for j, w in self.adj[i].items():
                row[comm[j]] += w
        return _WorkGraph(n_comm, [dict(sorted(r.items())) for r in adj])


def _work_graph(p: UndirectedProjection) -> Tuple[List[str], _WorkGraph]:
    nodes = sorted(p.nodes)
    index = {n: i for i, n in enumerate(nodes)}
    m = p.total_weight
    adj: List[Dict[int, float]] = [dict() for _ in nodes]
    for (u, v), w in p.weights.items():
        if w == 0:
            continue
        wn = w / m
        a, b = index[u], index[v]
        if a == b:
            adj[a][a] = adj[a].get(a, 0.0) + 2.0 * wn
        else:
            adj[a][b] = adj[a].get(b, 0.0) + wn
            adj[b][a] = adj[b].get(a, 0.0) + wn
    return nodes, _WorkGraph(len(nodes), [dict(sorted(r.items())) for r in adj])


def _local_moving(g: _WorkGraph, resolution: float, min_gain: float, rng: np.random.Generator):
    comm = list(range(g.n))
    tot = list(g.k)
    moved_any = False
    half_res = resolution / 2.0
    for _ in range(_MAX_SWEEPS):
        sweep_gain = 0.0
        moves = 0
        for i in rng.permutation(g.n).tolist():
            ci = comm[i]
            ki = g.k[i]
            links: Dict[int, float] = defaultdict(float)
            for j, w in g.adj[i].items():
                if j != i:
                    links[comm[j]] += w
            tot[ci] -= ki
            stay = links.get(ci, 0.0) - half_res * tot[ci] * ki
            best_c = ci
            best_gain = -math.inf
            for c in sorted(links):
                if c == ci:
                    continue
                gain = links[c] - half_res * tot[c] * ki
                if gain > best_gain:
                    best_gain = gain
                    best_c = c
            if best_c != ci and best_gain - stay > _MOVE_EPS:
                comm[i] = best_c
                tot[best_c] += ki
                sweep_gain += best_gain - stay
                moves += 1
            else:
                tot[ci] += ki
        if moves:
            moved_any = True
        if moves == 0 or sweep_gain <= min_gain:
            break
    # dense relabel by first appearance
    relabel: Dict[int, int] = {}
    dense = [relabel.setdefault(c, len(relabel)) for c in comm]
    return dense, len(relabel), moved_any


def louvain(p: UndirectedProjection, cfg: Optional[LouvainConfig] = None) -> Partition:
    """Two-phase Louvain: seeded local moving, then community aggregation,
    repeated until a pass gains at most ``min_gain`` or ``max_passes`` is hit."""
    cfg = cfg or LouvainConfig()
    if not p.nodes or not p.total_weight > 0:
        raise DataError("empty graph")
    nodes, g = _work_graph(p)
    rng = np.random.default_rng(cfg.seed)
    membership = list(range(len(nodes)))
    q_prev = g.quality(list(range(g.n)), cfg.resolution)
    history: List[float] = []
    passes = 0
    for _ in range(cfg.max_passes):
        comm, n_comm, moved = _local_moving(g, cfg.resolution, cfg.min_gain, rng)
        if not moved:
            break
        q_new = g.quality(comm, cfg.resolution)
        if q_new < q_prev - 1e-12:
            raise InvariantError(f"Louvain pass lowered modularity: {q_new} < {q_prev}")
        membership = [comm[c] for c in membership]
        passes += 1
        history.append(q_new)
        gain = q_new - q_prev
        q_prev = q_new
        g = g.aggregate(comm, n_comm)
        if gain <= cfg.min_gain:
            break

    # dense ids ordered by each community's smallest node id
    relabel: Dict[int, int] = {}
    assignment = {n: relabel.setdefault(membership[i], len(relabel)) for i, n in enumerate(nodes)}
    q = modularity(p, assignment, cfg.resolution)
    return Partition(assignment, q, p.granularity, p.strategy, passes, tuple(history), cfg)


def detect_all(projections: Mapping[Granularity, UndirectedProjection], cfg: Optional[LouvainConfig] = None) -> List[Partition]:
    """Louvain on every projection with one shared configuration and seed."""
    cfg = cfg or LouvainConfig()
    order = [g for g in Granularity if g in projections]
    return [louvain(projections[g], cfg) for g in order]


def write_communities(path, partitions: Sequence[Partition]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMMUNITY_COLUMNS)
        for part in partitions:
            for node in sorted(part.assignment):
                w.writerow([part.granularity.value, part.strategy, node, part.assignment[node]])


def write_detect_meta(path, partitions: Sequence[Partition]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_COLUMNS)
        for part in partitions:
            c = part.config
            w.writerow([
                part.granularity.value,
                part.strategy,
                c.seed,
                part.num_communities,
                repr(part.modularity),
                part.passes,
                repr(float(c.resolution)),
                repr(float(c.min_gain)),
                c.max_passes,
            ])


def read_partitions(communities_path, meta_path) -> List[Partition]:
    assign: Dict[Tuple[str, str], Dict[str, int]] = defaultdict(dict)
    with open(communities_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            assign[(row["granularity"], row["strategy"])][row["station_id"]] = int(row["community_id"])
    out = []
    with open(meta_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cfg = LouvainConfig(
                int(row["seed"]), float(row["resolution"]), float(row["min_gain"]), int(row["max_passes"])
            )
            key = (row["granularity"], row["strategy"])
            out.append(
                Partition(
                    assign.get(key, {}),
                    float(row["modularity"]),
                    Granularity.parse(row["granularity"]),
                    row["strategy"],
                    int(row["passes"]),
                    (),
                    cfg,
                )
            )
    return out
