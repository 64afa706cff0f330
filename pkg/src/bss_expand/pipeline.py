"""Stage orchestration. Each stage reads the previous stage's files from the
output directory when not handed in-memory results, so stages can be re-run
one at a time and reproduce the full run byte for byte."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from bss_expand import cluster as cl
from bss_expand import community as cm
from bss_expand import graph as gr
from bss_expand import ingest
from bss_expand import report as rp
from bss_expand import selection as sel
from bss_expand.config import PipelineConfig
from bss_expand.errors import DataError, PipelineError
from bss_expand.synth import synth_generate

log = logging.getLogger(__name__)

CLEAN_LOCATIONS = "locations_clean.csv"
CLEAN_RENTALS = "rentals_clean.csv"
AUDIT = "cleaning_audit.csv"
CLUSTERS = "clusters.csv"
CANDIDATES = "candidates.csv"
STATIONS = "stations.csv"
ASSIGNMENT = "assignment.csv"
EDGES = "edges.csv"
COMMUNITIES = "communities.csv"
DETECT_META = "detect_meta.csv"
COMMUNITY_STATS = "community_stats.csv"
PROFILES = "temporal_profiles.csv"
STATION_SUMMARY = "station_summary.csv"
GEOJSON = "stations.geojson"
RUN_SUMMARY = "run_summary.csv"
SELECTION_META = "selection_meta.csv"


class StageError(PipelineError):
    """Wraps a stage failure; keeps the original exit code."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage}: {exc}")
        self.stage = stage
        self.exit_code = getattr(exc, "exit_code", 4)
        self.__cause__ = exc


def _stage(name):
    def deco(fn):
        def wrapper(*args, **kwargs):
            log.info("stage %s", name)
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc

        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper

    return deco


def _out(cfg: PipelineConfig) -> Path:
    p = cfg.out
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_kv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "value"))
        for k, v in rows:
            w.writerow((k, v))


def _read_kv(path) -> Dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["metric"]: r["value"] for r in csv.DictReader(fh)}


@dataclass
class CleanResult:
    dataset: ingest.CleanedDataset
    raw_counts: Dict[str, int] = field(default_factory=dict)


@_stage("synth")
def stage_synth(cfg: PipelineConfig, out_dir=None) -> Dict[str, Path]:
    target = Path(out_dir) if out_dir is not None else _out(cfg) / "input"
    data = synth_generate(cfg.synth_config(), seed=cfg.seed)
    return data.write(target)


@_stage("clean")
def stage_clean(cfg: PipelineConfig) -> CleanResult:
    if not cfg.locations or not cfg.rentals:
        raise DataError("input paths 'locations' and 'rentals' are required (or enable synth)")
    for p in (cfg.locations, cfg.rentals):
        if not Path(p).is_file():
            raise DataError(f"input file not found: {p}")
    out = _out(cfg)
    parsed = ingest.parse_files(cfg.rentals, cfg.locations, tz=cfg.timezone)
    for r in parsed.rejects[:20]:
        log.warning("rejected %s line %d: %s", r.table, r.line, r.reason)
    ds = ingest.clean(parsed.rentals, parsed.locations, cfg.bounding_region())
    ingest.write_locations(out / CLEAN_LOCATIONS, ds.locations)
    ingest.write_rentals(out / CLEAN_RENTALS, ds.rentals)
    ingest.write_audit(out / AUDIT, ds.audit, parsed.rejects)
    n_rej = {t: sum(1 for r in parsed.rejects if r.table == t) for t in ("locations", "rentals")}
    raw = {
        "locations_raw": len(parsed.locations) + n_rej["locations"],
        "rentals_raw": len(parsed.rentals) + n_rej["rentals"],
        "stations_raw": sum(1 for loc in parsed.locations if loc.is_fixed_station),
        "rejected_rows": len(parsed.rejects),
    }
    _write_kv(out / (AUDIT.replace(".csv", "_counts.csv")), raw.items())
    return CleanResult(ds, raw)


def load_clean(cfg: PipelineConfig) -> ingest.CleanedDataset:
    out = cfg.out
    try:
        ds = ingest.load_dataset(out / CLEAN_RENTALS, out / CLEAN_LOCATIONS, cfg.bounding_region(), tz=cfg.timezone)
    except FileNotFoundError as exc:
        raise DataError(f"cleaned data missing ({exc.filename}); run the clean stage first") from None
    audit = ingest.read_audit(out / AUDIT) if (out / AUDIT).is_file() else ()
    return ingest.CleanedDataset(ds.locations, ds.rentals, tuple(a for a in audit if a.rule != "malformed_row"))


@_stage("cluster")
def stage_cluster(cfg: PipelineConfig, dataset: Optional[ingest.CleanedDataset] = None) -> cl.ClusterSet:
    dataset = dataset or load_clean(cfg)
    cs = cl.build_clusters(dataset, cfg.absorption_radius, cfg.cluster_cut)
    cl.write_clusters(_out(cfg) / CLUSTERS, cs)
    log.info("%d clusters (%d anchored, %d candidates)", len(cs), len(cs.anchored), len(cs.candidates))
    return cs


def _load_or(path, loader, what):
    if not Path(path).is_file():
        raise DataError(f"{what} missing ({path}); run the earlier stage first")
    return loader(path)


@_stage("select")
def stage_select(cfg: PipelineConfig, dataset=None, clusters=None) -> sel.StationSet:
    dataset = dataset or load_clean(cfg)
    out = _out(cfg)
    clusters = clusters or _load_or(out / CLUSTERS, cl.read_clusters, "clusters.csv")
    ss, outcome, cands = sel.expand_network(dataset, clusters, cfg.proximity)
    sel.write_stations(out / STATIONS, ss)
    sel.write_assignment(out / ASSIGNMENT, ss)
    chosen = {c.cluster_id: c.score for c in outcome.selected}
    with open(out / CANDIDATES, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cluster_id", "centroid_lat", "centroid_lon", "degree", "score", "selected"))
        for c in cands:
            w.writerow((c.cluster_id, repr(c.centroid.lat), repr(c.centroid.lon), c.degree, chosen.get(c.cluster_id, 0),
                        "true" if c.cluster_id in chosen else "false"))

    # candidate graph: every cluster as a node, before any reassignment
    membership = {loc: str(cid) for loc, cid in clusters.membership().items()}
    cand_graph = gr.build_graph(dataset.rentals, membership, gr.Granularity.T_NULL,
                                nodes=[str(c.cluster_id) for c in clusters.clusters])
    meta = [
        ("clusters", len(clusters)),
        ("anchored_clusters", len(clusters.anchored)),
        ("candidates", len(cands)),
        ("degree_threshold", outcome.threshold),
        ("rejected_degree", outcome.rejected_degree),
        ("rejected_fixed_proximity", outcome.rejected_fixed_proximity),
        ("rejected_elimination", outcome.rejected_elimination),
        ("elimination_iterations", outcome.iterations),
        ("selected", len(outcome.selected)),
        ("stations_total", len(ss.stations)),
    ]
    meta += [(f"candidate_graph_{k}", v) for k, v in gr.graph_measures(cand_graph).items()]
    _write_kv(out / SELECTION_META, meta)
    log.info("selected %d new stations (threshold %d)", len(outcome.selected), outcome.threshold)
    return ss


def load_stations(cfg: PipelineConfig) -> sel.StationSet:
    out = cfg.out
    if not (out / STATIONS).is_file():
        raise DataError("stations.csv missing; run the select stage first")
    return sel.read_station_set(out / STATIONS, out / ASSIGNMENT)


def _granularities(cfg: PipelineConfig) -> List[gr.Granularity]:
    gs = cfg.granularity_list()
    # the report always needs whole-period counts
    return gs if gr.Granularity.T_NULL in gs else [gr.Granularity.T_NULL] + gs


@_stage("graph")
def stage_graph(cfg: PipelineConfig, dataset=None, stations=None) -> Dict[gr.Granularity, gr.TripGraph]:
    dataset = dataset or load_clean(cfg)
    stations = stations or load_stations(cfg)
    nodes = [s.station_id for s in stations.stations]
    graphs = {
        g: gr.build_graph(dataset.rentals, stations.assignment, g, nodes=nodes, origins=stations.origins())
        for g in _granularities(cfg)
    }
    gr.write_edges(_out(cfg) / EDGES, graphs.values())
    return graphs


def load_graphs(cfg: PipelineConfig, stations: sel.StationSet) -> Dict[gr.Granularity, gr.TripGraph]:
    path = cfg.out / EDGES
    if not path.is_file():
        raise DataError("edges.csv missing; run the graph stage first")
    nodes = [s.station_id for s in stations.stations]
    graphs = gr.read_edges(path, nodes, stations.origins())
    for g in _granularities(cfg):
        graphs.setdefault(g, gr.TripGraph(tuple(nodes), {}, g, stations.origins()))
    return graphs


@_stage("detect")
def stage_detect(cfg: PipelineConfig, graphs=None, stations=None) -> List[cm.Partition]:
    if graphs is None:
        graphs = load_graphs(cfg, stations or load_stations(cfg))
    projections = {g: gr.project_for_communities(graphs[g], cfg.strategy_for(g)) for g in cfg.granularity_list()}
    parts = cm.detect_all(projections, cfg.louvain())
    out = _out(cfg)
    cm.write_communities(out / COMMUNITIES, parts)
    cm.write_detect_meta(out / DETECT_META, parts)
    for p in parts:
        log.info("%s/%s: %d communities, Q=%.4f", p.granularity.value, p.strategy, p.num_communities, p.modularity)
    return parts


@_stage("report")
def stage_report(cfg: PipelineConfig, stations=None, graphs=None, partitions=None) -> Dict[str, object]:
    out = _out(cfg)
    stations = stations or load_stations(cfg)
    graphs = graphs or load_graphs(cfg, stations)
    if partitions is None:
        partitions = _load_or(out / COMMUNITIES, lambda p: cm.read_partitions(p, out / DETECT_META), "communities.csv")
    base = graphs[gr.Granularity.T_NULL]
    origins = stations.origins()
    tables = []
    profiles = []
    containment = {}
    for part in partitions:
        stats = rp.community_stats(part, base, origins)
        rp.check_identities(stats, base.total_weight)
        tables.append((part, stats))
        containment[part.granularity.value] = rp.self_containment(stats) if base.total_weight else 0.0
        if part.granularity is not gr.Granularity.T_NULL:
            profiles.extend(rp.temporal_profiles(part, graphs[part.granularity]))
    rp.write_community_stats(out / COMMUNITY_STATS, tables)
    rp.write_profiles(out / PROFILES, profiles)
    rp.write_station_summary(out / STATION_SUMMARY, rp.station_summary(stations, base))
    for k, part in enumerate(partitions):
        doc = rp.export_geojson(stations, part)
        rp.write_geojson(out / (GEOJSON if k == 0 else f"stations_{part.granularity.value}.geojson"), doc)
    return {"self_containment": containment}


def write_run_summary(cfg: PipelineConfig, raw_counts, dataset, stations, graphs, partitions, report) -> None:
    out = _out(cfg)
    sel_meta = _read_kv(out / SELECTION_META)
    base = graphs[gr.Granularity.T_NULL]
    summary = rp.station_summary(stations, base)[:2]
    rows = [
        ("locations_raw", raw_counts.get("locations_raw", "")),
        ("locations_clean", len(dataset.locations)),
        ("rentals_raw", raw_counts.get("rentals_raw", "")),
        ("rentals_clean", len(dataset.rentals)),
        ("stations_raw", raw_counts.get("stations_raw", "")),
        ("stations_clean", len(dataset.fixed_stations)),
        ("rejected_rows", raw_counts.get("rejected_rows", "")),
    ]
    rows += list(sel_meta.items())
    rows += [
        ("stations_fixed", len(stations.fixed)),
        ("stations_selected", len(stations.selected)),
        ("trips_out", sum(r["trips_from"] for r in summary)),
        ("trips_in", sum(r["trips_to"] for r in summary)),
        ("trips_total", len(dataset.rentals)),
    ]
    for part in partitions:
        g = part.granularity.value
        rows += [
            (f"{g}_communities", part.num_communities),
            (f"{g}_modularity", repr(part.modularity)),
            (f"{g}_self_containment", repr(report["self_containment"][g])),
        ]
    _write_kv(out / RUN_SUMMARY, rows)


def run_pipeline(cfg: PipelineConfig) -> Dict[str, object]:
    """Full run: (synth) -> clean -> cluster -> select -> graph -> detect -> report."""
    if cfg.synth:
        paths = stage_synth(cfg)
        cfg.locations = str(paths["locations"])
        cfg.rentals = str(paths["rentals"])
    cleaned = stage_clean(cfg)
    ds = cleaned.dataset
    clusters = stage_cluster(cfg, ds)
    stations = stage_select(cfg, ds, clusters)
    graphs = stage_graph(cfg, ds, stations)
    parts = stage_detect(cfg, graphs, stations)
    rep = stage_report(cfg, stations, graphs, parts)
    write_run_summary(cfg, cleaned.raw_counts, ds, stations, graphs, parts, rep)
    return {
        "dataset": ds,
        "clusters": clusters,
        "stations": stations,
        "graphs": graphs,
        "partitions": parts,
        "report": rep,
    }
