"""Synthetic dockless bike-share data with planted communities.

Each community is a spatial district holding fixed stations and station-free
hotspots. Trips mostly stay inside their origin community; a configurable
fraction crosses to another one. Commuter communities ride on weekdays with
08:00/17:00 peaks, leisure communities at weekends around midday. The
generator writes the two input tables plus ``truth.csv`` mapping every
location to its planted community.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from bss_expand.errors import ConfigError
from bss_expand.geo import BoundingRegion, GeoPoint, haversine_distance
from bss_expand.ingest import LOCATION_COLUMNS, RENTAL_COLUMNS

TRUTH_COLUMNS = ("location_id", "community", "site_id", "hotspot_id")

COMMUTER = "commuter"
LEISURE = "leisure"

_M_PER_DEG_LAT = 6_371_000.0 * math.pi / 180.0


def _hour_weights(peaks: Mapping[int, float], floor: float) -> np.ndarray:
    w = np.full(24, floor)
    for h, v in peaks.items():
        w[h] += v
    w[:6] *= 0.2
    return w / w.sum()


DAY_PROFILE = {
    COMMUTER: np.array([1.0, 1.0, 1.0, 1.0, 0.95, 0.3, 0.25]),
    LEISURE: np.array([0.45, 0.4, 0.4, 0.45, 0.6, 1.3, 1.2]),
}
HOUR_PROFILE = {
    COMMUTER: _hour_weights({7: 0.5, 8: 1.6, 9: 0.5, 16: 0.5, 17: 1.5, 18: 0.5}, 0.08),
    LEISURE: _hour_weights({11: 0.5, 12: 0.9, 13: 1.0, 14: 0.9, 15: 0.6}, 0.12),
}
for _k in DAY_PROFILE:
    DAY_PROFILE[_k] = DAY_PROFILE[_k] / DAY_PROFILE[_k].sum()


@dataclass
class SynthConfig:
    n_fixed: int = 92
    n_hotspots: int = 160
    n_communities: int = 4
    n_trips: int = 62_000
    pool_size: int = 31
    crossing_prob: float = 0.05
    noise_prob: float = 0.05
    jitter_m: float = 25.0
    site_spacing_m: float = 450.0
    district_radius_m: float = 2_500.0
    district_gap_m: float = 1_500.0
    station_share: float = 0.4
    profiles: Tuple[str, ...] = (COMMUTER, LEISURE)
    dirty_rate: float = 0.0
    start_date: str = "2020-01-03"
    end_date: str = "2021-09-19"
    region: BoundingRegion = field(default_factory=BoundingRegion.dublin)

    def __post_init__(self):
        for name in ("n_fixed", "n_communities", "pool_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synth {name} must be >= 1")
        for name in ("n_hotspots", "n_trips"):
            if getattr(self, name) < 0:
                raise ConfigError(f"synth {name} must be >= 0")
        for name in ("crossing_prob", "noise_prob", "dirty_rate", "station_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"synth {name} must lie in [0, 1], got {v}")
        if self.jitter_m <= 0 or self.site_spacing_m <= 0 or self.district_radius_m <= 0:
            raise ConfigError("synth distances must be positive")
        bad = [p for p in self.profiles if p not in (COMMUTER, LEISURE)]
        if bad or not self.profiles:
            raise ConfigError(f"unknown synth profile(s) {bad}; use commuter/leisure")

    def profile_of(self, community: int) -> str:
        return self.profiles[community % len(self.profiles)]


@dataclass
class Site:
    site_id: str
    community: int
    point: GeoPoint
    popularity: float
    fixed: bool
    hotspot_id: str = ""
    station_location: Optional[str] = None
    pool: List[str] = field(default_factory=list)


@dataclass
class SynthData:
    locations: List[tuple]
    rentals: List[tuple]
    truth: List[tuple]
    sites: List[Site]

    def write(self, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "locations": out / "locations.csv",
            "rentals": out / "rentals.csv",
            "truth": out / "truth.csv",
        }
        for key, cols, rows in (
            ("locations", LOCATION_COLUMNS, self.locations),
            ("rentals", RENTAL_COLUMNS, self.rentals),
            ("truth", TRUTH_COLUMNS, self.truth),
        ):
            with open(paths[key], "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                w.writerows(rows)
        return paths


def _offset(p: GeoPoint, dx_m: float, dy_m: float) -> GeoPoint:
    lat = p.lat + dy_m / _M_PER_DEG_LAT
    lon = p.lon + dx_m / (_M_PER_DEG_LAT * math.cos(math.radians(p.lat)))
    return GeoPoint(lat, lon)


def _disk(rng: np.random.Generator, radius: float) -> Tuple[float, float]:
    r = radius * math.sqrt(rng.random())
    t = 2.0 * math.pi * rng.random()
    return r * math.cos(t), r * math.sin(t)


def _place_districts(cfg: SynthConfig, rng: np.random.Generator) -> List[GeoPoint]:
    reg = cfg.region
    margin_lat = cfg.district_radius_m / _M_PER_DEG_LAT
    mid = math.radians((reg.min_lat + reg.max_lat) / 2)
    margin_lon = cfg.district_radius_m / (_M_PER_DEG_LAT * math.cos(mid))
    lo_lat, hi_lat = reg.min_lat + margin_lat, reg.max_lat - margin_lat
    lo_lon, hi_lon = reg.min_lon + margin_lon, reg.max_lon - margin_lon
    if lo_lat >= hi_lat or lo_lon >= hi_lon:
        raise ConfigError("infeasible layout: district radius exceeds the region")
    sep = 2 * cfg.district_radius_m + cfg.district_gap_m
    centers: List[GeoPoint] = []
    for _ in range(20_000):
        if len(centers) == cfg.n_communities:
            return centers
        p = GeoPoint(rng.uniform(lo_lat, hi_lat), rng.uniform(lo_lon, hi_lon))
        if all(haversine_distance(p, c) >= sep for c in centers):
            centers.append(p)
    raise ConfigError(
        f"infeasible layout: cannot fit {cfg.n_communities} districts {sep:.0f} m apart in the region"
    )


def _place_sites(cfg: SynthConfig, rng, centers: List[GeoPoint]) -> List[Site]:
    kinds = [True] * cfg.n_fixed + [False] * cfg.n_hotspots
    placed: List[Site] = []
    per_comm: Dict[int, List[GeoPoint]] = {c: [] for c in range(cfg.n_communities)}
    n_fix = n_hot = 0
    for k, fixed in enumerate(kinds):
        comm = k % cfg.n_communities
        for _ in range(5_000):
            dx, dy = _disk(rng, cfg.district_radius_m)
            p = _offset(centers[comm], dx, dy)
            if all(haversine_distance(p, q) >= cfg.site_spacing_m for q in per_comm[comm]):
                break
        else:
            raise ConfigError(
                f"infeasible layout: cannot space {len(kinds)} sites {cfg.site_spacing_m:.0f} m apart "
                f"inside districts of radius {cfg.district_radius_m:.0f} m"
            )
        per_comm[comm].append(p)
        if fixed:
            pop = rng.uniform(0.6, 1.4)
            site = Site(f"F{n_fix:03d}", comm, p, pop, True)
            n_fix += 1
        else:
            pop = rng.uniform(1.0, 1.6)
            site = Site(f"H{n_hot:03d}", comm, p, pop, False, hotspot_id=f"H{n_hot:03d}")
            n_hot += 1
        placed.append(site)
    return placed


def synth_generate(cfg: Optional[SynthConfig] = None, seed: int = 42) -> SynthData:
    """Generate a full dataset; identical ``(cfg, seed)`` give identical rows."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    centers = _place_districts(cfg, rng)
    sites = _place_sites(cfg, rng, centers)

    loc_rows: List[tuple] = []
    truth: List[tuple] = []
    loc_point: Dict[str, GeoPoint] = {}
    counter = [0]

    def new_location(p: GeoPoint, fixed: bool, name: str, site: Site) -> str:
        lid = f"L{counter[0]:07d}"
        counter[0] += 1
        loc_rows.append((lid, repr(p.lat), repr(p.lon), "true" if fixed else "false", name))
        truth.append((lid, site.community, site.site_id, site.hotspot_id))
        loc_point[lid] = p
        return lid

    for s in sites:
        if s.fixed:
            s.station_location = new_location(s.point, True, f"Station {s.site_id}", s)
        for _ in range(cfg.pool_size):
            dx, dy = _disk(rng, cfg.jitter_m)
            s.pool.append(new_location(_offset(s.point, dx, dy), False, "", s))

    by_comm: Dict[int, List[int]] = {c: [] for c in range(cfg.n_communities)}
    for k, s in enumerate(sites):
        by_comm[s.community].append(k)
    comm_pop = np.array([sum(sites[k].popularity for k in by_comm[c]) for c in range(cfg.n_communities)])
    comm_p = comm_pop / comm_pop.sum()
    site_p = {
        c: np.array([sites[k].popularity for k in by_comm[c]]) / sum(sites[k].popularity for k in by_comm[c])
        for c in by_comm
    }

    start = datetime.fromisoformat(cfg.start_date)
    end = datetime.fromisoformat(cfg.end_date)
    first_monday = start - timedelta(days=start.weekday())
    n_weeks = max(1, (end - first_monday).days // 7)

    used = set()
    n = cfg.n_trips
    origin_comm = rng.choice(cfg.n_communities, size=n, p=comm_p)
    cross = rng.random(n) < cfg.crossing_prob
    rentals: List[tuple] = []

    def endpoint(site: Site) -> str:
        if rng.random() < cfg.noise_prob:
            dx, dy = _disk(rng, 200.0)
            if math.hypot(dx, dy) < 80.0:
                scale = 80.0 / max(math.hypot(dx, dy), 1e-9)
                dx, dy = dx * scale, dy * scale
            return new_location(_offset(site.point, dx, dy), False, "", site)
        if site.fixed and rng.random() < cfg.station_share:
            return site.station_location
        return site.pool[int(rng.integers(len(site.pool)))]

    for t in range(n):
        c = int(origin_comm[t])
        if cross[t] and cfg.n_communities > 1:
            d = int(rng.integers(cfg.n_communities - 1))
            d = d if d < c else d + 1
        else:
            d = c
        o_site = sites[by_comm[c][int(rng.choice(len(by_comm[c]), p=site_p[c]))]]
        d_site = sites[by_comm[d][int(rng.choice(len(by_comm[d]), p=site_p[d]))]]
        o_loc = endpoint(o_site)
        d_loc = endpoint(d_site)
        prof = cfg.profile_of(c)
        day = int(rng.choice(7, p=DAY_PROFILE[prof]))
        hour = int(rng.choice(24, p=HOUR_PROFILE[prof]))
        minute = int(rng.integers(60))
        week = int(rng.integers(n_weeks))
        t0 = first_monday + timedelta(days=7 * week + day, hours=hour, minutes=minute)
        dur = timedelta(minutes=5 + int(min(115, rng.exponential(15))))
        rentals.append((f"R{t:07d}", t0.isoformat(), (t0 + dur).isoformat(), o_loc, d_loc))
        used.add(o_loc)
        used.add(d_loc)

    # unreferenced pool locations would be cleaned away anyway
    keep = {row[0] for row in loc_rows if row[0] in used or row[3] == "true"}
    loc_rows = [r for r in loc_rows if r[0] in keep]
    truth = [r for r in truth if r[0] in keep]

    if cfg.dirty_rate > 0:
        _plant_dirt(cfg, rng, loc_rows, rentals, sites, counter)

    return SynthData(loc_rows, rentals, truth, sites)


def _plant_dirt(cfg, rng, loc_rows, rentals, sites, counter) -> None:
    """Rows that each cleaning rule must remove (ids outside the truth table)."""
    n_bad = max(5, int(round(cfg.dirty_rate * len(rentals))))
    reg = cfg.region
    good_locs = [r[0] for r in loc_rows if r[3] == "false"]
    if not good_locs:
        return
    base = len(rentals)

    def lid():
        counter[0] += 1
        return f"X{counter[0]:07d}"

    def rid(k):
        return f"R{base + k:07d}"

    k = 0
    t0 = datetime.fromisoformat(cfg.start_date).replace(hour=10)
    stamp = (t0.isoformat(), (t0 + timedelta(minutes=12)).isoformat())
    for j in range(n_bad):
        kind = j % 5
        other = good_locs[int(rng.integers(len(good_locs)))]
        if kind == 0:  # outside region, with a rental
            x = lid()
            loc_rows.append((x, repr(reg.max_lat + 0.5), repr(reg.min_lon - 0.3), "false", ""))
            rentals.append((rid(k), *stamp, x, other))
        elif kind == 1:  # missing coordinates, with a rental
            x = lid()
            loc_rows.append((x, "", "", "false", ""))
            rentals.append((rid(k), *stamp, other, x))
        elif kind == 2:  # null location reference
            rentals.append((rid(k), *stamp, other, ""))
        elif kind == 3:  # dangling reference
            rentals.append((rid(k), *stamp, "MISSING" + str(j), other))
        else:  # unreferenced location
            loc_rows.append((lid(), repr((reg.min_lat + reg.max_lat) / 2), repr((reg.min_lon + reg.max_lon) / 2), "false", ""))
            k -= 1
        k += 1
    # a few fixed stations outside the region
    for j in range(3):
        loc_rows.append((lid(), repr(reg.min_lat - 0.2), repr(reg.max_lon + 0.1 * (j + 1)), "true", f"Offsite {j}"))


def read_truth(path) -> Dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["location_id"]: int(r["community"]) for r in csv.DictReader(fh)}


def station_truth(assignment: Mapping[str, str], truth: Mapping[str, int]) -> Dict[str, int]:
    """Majority planted community of the locations assigned to each station
    (ties to the smaller community)."""
    votes: Dict[str, Counter] = {}
    for loc, st in assignment.items():
        if loc in truth:
            votes.setdefault(st, Counter())[truth[loc]] += 1
    return {st: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0] for st, c in votes.items()}
