"""Pipeline configuration: defaults < key=value file < BSS_* environment < flags."""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from bss_expand.community import LouvainConfig
from bss_expand.errors import ConfigError
from bss_expand.geo import BoundingRegion, load_land_polygon
from bss_expand.graph import DEFAULT_STRATEGY, STRATEGIES, Granularity
from bss_expand.synth import SynthConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "BSS_"


@dataclass
class PipelineConfig:
    locations: Optional[str] = None
    rentals: Optional[str] = None
    out_dir: str = "bss_out"
    min_lat: float = 53.2
    max_lat: float = 53.5
    min_lon: float = -6.5
    max_lon: float = -6.0
    land_polygon: Optional[str] = None
    timezone: str = "Europe/Dublin"
    absorption_radius: float = 50.0
    cluster_cut: float = 100.0
    proximity: float = 250.0
    granularities: Tuple[str, ...] = ("t_null", "t_day", "t_hour")
    strategy: Optional[str] = None
    strategy_t_null: str = DEFAULT_STRATEGY[Granularity.T_NULL]
    strategy_t_day: str = DEFAULT_STRATEGY[Granularity.T_DAY]
    strategy_t_hour: str = DEFAULT_STRATEGY[Granularity.T_HOUR]
    seed: int = 42
    resolution: float = 1.0
    min_gain: float = 1e-7
    max_passes: int = 20
    synth: bool = False
    synth_n_fixed: int = 92
    synth_n_hotspots: int = 160
    synth_n_communities: int = 4
    synth_n_trips: int = 62_000
    synth_pool_size: int = 31
    synth_crossing_prob: float = 0.05
    synth_noise_prob: float = 0.05
    synth_jitter_m: float = 25.0
    synth_site_spacing_m: float = 450.0
    synth_district_radius_m: float = 2_500.0
    synth_dirty_rate: float = 0.0
    synth_profiles: Tuple[str, ...] = ("commuter", "leisure")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("absorption_radius", "cluster_cut", "proximity"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.cluster_cut < self.absorption_radius:
            log.warning("cluster_cut (%s) is smaller than absorption_radius (%s)", self.cluster_cut, self.absorption_radius)
        try:
            gs = [Granularity.parse(g) for g in self.granularities]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not gs:
            raise ConfigError("at least one granularity is required")
        for s in [self.strategy, self.strategy_t_null, self.strategy_t_day, self.strategy_t_hour]:
            if s is not None and s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}; expected one of {STRATEGIES}")
        self.louvain()
        try:
            self.bounding_region(load_polygon=False)
        except ValueError as exc:
            raise ConfigError(f"region: {exc}") from None

    def granularity_list(self) -> List[Granularity]:
        wanted = {Granularity.parse(g) for g in self.granularities}
        return [g for g in Granularity if g in wanted]

    def strategy_for(self, g: Granularity) -> str:
        if self.strategy is not None:
            return self.strategy
        return getattr(self, f"strategy_{g.value}")

    def louvain(self) -> LouvainConfig:
        return LouvainConfig(self.seed, self.resolution, self.min_gain, self.max_passes)

    def bounding_region(self, load_polygon: bool = True) -> BoundingRegion:
        ring = None
        if load_polygon and self.land_polygon:
            try:
                ring = load_land_polygon(self.land_polygon)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"land polygon {self.land_polygon}: {exc}") from None
        return BoundingRegion(self.min_lat, self.max_lat, self.min_lon, self.max_lon, ring)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_fixed=self.synth_n_fixed,
            n_hotspots=self.synth_n_hotspots,
            n_communities=self.synth_n_communities,
            n_trips=self.synth_n_trips,
            pool_size=self.synth_pool_size,
            crossing_prob=self.synth_crossing_prob,
            noise_prob=self.synth_noise_prob,
            jitter_m=self.synth_jitter_m,
            site_spacing_m=self.synth_site_spacing_m,
            district_radius_m=self.synth_district_radius_m,
            dirty_rate=self.synth_dirty_rate,
            profiles=tuple(self.synth_profiles),
            region=self.bounding_region(load_polygon=False),
        )

    @property
    def out(self) -> Path:
        return Path(self.out_dir)


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _coerce(name: str, text):
    f = _FIELDS[name]
    default = f.default
    if not isinstance(text, str):
        return text
    s = text.strip()
    if isinstance(default, tuple):
        return tuple(x for x in s.replace(",", " ").split() if x)
    if isinstance(default, bool):
        low = s.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    if s == "" and default is None:
        return None
    try:
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}") from None
    return s


def parse_config_file(path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            name = k[len(ENV_PREFIX):].lower()
            if name in _FIELDS:
                out[name] = v
    return out


def build_config(
    config_path=None,
    overrides: Optional[Mapping[str, object]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> PipelineConfig:
    merged: Dict[str, object] = {}
    layers = []
    if config_path is not None:
        layers.append(parse_config_file(config_path))
    layers.append(env_overrides(environ))
    layers.append(dict(overrides or {}))
    for layer in layers:
        for k, v in layer.items():
            key = k.replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"unknown configuration key {k!r}")
            merged[key] = _coerce(key, v)
    try:
        return PipelineConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for k, v in dataclasses.asdict(cfg).items():
        if isinstance(v, (tuple, list)):
            v = ",".join(v)
        lines.append(f"{k}={'' if v is None else v}")
    return "\n".join(lines) + "\n"
