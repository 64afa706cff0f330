"""Dockless bike-share station expansion and trip-graph community analysis."""

from bss_expand.errors import ConfigError, DataError, InvariantError, PipelineError
from bss_expand.geo import BoundingRegion, GeoPoint, haversine_distance

__all__ = [
    "BoundingRegion",
    "ConfigError",
    "DataError",
    "GeoPoint",
    "InvariantError",
    "PipelineError",
    "haversine_distance",
]

__version__ = "0.1.0"
