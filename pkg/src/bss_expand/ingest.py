"""Rental/Location table parsing and cleaning.

Parsing never drops a row silently: malformed rows land in ``rejects``.
Cleaning applies the removal rules in a fixed order and records how many
rows each rule removed, so ``input = output + audit + rejects`` always holds.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, Iterable, List, Optional, Tuple
from zoneinfo import ZoneInfo

from bss_expand.errors import DataError
from bss_expand.geo import BoundingRegion, GeoPoint, contains

LOCATION_COLUMNS = ("location_id", "latitude", "longitude", "is_fixed_station", "station_name")
RENTAL_COLUMNS = ("rental_id", "start_time", "end_time", "rental_location_id", "return_location_id")
AUDIT_COLUMNS = ("rule", "rows_removed", "table")

DEFAULT_TZ = "Europe/Dublin"

RULE_OUTSIDE_REGION = "outside_region"
RULE_MISSING_COORDS = "missing_coordinates"
RULE_NULL_REF = "null_location_id"
RULE_DANGLING_REF = "dangling_location_ref"
RULE_UNREFERENCED = "unreferenced_location"

_TRUE = {"true", "t", "1", "yes", "y"}
_FALSE = {"false", "f", "0", "no", "n", ""}


@dataclass(frozen=True)
class RawLocation:
    location_id: str
    lat: Optional[float]
    lon: Optional[float]
    is_fixed_station: bool
    station_name: str = ""


@dataclass(frozen=True)
class Location:
    location_id: str
    point: GeoPoint
    is_fixed_station: bool
    station_name: str = ""


@dataclass(frozen=True)
class Rental:
    rental_id: str
    start_time: datetime
    end_time: datetime
    rental_location_id: Optional[str]
    return_location_id: Optional[str]


@dataclass(frozen=True)
class Reject:
    table: str
    line: int
    reason: str


@dataclass(frozen=True)
class AuditEntry:
    rule: str
    rows_removed: int
    table: str


@dataclass
class ParsedTables:
    rentals: List[Rental]
    locations: List[RawLocation]
    rejects: List[Reject] = field(default_factory=list)


@dataclass(frozen=True)
class CleanedDataset:
    locations: Tuple[Location, ...]
    rentals: Tuple[Rental, ...]
    audit: Tuple[AuditEntry, ...] = ()

    @property
    def fixed_stations(self) -> Tuple[Location, ...]:
        return tuple(loc for loc in self.locations if loc.is_fixed_station)

    def location_index(self) -> Dict[str, Location]:
        return {loc.location_id: loc for loc in self.locations}

    def removed(self, table: str) -> int:
        return sum(a.rows_removed for a in self.audit if a.table == table)


def parse_timestamp(text: str, tz: ZoneInfo) -> datetime:
    """ISO 8601 to an aware datetime in ``tz``; naive input is taken as local."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=tz)
    return dt.astimezone(tz)


def format_timestamp(dt: datetime) -> str:
    return dt.isoformat()


def _opt_float(text: str) -> Optional[float]:
    s = text.strip()
    if s == "" or s.lower() in ("null", "none", "nan"):
        return None
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {s!r}")
    return v


def _opt_id(text: str) -> Optional[str]:
    s = text.strip()
    if s == "" or s.lower() in ("null", "none"):
        return None
    return s


def _parse_bool(text: str) -> bool:
    s = text.strip().lower()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _reader(stream, columns, table):
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    for col in columns:
        if col not in header:
            raise DataError(f"{table}: missing column {col!r}")
    return reader


def _bad_arity(row) -> bool:
    return None in row or any(v is None for v in row.values())


def parse_tables(rental_rows, location_rows, tz: str = DEFAULT_TZ) -> ParsedTables:
    """Parse the two CSV streams (file objects or iterables of lines)."""
    zone = ZoneInfo(tz)
    rejects: List[Reject] = []

    locations: List[RawLocation] = []
    seen_loc = set()
    reader = _reader(location_rows, LOCATION_COLUMNS, "locations")
    for line, row in enumerate(reader, start=2):
        if _bad_arity(row):
            rejects.append(Reject("locations", line, "wrong number of fields"))
            continue
        lid = row["location_id"].strip()
        if not lid:
            rejects.append(Reject("locations", line, "empty location_id"))
            continue
        if lid in seen_loc:
            raise DataError(f"locations: duplicate location_id {lid!r}")
        try:
            lat = _opt_float(row["latitude"])
            lon = _opt_float(row["longitude"])
            fixed = _parse_bool(row["is_fixed_station"])
        except ValueError as exc:
            rejects.append(Reject("locations", line, str(exc)))
            continue
        seen_loc.add(lid)
        locations.append(RawLocation(lid, lat, lon, fixed, row["station_name"].strip()))

    rentals: List[Rental] = []
    seen_rent = set()
    reader = _reader(rental_rows, RENTAL_COLUMNS, "rentals")
    for line, row in enumerate(reader, start=2):
        if _bad_arity(row):
            rejects.append(Reject("rentals", line, "wrong number of fields"))
            continue
        rid = row["rental_id"].strip()
        if not rid:
            rejects.append(Reject("rentals", line, "empty rental_id"))
            continue
        if rid in seen_rent:
            raise DataError(f"rentals: duplicate rental_id {rid!r}")
        try:
            start = parse_timestamp(row["start_time"], zone)
            end = parse_timestamp(row["end_time"], zone)
        except ValueError as exc:
            rejects.append(Reject("rentals", line, f"bad timestamp: {exc}"))
            continue
        if end < start:
            rejects.append(Reject("rentals", line, "end_time before start_time"))
            continue
        seen_rent.add(rid)
        rentals.append(
            Rental(rid, start, end, _opt_id(row["rental_location_id"]), _opt_id(row["return_location_id"]))
        )
    return ParsedTables(rentals, locations, rejects)


def _in_region(region: BoundingRegion, loc: RawLocation) -> bool:
    try:
        p = GeoPoint(loc.lat, loc.lon)
    except ValueError:
        return False
    return contains(region, p)


def clean(raw_rentals: Iterable[Rental], raw_locations: Iterable[RawLocation], region: BoundingRegion) -> CleanedDataset:
    rentals = list(raw_rentals)
    locations = list(raw_locations)
    audit: List[AuditEntry] = []

    def drop_rentals_touching(bad_ids):
        nonlocal rentals
        kept = [
            r for r in rentals if r.rental_location_id not in bad_ids and r.return_location_id not in bad_ids
        ]
        n = len(rentals) - len(kept)
        rentals = kept
        return n

    # (1) outside the region / off the land polygon
    has_coords = [loc for loc in locations if loc.lat is not None and loc.lon is not None]
    outside = {loc.location_id for loc in has_coords if not _in_region(region, loc)}
    locations = [loc for loc in locations if loc.location_id not in outside]
    audit.append(AuditEntry(RULE_OUTSIDE_REGION, len(outside), "locations"))
    audit.append(AuditEntry(RULE_OUTSIDE_REGION, drop_rentals_touching(outside), "rentals"))

    # (2) missing coordinates
    missing = {loc.location_id for loc in locations if loc.lat is None or loc.lon is None}
    locations = [loc for loc in locations if loc.location_id not in missing]
    audit.append(AuditEntry(RULE_MISSING_COORDS, len(missing), "locations"))
    audit.append(AuditEntry(RULE_MISSING_COORDS, drop_rentals_touching(missing), "rentals"))

    # (3) null location references
    n0 = len(rentals)
    rentals = [r for r in rentals if r.rental_location_id is not None and r.return_location_id is not None]
    audit.append(AuditEntry(RULE_NULL_REF, n0 - len(rentals), "rentals"))

    # (4)+(5) to a fixpoint; fixed stations never count as unreferenced
    dangling = 0
    unreferenced = 0
    while True:
        ids = {loc.location_id for loc in locations}
        n0 = len(rentals)
        rentals = [r for r in rentals if r.rental_location_id in ids and r.return_location_id in ids]
        dangling += n0 - len(rentals)
        used = {r.rental_location_id for r in rentals} | {r.return_location_id for r in rentals}
        n1 = len(locations)
        locations = [loc for loc in locations if loc.is_fixed_station or loc.location_id in used]
        unreferenced += n1 - len(locations)
        if len(rentals) == n0 and len(locations) == n1:
            break
    audit.append(AuditEntry(RULE_DANGLING_REF, dangling, "rentals"))
    audit.append(AuditEntry(RULE_UNREFERENCED, unreferenced, "locations"))

    out_locations = tuple(
        Location(loc.location_id, GeoPoint(loc.lat, loc.lon), loc.is_fixed_station, loc.station_name)
        for loc in locations
    )
    if not any(loc.is_fixed_station for loc in out_locations):
        raise DataError("no fixed stations survive cleaning")
    return CleanedDataset(out_locations, tuple(rentals), tuple(audit))


def as_raw(dataset: CleanedDataset) -> Tuple[List[Rental], List[RawLocation]]:
    """Cleaned rows back in parser form, for re-cleaning."""
    locs = [
        RawLocation(loc.location_id, loc.point.lat, loc.point.lon, loc.is_fixed_station, loc.station_name)
        for loc in dataset.locations
    ]
    return list(dataset.rentals), locs


# -- CSV I/O -----------------------------------------------------------------


def write_locations(path, locations: Iterable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOCATION_COLUMNS)
        for loc in locations:
            if isinstance(loc, Location):
                lat, lon = loc.point.lat, loc.point.lon
            else:
                lat, lon = loc.lat, loc.lon
            w.writerow([
                loc.location_id,
                "" if lat is None else repr(lat),
                "" if lon is None else repr(lon),
                "true" if loc.is_fixed_station else "false",
                loc.station_name,
            ])


def write_rentals(path, rentals: Iterable[Rental]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RENTAL_COLUMNS)
        for r in rentals:
            w.writerow([
                r.rental_id,
                format_timestamp(r.start_time),
                format_timestamp(r.end_time),
                r.rental_location_id or "",
                r.return_location_id or "",
            ])


def write_audit(path, audit: Iterable[AuditEntry], rejects: Iterable[Reject] = ()) -> None:
    rejects = list(rejects)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUDIT_COLUMNS)
        for table in ("locations", "rentals"):
            n = sum(1 for r in rejects if r.table == table)
            w.writerow(["malformed_row", n, table])
        for a in audit:
            w.writerow([a.rule, a.rows_removed, a.table])


def read_audit(path) -> Tuple[AuditEntry, ...]:
    with open(path, newline="", encoding="utf-8") as fh:
        return tuple(
            AuditEntry(row["rule"], int(row["rows_removed"]), row["table"])
            for row in csv.DictReader(fh)
        )


def parse_files(rentals_path, locations_path, tz: str = DEFAULT_TZ) -> ParsedTables:
    with open(rentals_path, newline="", encoding="utf-8") as rf, open(
        locations_path, newline="", encoding="utf-8"
    ) as lf:
        return parse_tables(rf, lf, tz=tz)


def load_dataset(rentals_path, locations_path, region: BoundingRegion, tz: str = DEFAULT_TZ) -> CleanedDataset:
    """Parse and clean two CSV files in one call."""
    parsed = parse_files(rentals_path, locations_path, tz=tz)
    if parsed.rejects:
        first = parsed.rejects[0]
        raise DataError(f"{len(parsed.rejects)} malformed rows, first at {first.table} line {first.line}: {first.reason}")
    return clean(parsed.rentals, parsed.locations, region)


def parse_text(rentals_csv: str, locations_csv: str, tz: str = DEFAULT_TZ) -> ParsedTables:
    return parse_tables(io.StringIO(rentals_csv), io.StringIO(locations_csv), tz=tz)
