import io
import random
from zoneinfo import ZoneInfo

import pytest

from bss_expand.errors import DataError
from bss_expand.geo import BoundingRegion, GeoPoint, contains
from bss_expand.ingest import (
    RULE_DANGLING_REF,
    RULE_MISSING_COORDS,
    RULE_NULL_REF,
    RULE_OUTSIDE_REGION,
    RULE_UNREFERENCED,
    as_raw,
    clean,
    parse_text,
    parse_timestamp,
    read_audit,
    write_audit,
    write_locations,
    write_rentals,
    load_dataset,
)
from oracles import naive_clean

LOC_HDR = "location_id,latitude,longitude,is_fixed_station,station_name\n"
RENT_HDR = "rental_id,start_time,end_time,rental_location_id,return_location_id\n"
DUBLIN = BoundingRegion.dublin()


def loc_csv(rows):
    return LOC_HDR + "".join(",".join(map(str, r)) + "\n" for r in rows)


def rent_csv(rows):
    return RENT_HDR + "".join(",".join(map(str, r)) + "\n" for r in rows)


T0, T1 = "2020-06-01T08:30:00", "2020-06-01T08:50:00"


def test_empty_tables():
    p = parse_text(RENT_HDR, LOC_HDR)
    assert p.rentals == [] and p.locations == [] and p.rejects == []


def test_one_reject_for_bad_latitude():
    p = parse_text(
        rent_csv([("R1", T0, T1, "A", "B")]),
        loc_csv([("A", 53.35, -6.26, "true", "S"), ("B", "north", -6.26, "false", "")]),
    )
    assert len(p.rentals) == 1
    assert len(p.locations) == 1
    assert [(r.table, r.line) for r in p.rejects] == [("locations", 3)]


def test_malformed_rows_collected():
    rentals = rent_csv([("R1", T0, T1, "A", "A"), ("R2", "yesterday", T1, "A", "A"), ("R3", T1, T0, "A", "A")])
    rentals += "R4,only,three\n"
    locs = loc_csv([("A", 53.35, -6.26, "true", "S")]) + "B,53.3\n" + "C,53.3,-6.2,maybe,\n"
    p = parse_text(rentals, locs)
    assert [r.rental_id for r in p.rentals] == ["R1"]
    assert sorted((r.table, r.line) for r in p.rejects) == [
        ("locations", 3), ("locations", 4), ("rentals", 3), ("rentals", 4), ("rentals", 5),
    ]


def test_counted_fixture_line_scan():
    rng = random.Random(5)
    lines = []
    n_bad = 0
    for k in range(100):
        if rng.random() < 0.15:
            lines.append(f"L{k},not-a-number,-6.2,false,")
            n_bad += 1
        else:
            lines.append(f"L{k},{rng.uniform(53.2, 53.5)},{rng.uniform(-6.5, -6.0)},false,")
    text = LOC_HDR + "\n".join(lines) + "\n"
    p = parse_text(RENT_HDR, text)
    n_lines = sum(1 for _ in io.StringIO(text))
    assert len(p.locations) == n_lines - 1 - len(p.rejects)
    assert len(p.rejects) == n_bad


def test_missing_header_column_named():
    with pytest.raises(DataError, match="return_location_id"):
        parse_text("rental_id,start_time,end_time,rental_location_id\n", LOC_HDR)
    with pytest.raises(DataError, match="latitude"):
        parse_text(RENT_HDR, "location_id,longitude,is_fixed_station,station_name\n")


def test_duplicate_key_named():
    with pytest.raises(DataError, match="'A'"):
        parse_text(RENT_HDR, loc_csv([("A", 53.3, -6.2, "true", ""), ("A", 53.3, -6.2, "true", "")]))
    with pytest.raises(DataError, match="'R9'"):
        parse_text(rent_csv([("R9", T0, T1, "A", "A")] * 2), LOC_HDR)


def test_timestamp_zones():
    tz = ZoneInfo("Europe/Dublin")
    naive = parse_timestamp("2020-06-01T08:30:00", tz)
    assert naive.hour == 8 and naive.utcoffset().total_seconds() == 3600
    utc = parse_timestamp("2020-06-01T07:30:00Z", tz)
    assert utc == naive and utc.hour == 8
    assert parse_timestamp("2020-01-10 12:00:00", tz).utcoffset().total_seconds() == 0


def _dataset_one_outside():
    rentals = rent_csv([("R1", T0, T1, "S", "X"), ("R2", T0, T1, "X", "A"), ("R3", T0, T1, "S", "A")])
    locs = loc_csv([("S", 53.35, -6.26, "true", "Stn"), ("A", 53.36, -6.25, "false", ""), ("X", 52.0, -6.26, "false", "")])
    return parse_text(rentals, locs)


def test_out_of_region_location_and_its_rentals():
    p = _dataset_one_outside()
    ds = clean(p.rentals, p.locations, DUBLIN)
    audit = {(a.rule, a.table): a.rows_removed for a in ds.audit}
    assert audit[(RULE_OUTSIDE_REGION, "locations")] == 1
    assert audit[(RULE_OUTSIDE_REGION, "rentals")] == 2
    assert [r.rental_id for r in ds.rentals] == ["R3"]
    assert {loc.location_id for loc in ds.locations} == {"S", "A"}


def test_each_rule():
    rentals = rent_csv([
        ("R1", T0, T1, "S", "A"),
        ("R2", T0, T1, "S", "M"),   # missing coords
        ("R3", T0, T1, "S", ""),    # null ref
        ("R4", T0, T1, "GHOST", "B"),  # dangling; orphans B
    ])
    locs = loc_csv([
        ("S", 53.35, -6.26, "true", "Stn"),
        ("T", 53.34, -6.27, "true", "Unused station"),
        ("A", 53.36, -6.25, "false", ""),
        ("B", 53.37, -6.25, "false", ""),
        ("M", "", "", "false", ""),
        ("U", 53.30, -6.30, "false", ""),
    ])
    p = parse_text(rentals, locs)
    ds = clean(p.rentals, p.locations, DUBLIN)
    audit = {(a.rule, a.table): a.rows_removed for a in ds.audit}
    assert audit[(RULE_MISSING_COORDS, "locations")] == 1
    assert audit[(RULE_MISSING_COORDS, "rentals")] == 1
    assert audit[(RULE_NULL_REF, "rentals")] == 1
    assert audit[(RULE_DANGLING_REF, "rentals")] == 1
    assert audit[(RULE_UNREFERENCED, "locations")] == 2  # B and U
    assert {loc.location_id for loc in ds.locations} == {"S", "T", "A"}  # T kept: fixed station
    assert [r.rental_id for r in ds.rentals] == ["R1"]
    assert len(p.rentals) == len(ds.rentals) + ds.removed("rentals")
    assert len(p.locations) == len(ds.locations) + ds.removed("locations")


def test_no_fixed_station_survives():
    p = _dataset_one_outside()
    locs = [l for l in p.locations]
    locs = [type(l)(l.location_id, l.lat, l.lon, False, "") for l in locs]
    with pytest.raises(DataError, match="no fixed stations survive cleaning"):
        clean(p.rentals, locs, DUBLIN)


def _random_dirty(seed, n=500):
    rng = random.Random(seed)
    loc_rows = []
    for k in range(120):
        kind = rng.random()
        lid = f"L{k:03d}"
        fixed = k < 6 or rng.random() < 0.05
        if kind < 0.08:
            loc_rows.append((lid, "", "", str(fixed).lower(), ""))
        elif kind < 0.16:
            loc_rows.append((lid, rng.uniform(51, 52), rng.uniform(-6.5, -6.0), str(fixed).lower(), ""))
        else:
            loc_rows.append((lid, rng.uniform(53.2, 53.5), rng.uniform(-6.5, -6.0), str(fixed).lower(), ""))
    ids = [r[0] for r in loc_rows] + ["GONE1", "GONE2", ""]
    rent_rows = []
    for k in range(n):
        rent_rows.append((f"R{k:04d}", T0, T1, rng.choice(ids), rng.choice(ids)))
    return rent_csv(rent_rows), loc_csv(loc_rows)


@pytest.mark.parametrize("seed", range(5))
def test_clean_matches_naive_oracle(seed):
    rentals, locs = _random_dirty(seed)
    p = parse_text(rentals, locs)
    ds = clean(p.rentals, p.locations, DUBLIN)
    inside = lambda lat, lon: contains(DUBLIN, GeoPoint(lat, lon))
    want_r, want_l = naive_clean(
        [(r.rental_id, r.rental_location_id, r.return_location_id) for r in p.rentals],
        [(l.location_id, l.lat, l.lon, l.is_fixed_station) for l in p.locations],
        inside,
    )
    assert {r.rental_id for r in ds.rentals} == want_r
    assert {l.location_id for l in ds.locations} == want_l
    # referential closure, fixed stations aside
    used = {r.rental_location_id for r in ds.rentals} | {r.return_location_id for r in ds.rentals}
    present = {l.location_id for l in ds.locations}
    assert used <= present
    assert present - used <= {l.location_id for l in ds.fixed_stations}
    # idempotence
    again = clean(*as_raw(ds), DUBLIN)
    assert again.locations == ds.locations and again.rentals == ds.rentals
    assert all(a.rows_removed == 0 for a in again.audit)
    # monotonicity: input = output + removed
    assert len(p.rentals) == len(ds.rentals) + ds.removed("rentals")
    assert len(p.locations) == len(ds.locations) + ds.removed("locations")


def test_round_trip_files(tmp_path):
    rentals, locs = _random_dirty(9)
    p = parse_text(rentals, locs)
    ds = clean(p.rentals, p.locations, DUBLIN)
    write_locations(tmp_path / "l.csv", ds.locations)
    write_rentals(tmp_path / "r.csv", ds.rentals)
    write_audit(tmp_path / "a.csv", ds.audit, p.rejects)
    back = load_dataset(tmp_path / "r.csv", tmp_path / "l.csv", DUBLIN)
    assert back.locations == ds.locations
    assert back.rentals == ds.rentals
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "rule,rows_removed,table"
    assert {a.rule for a in read_audit(tmp_path / "a.csv")} >= {a.rule for a in ds.audit}
