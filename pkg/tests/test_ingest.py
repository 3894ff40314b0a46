import io
import json
import logging

import numpy as np
import pytest

from gnssmap.errors import EmptyDatasetError, MalformedDataError, SchemaError
from gnssmap.geo import Footprint, GeoPoint, PlanarPoint, footprint_from_dict, local_to_geo
from gnssmap.ingest import (
    GEO_COLUMNS,
    PLANAR_COLUMNS,
    build_dataset,
    load_observations,
    parse_observations,
    summarize,
)

SQUARE = Footprint([(-5.0, 0.0), (5.0, 0.0), (5.0, 10.0), (-5.0, 10.0)], "sq")


def csv_lines(rows, columns=PLANAR_COLUMNS):
    return io.StringIO("\n".join([",".join(columns)] + [",".join(map(str, r)) for r in rows]) + "\n")


def planar_row(t=0, x=0.0, y=-10.0, alt=0.0, az=0.0, el=45.0, cn0=40.0, sat="G01", truth="open"):
    return [t, x, y, alt, az, el, "" if cn0 is None else cn0, sat, truth]


def test_parses_planar_rows_and_blocked_cells():
    log = parse_observations(csv_lines([planar_row(), planar_row(t=1, cn0=None, truth="closed")]))
    assert len(log) == 2 and not log.errors
    assert log[0].cn0 == 40.0 and not log[0].blocked
    assert log[1].blocked and log[1].truth_label == "closed"
    assert isinstance(log[0].receiver, PlanarPoint)


def test_truth_label_column_is_optional():
    cols = PLANAR_COLUMNS[:-1]
    log = parse_observations(csv_lines([planar_row()[:-1]], cols))
    assert log[0].truth_label is None


def test_missing_column_is_a_schema_error():
    cols = [c for c in PLANAR_COLUMNS if c != "cn0"]
    with pytest.raises(SchemaError, match="cn0"):
        parse_observations(csv_lines([], cols))


@pytest.mark.parametrize("bad", [
    dict(az=360.0), dict(az=-1.0), dict(el=90.5), dict(cn0=0.0), dict(cn0=80.0),
    dict(truth="maybe"), dict(x="nan"), dict(sat=""), dict(t=""),
])
def test_invalid_values_are_skipped_with_row_numbers(bad, caplog):
    rows = [planar_row(t=i) for i in range(20)]
    rows[4] = planar_row(**{"t": 4, **bad})
    with caplog.at_level(logging.WARNING):
        log = parse_observations(csv_lines(rows))
    assert len(log) == 19
    assert [e.row for e in log.errors] == [6]
    assert "row 6" in caplog.text


def test_more_than_ten_percent_malformed_aborts():
    rows = [planar_row(t=i) for i in range(9)] + [planar_row(t=9, az=400.0), planar_row(t=10, el=-3)]
    with pytest.raises(MalformedDataError) as exc:
        parse_observations(csv_lines(rows))
    assert len(exc.value.errors) == 2


def test_exactly_ten_percent_malformed_is_tolerated():
    rows = [planar_row(t=i) for i in range(9)] + [planar_row(t=9, az=400.0)]
    assert len(parse_observations(csv_lines(rows))) == 9


def test_short_rows_count_as_malformed():
    text = csv_lines([planar_row(t=i) for i in range(20)]).getvalue() + "5,1,2\n"
    log = parse_observations(io.StringIO(text))
    assert len(log.errors) == 1 and log.errors[0].message == "wrong number of fields"


def test_duplicates_are_counted_and_kept():
    log = parse_observations(csv_lines([planar_row(), planar_row(cn0=41.0), planar_row(t=1)]))
    assert len(log) == 3 and log.duplicates == 1


def test_geographic_rows_need_wgs84_footprint(tmp_path):
    fp = footprint_from_dict({"crs": "wgs84", "ring": [[-0.1200, 51.5], [-0.1198, 51.5],
                                                       [-0.1198, 51.5002], [-0.1200, 51.5002]]})
    rx = local_to_geo(PlanarPoint(0.0, -30.0, 1.0), fp.center)
    path = tmp_path / "obs.csv"
    path.write_text(csv_lines([[0, rx.lat, rx.lon, 1.0, 0.0, 30.0, 35.0, "G01", "open"]],
                              GEO_COLUMNS).getvalue())
    log = load_observations(path)
    assert isinstance(log[0].receiver, GeoPoint)
    ds = build_dataset(log, fp)
    assert len(ds) == 1
    # the footprint's southern edge sits about 11.1 m south of its centroid
    assert ds.height[0] == pytest.approx(1.0 + (30.0 - 11.12) * np.tan(np.radians(30.0)), abs=0.05)


def test_dataset_heights_and_blocked_cn0():
    rows = [planar_row(t=0, el=45.0), planar_row(t=1, el=30.0, cn0=None),
            planar_row(t=2, az=180.0), planar_row(t=3, el=5.0)]
    ds = build_dataset(parse_observations(csv_lines(rows)), SQUARE)
    assert len(ds) == 2
    assert ds.height[0] == 10.0
    assert np.isnan(ds.cn0[1]) and ds.blocked.tolist() == [False, True]
    assert ds.source_index.tolist() == [0, 1]
    assert ds.tuples[0] == (None, 40.0, 10.0) and ds.tuples[1][1] is None
    assert ds.provenance_counts == {"recorded": 3, "blocked": 1, "after_elevation_filter": 3,
                                    "inside_footprint": 0, "intersecting": 2}


def test_dem_altitude_override():
    rows = [planar_row(alt=57.0)]
    ds = build_dataset(parse_observations(csv_lines(rows)), SQUARE, dem_alt=3.0)
    assert ds.height[0] == 14.0


def test_receivers_inside_footprint_are_dropped(caplog):
    rows = [planar_row(), planar_row(t=1, x=0.0, y=5.0)]
    with caplog.at_level(logging.WARNING):
        ds = build_dataset(parse_observations(csv_lines(rows)), SQUARE)
    assert len(ds) == 1 and ds.provenance_counts["inside_footprint"] == 1
    assert "inside footprint" in caplog.text


def test_nothing_intersecting_is_an_error():
    with pytest.raises(EmptyDatasetError):
        build_dataset(parse_observations(csv_lines([planar_row(az=180.0)])), SQUARE)


def test_summary_counts():
    rows = [planar_row(t=0), planar_row(t=0, sat="G02", cn0=None), planar_row(t=1, az=180.0)]
    log = parse_observations(csv_lines(rows))
    ds = build_dataset(log, SQUARE)
    s = summarize(log, ds)
    assert s.to_dict() == {"epochs": 2, "recorded": 2, "blocked": 1, "total": 3, "intersecting": 2}


def test_footprint_json_written_by_simulate_is_loadable(tmp_path):
    doc = {"id": "x", "crs": "local-metres", "ring": [[0, 0], [4, 0], [4, 3], [0, 0]]}
    (tmp_path / "f.json").write_text(json.dumps(doc))
    fp = footprint_from_dict(json.loads((tmp_path / "f.json").read_text()))
    assert len(fp.ring) == 3
