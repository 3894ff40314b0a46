"""Observation log parsing and per-building dataset assembly."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, GeometryError, MalformedDataError, SchemaError
from .geo import (
    DEFAULT_ELEVATION_BOUNDS,
    GeoPoint,
    PlanarPoint,
    elevation_filter,
    project_to_local,
    ray_entries,
)

logger = logging.getLogger(__name__)

GEO_COLUMNS = ("timestamp", "lat", "lon", "alt", "azimuth", "elevation", "cn0", "sat_id", "truth_label")
PLANAR_COLUMNS = ("timestamp", "x", "y", "alt", "azimuth", "elevation", "cn0", "sat_id", "truth_label")
TRUTH_LABELS = ("open", "closed")
MAX_MALFORMED_FRACTION = 0.10


@dataclass(frozen=True)
class ObservationRecord:
    timestamp: float
    receiver: GeoPoint | PlanarPoint
    sat_azimuth: float
    sat_elevation: float
    cn0: float | None
    sat_id: str
    truth_label: str | None = None

    @property
    def blocked(self):
        return self.cn0 is None


@dataclass(frozen=True)
class RowError:
    row: int
    message: str


class ObservationLog(list):
    """Records parsed from a CSV, with the rejected rows kept alongside."""

    def __init__(self, records=(), errors=(), duplicates=0):
        super().__init__(records)
        self.errors = list(errors)
        self.duplicates = duplicates


@dataclass
class BuildingDataset:
    """Footprint-intersecting observations of one building.

    ``cn0`` holds NaN for blocked signals; ``labels`` starts unset and is
    only filled by the estimators' working copies.
    """

    building_id: str
    cn0: np.ndarray
    height: np.ndarray
    source_index: np.ndarray
    provenance_counts: dict = field(default_factory=dict)
    labels: np.ndarray | None = None

    def __post_init__(self):
        if not (len(self.cn0) == len(self.height) == len(self.source_index)):
            raise ValueError("dataset arrays must have equal length")
        if not np.all(np.isfinite(self.height)):
            raise ValueError("dataset heights must be finite")

    def __len__(self):
        return len(self.height)

    @property
    def blocked(self):
        return np.isnan(self.cn0)

    @property
    def tuples(self):
        labels = self.labels if self.labels is not None else [None] * len(self)
        return [
            (None if y is None else int(y), None if math.isnan(s) else float(s), float(h))
            for y, s, h in zip(labels, self.cn0, self.height)
        ]


@dataclass(frozen=True)
class DatasetSummary:
    epochs: int
    recorded: int
    blocked: int
    total: int
    intersecting: int

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "recorded": self.recorded,
            "blocked": self.blocked,
            "total": self.total,
            "intersecting": self.intersecting,
        }


def _parse_row(row, planar):
    def num(key):
        raw = row[key].strip()
        if raw == "":
            raise ValueError(f"{key} is empty")
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"{key} is not finite")
        return v

    timestamp = num("timestamp")
    alt = num("alt")
    if planar:
        receiver = PlanarPoint(num("x"), num("y"), alt)
    else:
        receiver = GeoPoint(num("lat"), num("lon"), alt)
    azimuth = num("azimuth")
    if not 0.0 <= azimuth < 360.0:
        raise ValueError(f"azimuth {azimuth} outside [0, 360)")
    elevation = num("elevation")
    if not 0.0 <= elevation <= 90.0:
        raise ValueError(f"elevation {elevation} outside [0, 90]")
    raw_cn0 = row["cn0"].strip()
    cn0 = None
    if raw_cn0:
        cn0 = float(raw_cn0)
        if not 0.0 < cn0 < 80.0:
            raise ValueError(f"cn0 {cn0} outside (0, 80)")
    sat_id = row["sat_id"].strip()
    if not sat_id:
        raise ValueError("sat_id is empty")
    truth = (row.get("truth_label") or "").strip()
    if truth and truth not in TRUTH_LABELS:
        raise ValueError(f"truth_label {truth!r} not in {TRUTH_LABELS}")
    return ObservationRecord(timestamp, receiver, azimuth, elevation, cn0, sat_id, truth or None)


def parse_observations(lines, source="<input>"):
    """Parse CSV text lines into an :class:`ObservationLog`."""
    reader = csv.DictReader(lines)
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    planar = "x" in header and "lat" not in header
    required = [c for c in (PLANAR_COLUMNS if planar else GEO_COLUMNS) if c != "truth_label"]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{source}: missing required column(s) {', '.join(missing)}")

    records, errors = [], []
    for rownum, row in enumerate(reader, start=2):
        if None in row or any(row.get(c) is None for c in required):
            errors.append(RowError(rownum, "wrong number of fields"))
            continue
        try:
            records.append(_parse_row(row, planar))
        except (ValueError, GeometryError) as exc:
            errors.append(RowError(rownum, str(exc)))

    n_rows = len(records) + len(errors)
    if n_rows and len(errors) / n_rows > MAX_MALFORMED_FRACTION:
        raise MalformedDataError(
            f"{source}: {len(errors)} of {n_rows} rows malformed (first at row {errors[0].row}: "
            f"{errors[0].message})", errors)
    for err in errors:
        logger.warning("%s row %d skipped: %s", source, err.row, err.message)

    keys = Counter((r.timestamp, r.sat_id) for r in records)
    duplicates = sum(v - 1 for v in keys.values() if v > 1)
    if duplicates:
        logger.info("%s: %d duplicate (timestamp, sat_id) rows kept", source, duplicates)
    return ObservationLog(records, errors, duplicates)


def load_observations(path):
    """Read an observation CSV (``lat,lon`` or planar ``x,y`` variant)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_observations(fh, source=str(path))


def receiver_planar(record, center):
    rx = record.receiver
    if isinstance(rx, PlanarPoint):
        return rx
    if center is None:
        raise GeometryError("geographic receivers need a footprint with a WGS84 origin")
    return project_to_local(rx, center)


def build_dataset(records, fp, bounds=DEFAULT_ELEVATION_BOUNDS, dem_alt=None):
    """Reduce observations to (label, C/N0, intersection height) tuples.

    ``dem_alt`` replaces every receiver altitude with ``dem_alt + 1`` metres.
    Receivers inside the footprint are dropped with a warning.
    """
    lower, upper = bounds
    records = list(records)
    elevation_filter([], lower, upper)  # bounds validation only
    kept_idx = [i for i, r in enumerate(records) if lower <= r.sat_elevation <= upper]

    n = len(kept_idx)
    x = np.empty(n)
    y = np.empty(n)
    alt = np.empty(n)
    az = np.empty(n)
    el = np.empty(n)
    cn0 = np.empty(n)
    for j, i in enumerate(kept_idx):
        r = records[i]
        p = receiver_planar(r, fp.center)
        x[j], y[j] = p.x, p.y
        alt[j] = p.alt if dem_alt is None else dem_alt + 1.0
        az[j], el[j] = r.sat_azimuth, r.sat_elevation
        cn0[j] = np.nan if r.cn0 is None else r.cn0

    dist, height, inside = ray_entries(x, y, alt, az, el, fp)
    n_inside = int(np.count_nonzero(inside))
    if n_inside:
        logger.warning("%d observation(s) with receiver inside footprint %r discarded", n_inside, fp.id)
    hit = ~np.isnan(dist)
    if not np.any(hit):
        raise EmptyDatasetError(f"no observations intersect footprint {fp.id!r}")

    counts = {
        "recorded": sum(1 for r in records if r.cn0 is not None),
        "blocked": sum(1 for r in records if r.cn0 is None),
        "after_elevation_filter": n,
        "inside_footprint": n_inside,
        "intersecting": int(np.count_nonzero(hit)),
    }
    return BuildingDataset(
        building_id=fp.id,
        cn0=cn0[hit],
        height=height[hit],
        source_index=np.asarray(kept_idx, dtype=np.int64)[hit],
        provenance_counts=counts,
    )


def summarize(records, dataset=None):
    """Signal counts in the layout of a data-collection summary table."""
    records = list(records)
    blocked = sum(1 for r in records if r.cn0 is None)
    return DatasetSummary(
        epochs=len({r.timestamp for r in records}),
        recorded=len(records) - blocked,
        blocked=blocked,
        total=len(records),
        intersecting=0 if dataset is None else len(dataset),
    )
