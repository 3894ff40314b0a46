"""Seeded synthetic scenes with known building height.

Signals are sampled i.i.d. per epoch, labelled open or closed against the
true extruded footprint, and given a C/N0 drawn from the class-conditional
distribution.  Three effects degrade the labels the estimators see:
blocked (unreceived) closed signals, diffraction that makes closed signals
just below the roofline look open, and receiver position noise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .errors import ConfigError
from .geo import Footprint, PlanarPoint, footprint_from_dict, footprint_to_dict, ray_entries
from .ingest import PLANAR_COLUMNS, ObservationRecord

CN0_CEILING = 79.999
BASE_TIMESTAMP = 1_600_000_000.0
SITE_TIME_OFFSET = 100_000.0


@dataclass(frozen=True)
class SatelliteSampler:
    min_elevation: float = 5.0
    max_elevation: float = 88.0
    count_per_epoch: int = 30

    def __post_init__(self):
        if not 0.0 <= self.min_elevation < self.max_elevation <= 90.0:
            raise ConfigError("satellite elevations must satisfy 0 <= min < max <= 90")
        if self.count_per_epoch < 1:
            raise ConfigError("count_per_epoch must be >= 1")


@dataclass(frozen=True)
class SceneSpec:
    footprint: Footprint
    true_height: float
    receiver_sites: tuple
    epochs_per_site: int = 600
    satellite_sampler: SatelliteSampler = field(default_factory=SatelliteSampler)
    seed: int = 0

    def __post_init__(self):
        sites = tuple(p if isinstance(p, PlanarPoint) else PlanarPoint(*p) for p in self.receiver_sites)
        object.__setattr__(self, "receiver_sites", sites)
        if not self.true_height > 0:
            raise ConfigError("true_height must be positive")
        if not sites:
            raise ConfigError("scene needs at least one receiver site")
        if self.epochs_per_site < 1:
            raise ConfigError("epochs_per_site must be >= 1")
        for s in sites:
            if self.footprint.contains(s.x, s.y):
                raise ConfigError(f"receiver site ({s.x}, {s.y}) lies inside the footprint")

    @property
    def n_records(self):
        return len(self.receiver_sites) * self.epochs_per_site * self.satellite_sampler.count_per_epoch


@dataclass(frozen=True)
class SignalDistributionSpec:
    """Class-conditional C/N0 model and label-degrading effects.

    The Gaussian means and spreads and all effect magnitudes are tunable
    defaults, not measured values.  A non-zero ``elevation_gain`` tilts both
    class means with satellite elevation, which breaks
    class-conditional independence from intersection height on purpose.
    """

    open_mean: float = 40.0
    open_sd: float = 5.0
    closed_mean: float = 25.0
    closed_sd: float = 6.0
    blocked_prob_closed: float = 0.3
    receiver_floor: float = 10.0
    location_noise_sd: float = 1.0
    diffraction_band: float = 3.0
    diffraction_boost: float = 0.3
    elevation_gain: float = 0.0  # dB-Hz per degree of elevation about 45 deg

    def __post_init__(self):
        if not (self.open_sd > 0 and self.closed_sd > 0):
            raise ConfigError("C/N0 standard deviations must be positive")
        for name in ("blocked_prob_closed", "diffraction_boost"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not self.open_mean > self.closed_mean:
            raise ConfigError("open_mean must exceed closed_mean")
        if self.location_noise_sd < 0 or self.diffraction_band < 0:
            raise ConfigError("noise and diffraction band must be non-negative")
        if not 0.0 < self.receiver_floor < CN0_CEILING:
            raise ConfigError("receiver_floor must lie in (0, 80)")


@dataclass
class SyntheticDataset:
    records: list
    truth: dict
    site_index: np.ndarray
    true_intersection_height: np.ndarray


def _truncated_normal(u, mean, sd, lo, hi):
    return truncnorm.ppf(u, (lo - mean) / sd, (hi - mean) / sd, loc=mean, scale=sd)


def truth_open(intersection_height, true_height):
    """Open iff the ray misses the footprint (NaN) or clears the roof strictly."""
    h = np.asarray(intersection_height, dtype=float)
    return np.isnan(h) | (h > true_height)


def generate(scene, dist):
    """Draw a synthetic observation log; deterministic for a given seed."""
    rng = np.random.default_rng(scene.seed)
    sampler = scene.satellite_sampler
    n_sites = len(scene.receiver_sites)
    per_site = scene.epochs_per_site * sampler.count_per_epoch
    n = n_sites * per_site

    az = rng.uniform(0.0, 360.0, n)
    el = rng.uniform(sampler.min_elevation, sampler.max_elevation, n)
    u_diffraction = rng.random(n)
    u_blocked = rng.random(n)
    u_cn0 = rng.random(n)
    noise = rng.normal(0.0, 1.0, (n, 2)) * dist.location_noise_sd

    site_index = np.repeat(np.arange(n_sites), per_site)
    sites = np.array([(s.x, s.y, s.alt) for s in scene.receiver_sites])
    sx, sy, salt = sites[site_index, 0], sites[site_index, 1], sites[site_index, 2]
    el = np.minimum(el, np.nextafter(90.0, 0.0))

    _, h_true, _ = ray_entries(sx, sy, salt, az, el, scene.footprint)
    H = scene.true_height
    is_open = truth_open(h_true, H)
    closed = ~is_open

    diffracted = (closed & (dist.diffraction_band > 0) & (H - h_true <= dist.diffraction_band)
                  & (u_diffraction < dist.diffraction_boost))
    blocked = closed & ~diffracted & (u_blocked < dist.blocked_prob_closed)
    open_like = is_open | diffracted

    tilt = dist.elevation_gain * (el - 45.0)
    cn0 = np.where(
        open_like,
        _truncated_normal(u_cn0, dist.open_mean + tilt, dist.open_sd, dist.receiver_floor, CN0_CEILING),
        _truncated_normal(u_cn0, dist.closed_mean + tilt, dist.closed_sd, dist.receiver_floor,
                          CN0_CEILING),
    )

    rx = sx + noise[:, 0]
    ry = sy + noise[:, 1]
    epoch = np.tile(np.repeat(np.arange(scene.epochs_per_site), sampler.count_per_epoch), n_sites)
    stamp = BASE_TIMESTAMP + site_index * SITE_TIME_OFFSET + epoch
    sat = np.tile(np.arange(sampler.count_per_epoch), n_sites * scene.epochs_per_site)
    cn0 = np.clip(cn0, dist.receiver_floor, CN0_CEILING)

    records = [
        ObservationRecord(
            timestamp=float(stamp[i]),
            receiver=PlanarPoint(float(rx[i]), float(ry[i]), float(salt[i])),
            sat_azimuth=float(az[i]),
            sat_elevation=float(el[i]),
            cn0=None if blocked[i] else float(cn0[i]),
            sat_id=f"S{sat[i]:02d}",
            truth_label="open" if is_open[i] else "closed",
        )
        for i in range(n)
    ]
    return SyntheticDataset(records, {"height": H}, site_index, h_true)


def _fmt(v):
    return repr(float(v))


def export(dataset, path):
    """Write records in the planar observation CSV schema."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLANAR_COLUMNS)
        for r in dataset.records:
            rx = r.receiver
            w.writerow([
                _fmt(r.timestamp), _fmt(rx.x), _fmt(rx.y), _fmt(rx.alt),
                _fmt(r.sat_azimuth), _fmt(r.sat_elevation),
                "" if r.cn0 is None else _fmt(r.cn0),
                r.sat_id, r.truth_label or "",
            ])


def default_scene(seed=0, **overrides):
    """A 30 m square block with three receiver sites across the street."""
    fp = Footprint([(-15.0, -15.0), (15.0, -15.0), (15.0, 15.0), (-15.0, 15.0)], "block")
    kw = dict(
        footprint=fp,
        true_height=20.0,
        receiver_sites=((-30.0, 2.0, 1.0), (4.0, -32.0, 1.0), (28.0, 24.0, 1.0)),
        epochs_per_site=600,
        satellite_sampler=SatelliteSampler(),
        seed=seed,
    )
    kw.update(overrides)
    return SceneSpec(**kw)


def scene_to_dict(scene, dist):
    return {
        "footprint": footprint_to_dict(scene.footprint),
        "true_height": scene.true_height,
        "receiver_sites": [[s.x, s.y, s.alt] for s in scene.receiver_sites],
        "epochs_per_site": scene.epochs_per_site,
        "satellite_sampler": asdict(scene.satellite_sampler),
        "seed": scene.seed,
        "signal": asdict(dist),
    }


def scene_from_dict(doc):
    """Build ``(SceneSpec, SignalDistributionSpec)``; missing keys take defaults."""
    try:
        base = default_scene()
        fp = footprint_from_dict(doc["footprint"]) if "footprint" in doc else base.footprint
        scene = SceneSpec(
            footprint=fp,
            true_height=float(doc.get("true_height", base.true_height)),
            receiver_sites=tuple(tuple(map(float, s)) for s in doc.get(
                "receiver_sites", [[s.x, s.y, s.alt] for s in base.receiver_sites])),
            epochs_per_site=int(doc.get("epochs_per_site", base.epochs_per_site)),
            satellite_sampler=SatelliteSampler(**doc.get("satellite_sampler", {})),
            seed=int(doc.get("seed", 0)),
        )
        dist = SignalDistributionSpec(**doc.get("signal", {}))
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scene config: {exc}") from exc
    return scene, dist


def load_scene_config(path):
    return scene_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def robustness_signal(**overrides):
    """Overlapping classes with an elevation-dependent C/N0 tilt.

    Classes overlap to roughly 0.85 true-positive and 0.3 false-positive
    rates at the best fixed threshold, and the tilt gives the C/N0 a
    within-class dependence on intersection height, which a single-pass
    classifier absorbs into its threshold.
    """
    kw = dict(open_mean=35.0, open_sd=7.0, closed_mean=27.0, closed_sd=7.0,
              elevation_gain=0.08, diffraction_band=4.0, diffraction_boost=0.5)
    kw.update(overrides)
    return SignalDistributionSpec(**kw)
