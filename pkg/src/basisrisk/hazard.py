"""Cat-in-a-circle hazard pipeline.

Track ingestion, great-circle trigger geometry, incident wind-speed
extraction, nonparametric bootstrap, and the S-shaped synthetic loss model
with scaled-Beta errors. Multi-site joint simulation uses counter-based RNG
substreams so results are reproducible and independent of evaluation order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import EARTH_RADIUS_KM, xtrack_min_distance
from .contracts import LossIndexSample
from .expectile import EmpiricalSample

logger = logging.getLogger(__name__)

__all__ = [
    "Track",
    "TrackSet",
    "Site",
    "LossModelParams",
    "min_distance_km",
    "incident_windspeeds",
    "storm_wind_convert",
    "bootstrap",
    "loss_mean",
    "loss_sigma",
    "simulate_losses",
    "simulate_portfolio",
    "storm_to_track_csv",
]

KNOTS_PER_MS = 1.943844
GUST_FACTOR_10MIN_TO_1MIN = 0.88


@dataclass(frozen=True)
class Track:
    track_id: str
    lat_deg: np.ndarray
    lon_deg: np.ndarray
    wind_kn: np.ndarray

    def __post_init__(self):
        lat = np.asarray(self.lat_deg, dtype=np.float64)
        lon = np.asarray(self.lon_deg, dtype=np.float64)
        wind = np.asarray(self.wind_kn, dtype=np.float64)
        if not (lat.size == lon.size == wind.size) or lat.size == 0:
            raise ValueError("track needs >= 1 aligned (lat, lon, wind) point")
        if np.any(np.abs(lat) > 90.0) or np.any(np.abs(lon) > 180.0):
            raise ValueError("coordinates out of range")
        if not np.all(np.isfinite(wind)) or np.any(wind < 0):
            raise ValueError("winds must be finite and non-negative")
        for a in (lat, lon, wind):
            a.setflags(write=False)
        object.__setattr__(self, "lat_deg", lat)
        object.__setattr__(self, "lon_deg", lon)
        object.__setattr__(self, "wind_kn", wind)

    def __len__(self):
        return self.lat_deg.size


class TrackSet:
    """Ordered collection of hurricane tracks."""

    def __init__(self, tracks):
        self.tracks = list(tracks)

    def __len__(self):
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks)

    @classmethod
    def from_csv(cls, path):
        """Read `track_id,step,lat_deg,lon_deg,wind_kn` rows (steps increasing)."""
        by_id: dict[str, list] = {}
        order: list[str] = []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "track_id,step,lat_deg,lon_deg,wind_kn":
                raise ValueError(f"unexpected track CSV header: {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                tid, step, lat, lon, wind = line.split(",")
                if tid not in by_id:
                    by_id[tid] = []
                    order.append(tid)
                by_id[tid].append((int(step), float(lat), float(lon), float(wind)))
        tracks = []
        for tid in order:
            rows = by_id[tid]
            steps = [r[0] for r in rows]
            if any(b <= a for a, b in zip(steps, steps[1:])):
                raise ValueError(f"steps must be strictly increasing in track {tid}")
            tracks.append(Track(tid,
                                np.array([r[1] for r in rows]),
                                np.array([r[2] for r in rows]),
                                np.array([r[3] for r in rows])))
        return cls(tracks)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("track_id,step,lat_deg,lon_deg,wind_kn\n")
            for tr in self.tracks:
                for i in range(len(tr)):
                    fh.write(f"{tr.track_id},{i},{float(tr.lat_deg[i])!r},"
                             f"{float(tr.lon_deg[i])!r},{float(tr.wind_kn[i])!r}\n")


@dataclass(frozen=True)
class Site:
    """Insured location with its trigger circle and payout threshold."""

    lat_deg: float
    lon_deg: float
    radius_km: float = 50.0
    trigger_threshold_kn: float = 83.0

    def __post_init__(self):
        if self.radius_km <= 0 or self.trigger_threshold_kn <= 0:
            raise ValueError("radius and threshold must be positive")


@dataclass(frozen=True)
class LossModelParams:
    """Parameters of the S-curve conditional loss model.

    mu(theta) = v (1 - e^{-rate(theta-offset)}) / (1 + steepness e^{-rate(theta-offset)})
    for theta >= offset, else 0; sigma = mu (1 - mu/v); the error is a Beta(p,q)
    variable rescaled to have mean zero while keeping S inside [0, v].
    """

    v: float = 100.0
    p: float = 3.0
    q: float = 3.0
    rate: float = 0.09
    offset: float = 64.0
    steepness: float = 150.0

    def __post_init__(self):
        if min(self.v, self.p, self.q) <= 0:
            raise ValueError("v, p, q must be positive")


def _unit_vectors(lat_deg, lon_deg):
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    return (np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat))


def min_distance_km(track: Track, site: Site) -> float:
    """Minimum great-circle distance from the site to the track polyline.

    Cross-track distance per geodesic segment, clamped to the nearer endpoint
    when the perpendicular foot falls outside the segment; spherical earth.
    """
    px, py, pz = _unit_vectors(site.lat_deg, site.lon_deg)
    vx, vy, vz = _unit_vectors(track.lat_deg, track.lon_deg)
    ang = xtrack_min_distance(float(px), float(py), float(pz),
                              np.ascontiguousarray(vx), np.ascontiguousarray(vy),
                              np.ascontiguousarray(vz))
    return float(ang) * EARTH_RADIUS_KM


def incident_windspeeds(tracks: TrackSet, site: Site) -> np.ndarray:
    """Per-incident maximum wind at the site's trigger circle.

    A track is an incident when its minimum distance is within the radius;
    the recorded wind is the maximum over the in-circle points plus one
    adjacent point on each side of every in-circle run.
    """
    out = []
    px, py, pz = _unit_vectors(site.lat_deg, site.lon_deg)
    limit = site.radius_km / EARTH_RADIUS_KM
    for tr in tracks:
        vx, vy, vz = _unit_vectors(tr.lat_deg, tr.lon_deg)
        ang = xtrack_min_distance(float(px), float(py), float(pz),
                                  np.ascontiguousarray(vx), np.ascontiguousarray(vy),
                                  np.ascontiguousarray(vz))
        if ang > limit:
            continue
        dots = np.clip(px * vx + py * vy + pz * vz, -1.0, 1.0)
        inside = np.arccos(dots) <= limit
        if not inside.any():
            # passes within the radius between sampled points; use the two
            # points bracketing the closest segment
            seg = int(np.argmin(np.arccos(dots)))
            sel = np.zeros(len(tr), dtype=bool)
            sel[max(seg - 1, 0):min(seg + 2, len(tr))] = True
        else:
            sel = inside.copy()
            idx = np.flatnonzero(inside)
            before = idx - 1
            after = idx + 1
            sel[before[before >= 0]] = True
            sel[after[after < len(tr)]] = True
        out.append(float(tr.wind_kn[sel].max()))
    return np.asarray(out, dtype=np.float64)


def storm_wind_convert(wind_10min_ms) -> np.ndarray | float:
    """10-minute sustained wind in m/s to 1-minute maximum in knots.

    Adapter configuration: divide by the 0.88 averaging-period factor, then
    convert m/s to knots.
    """
    w = np.asarray(wind_10min_ms, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("wind speeds must be non-negative")
    out = w / GUST_FACTOR_10MIN_TO_1MIN * KNOTS_PER_MS
    return float(out) if out.ndim == 0 else out


def _rng(seed: int, *spawn_key: int) -> np.random.Generator:
    """Counter-based generator; spawn_key selects an independent substream."""
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)))


def bootstrap(values, n: int, seed: int) -> EmpiricalSample:
    """n i.i.d. draws with replacement; deterministic given the seed."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty bootstrap source")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = _rng(seed, 0).integers(0, values.size, size=n)
    return EmpiricalSample(values[idx])


def loss_mean(thetas, params: LossModelParams) -> np.ndarray:
    """Conditional mean loss mu(theta); zero below the curve offset."""
    th = np.asarray(thetas, dtype=np.float64)
    e = np.exp(-params.rate * (th - params.offset))
    mu = params.v * (1.0 - e) / (1.0 + params.steepness * e)
    return np.where(th >= params.offset, mu, 0.0)


def loss_sigma(thetas, params: LossModelParams) -> np.ndarray:
    mu = loss_mean(thetas, params)
    return mu * (1.0 - mu / params.v)


def simulate_losses(windspeeds, params: LossModelParams, seed: int,
                    site_key: int = 0) -> LossIndexSample:
    """Losses S = mu(theta) + sigma(theta) * mean-zero scaled-Beta error.

    The error multiplier min{(p+q)/p, (p+q)/q} * Z - min{1, p/q} with
    Z ~ Beta(p, q) has expectation zero and keeps S inside [0, v].
    """
    th = np.asarray(windspeeds, dtype=np.float64)
    rng = _rng(seed, site_key, 1)
    z = rng.beta(params.p, params.q, size=th.size)
    scale = min((params.p + params.q) / params.p, (params.p + params.q) / params.q)
    shift = min(1.0, params.p / params.q)
    mu = loss_mean(th, params)
    sig = loss_sigma(th, params)
    s = mu + sig * (scale * z - shift)
    s = np.clip(s, 0.0, params.v)  # guards float roundoff at the edges
    return LossIndexSample(s, th)


def simulate_portfolio(tracks: TrackSet, sites, params_per_site, seed: int):
    """Joint per-track wind/loss realizations for several sites.

    Returns (wind_matrix, loss_matrix), one row per track and one column per
    site; wind is 0 when the track does not intersect the site's circle (the
    loss is then 0 too). Beta errors are drawn from independent per-site
    substreams, so adding or reordering sites never changes other columns.
    """
    sites = list(sites)
    params_per_site = list(params_per_site)
    if len(sites) < 2:
        raise ValueError("portfolio simulation needs >= 2 sites")
    if len(params_per_site) != len(sites):
        raise ValueError("one LossModelParams per site required")
    n_tracks = len(tracks)
    winds = np.zeros((n_tracks, len(sites)))
    losses = np.zeros((n_tracks, len(sites)))
    for j, (site, params) in enumerate(zip(sites, params_per_site)):
        px, py, pz = _unit_vectors(site.lat_deg, site.lon_deg)
        limit = site.radius_km / EARTH_RADIUS_KM
        col = np.zeros(n_tracks)
        for i, tr in enumerate(tracks):
            vx, vy, vz = _unit_vectors(tr.lat_deg, tr.lon_deg)
            ang = xtrack_min_distance(float(px), float(py), float(pz),
                                      np.ascontiguousarray(vx),
                                      np.ascontiguousarray(vy),
                                      np.ascontiguousarray(vz))
            if ang <= limit:
                sub = TrackSet([tr])
                w = incident_windspeeds(sub, site)
                col[i] = w[0] if w.size else 0.0
        winds[:, j] = col
        sample = simulate_losses(col, params, seed, site_key=j)
        losses[:, j] = np.where(col > 0.0, sample.losses, 0.0)
    return winds, losses


def storm_to_track_csv(storm_path, out_path):
    """Convert the public STORM text format to the track CSV.

    STORM rows are comma-separated: year, month, TC number, timestep, basin,
    lat, lon, min pressure (hPa), 10-min max sustained wind (m/s), then
    additional columns that are ignored here. Track identity is
    (year, month, TC number); winds are converted to 1-minute knots.
    """
    by_id: dict[str, list] = {}
    order: list[str] = []
    with open(storm_path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = [p.strip() for p in line.strip().split(",") if p.strip() != ""]
            if len(parts) < 9:
                continue
            year, month, tc, step = parts[0], parts[1], parts[2], parts[3]
            lat, lon, wind_ms = float(parts[5]), float(parts[6]), float(parts[8])
            tid = f"{year}-{month}-{tc}"
            if tid not in by_id:
                by_id[tid] = []
                order.append(tid)
            by_id[tid].append((int(float(step)), lat, lon,
                               storm_wind_convert(wind_ms)))
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("track_id,step,lat_deg,lon_deg,wind_kn\n")
        for tid in order:
            for step, lat, lon, wind in sorted(by_id[tid]):
                fh.write(f"{tid},{step},{lat!r},{lon!r},{wind!r}\n")
