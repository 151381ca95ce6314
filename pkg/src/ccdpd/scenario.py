"""Geometry, array response and experiment configuration.

Positions are planar (x, y) in meters; ``z`` is carried for completeness but
ignored by every computation. Station arrays are uniform circular arrays
whose response is modelled as a far-field plane wave at the carrier
frequency, while inter-station propagation delays are exact ranges over the
speed of light.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299792458.0

# Seed used to draw the random offsets of the default 3x4 source lattice.
DEFAULT_LAYOUT_SEED = 20190611


class ValidationError(ValueError):
    """A configuration violates one of its invariants."""


def derive_seed(master: int, tag: str, index: int = 0) -> np.random.SeedSequence:
    """Sub-stream seed for ``(master, tag, index)``.

    The tag is folded to an integer with CRC-32 and the triple is mixed by
    numpy's ``SeedSequence`` hash, so any sub-stream can be regenerated in
    isolation without touching the others.
    """
    return np.random.SeedSequence([int(master) & 0xFFFFFFFF, zlib.crc32(tag.encode()), int(index)])


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"position: {name}={v} is not finite")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class StationConfig:
    center: Position
    num_elements: int
    array_radius: float
    element_azimuths: tuple[float, ...] | None = None

    def __post_init__(self):
        M = int(self.num_elements)
        if M < 1:
            raise ValidationError(f"station: num_elements={M} must be >= 1")
        if not self.array_radius > 0:
            raise ValidationError(f"station: array_radius={self.array_radius} must be > 0")
        if self.element_azimuths is None:
            az = tuple(2.0 * math.pi * m / M for m in range(M))
        else:
            az = tuple(float(a) for a in self.element_azimuths)
        if len(az) != M:
            raise ValidationError(f"station: {len(az)} element azimuths for {M} elements")
        if any(a < 0.0 or a >= 2.0 * math.pi for a in az) or any(b <= a for a, b in zip(az, az[1:])):
            raise ValidationError("station: element azimuths must be strictly increasing in [0, 2*pi)")
        object.__setattr__(self, "num_elements", M)
        object.__setattr__(self, "array_radius", float(self.array_radius))
        object.__setattr__(self, "element_azimuths", az)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    spacing: float

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValidationError(f"grid: spacing={self.spacing} must be > 0")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValidationError("grid: empty extent (max < min)")

    @property
    def shape(self) -> tuple[int, int]:
        """(rows along y, columns along x)."""
        nx = int(math.floor((self.x_max - self.x_min) / self.spacing + 1e-9)) + 1
        ny = int(math.floor((self.y_max - self.y_min) / self.spacing + 1e-9)) + 1
        return ny, nx


@dataclass(frozen=True)
class SourceConfig:
    position: Position
    bandwidth: float
    attenuation: tuple[complex, ...] | None = None

    def gain(self, station_index: int) -> complex:
        if self.attenuation is None:
            return 1.0 + 0.0j
        return complex(self.attenuation[station_index])


@dataclass(frozen=True)
class ScenarioConfig:
    stations: tuple[StationConfig, ...]
    center_freq: float
    sample_rate: float
    duration: float
    sources: tuple[SourceConfig, ...]
    snr_db: float | None
    grid: GridSpec
    speed_of_light: float = SPEED_OF_LIGHT
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "sources", tuple(self.sources))
        L = len(self.stations)
        if L < 2:
            raise ValidationError(f"stations: L={L} must be >= 2")
        if len({s.num_elements for s in self.stations}) != 1:
            raise ValidationError("stations: all stations must have the same number of elements")
        if not self.center_freq > 0:
            raise ValidationError("f_o: center frequency must be > 0")
        if not self.sample_rate > 0:
            raise ValidationError("f_s: sample rate must be > 0")
        if self.duration * self.sample_rate < 1:
            raise ValidationError("duration: duration*f_s must be >= 1")
        for q, src in enumerate(self.sources):
            if not 0 < src.bandwidth <= self.sample_rate / 2:
                raise ValidationError(
                    f"bandwidth: source {q} B={src.bandwidth} outside (0, f_s/2={self.sample_rate / 2}]"
                )
            if src.attenuation is not None and len(src.attenuation) != L:
                raise ValidationError(f"attenuation: source {q} needs {L} per-station coefficients")
        if self.snr_db is not None and math.isnan(self.snr_db):
            raise ValidationError("snr_db: NaN")

    @property
    def num_stations(self) -> int:
        return len(self.stations)

    @property
    def num_elements(self) -> int:
        return self.stations[0].num_elements

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def wavelength(self) -> float:
        return self.speed_of_light / self.center_freq

    def source_positions(self) -> np.ndarray:
        return np.array([[s.position.x, s.position.y] for s in self.sources]).reshape(-1, 2)

    def station_centers(self) -> np.ndarray:
        return np.array([[s.center.x, s.center.y] for s in self.stations])

    def max_baseline_delay(self) -> float:
        """Largest inter-station range over c; bounds every |TDOA|."""
        c = self.station_centers()
        d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
        return float(d.max()) / self.speed_of_light

    def replace(self, **changes) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return scenario_to_dict(self)

    def digest(self) -> str:
        blob = json.dumps(scenario_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def station_pairs(L: int) -> list[tuple[int, int]]:
    """Station pairs in TDOA-vector order: (0,1), (0,2), ..., (L-2, L-1)."""
    return [(i, j) for i in range(L) for j in range(i + 1, L)]


def _xy(p) -> np.ndarray:
    if isinstance(p, Position):
        return p.as_array()
    return np.asarray(p, dtype=float)


def propagation_delay(station: StationConfig, p, c: float = SPEED_OF_LIGHT):
    """Range from the station center to ``p`` divided by ``c``.

    ``p`` may be a :class:`Position` or an ``(..., 2)`` array, in which case an
    array of delays is returned.
    """
    d = _xy(p) - station.center.as_array()
    r = np.hypot(d[..., 0], d[..., 1]) / c
    return float(r) if np.ndim(r) == 0 else r


def tdoa_vector(p, stations: Sequence[StationConfig], c: float = SPEED_OF_LIGHT):
    """TDOAs ``tau_j(p) - tau_i(p)`` for all pairs ``i < j`` in :func:`station_pairs` order.

    Returns a list for a single position, or an ``(P, L(L-1)/2)`` array for an
    ``(P, 2)`` array of positions.
    """
    if len(stations) < 2:
        raise ValidationError("tdoa_vector needs at least 2 stations")
    delays = [propagation_delay(s, p, c) for s in stations]
    out = [delays[j] - delays[i] for i, j in station_pairs(len(stations))]
    if isinstance(p, Position):
        return out
    return np.stack(out, axis=-1)


def steering_matrix(station: StationConfig, points, f_o: float, c: float = SPEED_OF_LIGHT) -> np.ndarray:
    """Unit-norm steering vectors for many positions, shape ``(P, M)``.

    Entry m is ``exp(+j*2*pi*(r/lam)*cos(theta - gamma_m)) / sqrt(M)`` with
    ``theta`` the azimuth of the point seen from the station center. A
    single-element station is an antenna at the station center, so its
    response is 1 for every position.
    """
    pts = np.atleast_2d(_xy(points))
    d = pts - station.center.as_array()
    if np.any(np.hypot(d[:, 0], d[:, 1]) == 0.0):
        raise ValueError("steering vector undefined: position coincides with a station center")
    theta = np.arctan2(d[:, 1], d[:, 0])
    gamma = np.asarray(station.element_azimuths)
    k_r = 2.0 * np.pi * station.array_radius * f_o / c
    M = station.num_elements
    if M == 1:
        return np.ones((len(pts), 1), dtype=complex)
    return np.exp(1j * k_r * np.cos(theta[:, None] - gamma[None, :])) / np.sqrt(M)


def steering_vector(station: StationConfig, p: Position, f_o: float, c: float = SPEED_OF_LIGHT) -> np.ndarray:
    return steering_matrix(station, p, f_o, c)[0]


def grid_points(grid: GridSpec) -> list[Position]:
    """Row-major lattice (x varies fastest) starting at the (x_min, y_min) corner."""
    return [Position(float(x), float(y)) for x, y in grid_array(grid)]


def grid_array(grid: GridSpec) -> np.ndarray:
    ny, nx = grid.shape
    if nx < 1 or ny < 1:
        raise ValidationError("grid: no grid points")
    xs = grid.x_min + grid.spacing * np.arange(nx)
    ys = grid.y_min + grid.spacing * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def triangle_stations(
    radius: float = 300.0,
    num_elements: int = 8,
    array_radius: float | None = None,
    f_o: float = 1.575e9,
    center: tuple[float, float] = (0.0, 0.0),
) -> tuple[StationConfig, ...]:
    """Three stations on an equilateral triangle of the given circumradius.

    Station 0 sits at the top (azimuth 90 deg), the others follow
    counter-clockwise at 120 deg steps. ``array_radius`` defaults to 1.5
    wavelengths at ``f_o``.
    """
    if array_radius is None:
        array_radius = 1.5 * SPEED_OF_LIGHT / f_o
    out = []
    for k in range(3):
        ang = math.pi / 2 + 2 * math.pi * k / 3
        c = Position(center[0] + radius * math.cos(ang), center[1] + radius * math.sin(ang))
        out.append(StationConfig(c, num_elements, array_radius))
    return tuple(out)


def lattice_sources(
    rows: int = 3,
    cols: int = 4,
    extent: tuple[float, float] = (400.0, 300.0),
    center: tuple[float, float] = (0.0, 0.0),
    bandwidth: float = 10e6,
    jitter: float = 0.25,
    seed: int = DEFAULT_LAYOUT_SEED,
) -> tuple[SourceConfig, ...]:
    """Sources at the cell centers of a ``rows x cols`` lattice with random offsets.

    The lattice spans ``extent`` (width, height) around ``center``; each source
    is displaced uniformly within +/- ``jitter`` of the lattice pitch per axis.
    """
    rng = np.random.default_rng(derive_seed(seed, "layout"))
    px, py = extent[0] / cols, extent[1] / rows
    out = []
    for r in range(rows):
        for k in range(cols):
            x = center[0] - extent[0] / 2 + (k + 0.5) * px + rng.uniform(-jitter, jitter) * px
            y = center[1] - extent[1] / 2 + (r + 0.5) * py + rng.uniform(-jitter, jitter) * py
            out.append(SourceConfig(Position(x, y), bandwidth))
    return tuple(out)


def default_scenario(seed: int = 1) -> ScenarioConfig:
    """The 3-station, 8-element, 12-source experiment at -5 dB."""
    f_o = 1.575e9
    return ScenarioConfig(
        stations=triangle_stations(300.0, 8, 1.5 * SPEED_OF_LIGHT / f_o, f_o),
        center_freq=f_o,
        sample_rate=20e6,
        duration=1e-3,
        sources=lattice_sources(),
        snr_db=-5.0,
        grid=GridSpec(-290.0, 290.0, -290.0, 290.0, 10.0),
        seed=seed,
    )


# ---------------------------------------------------------------- JSON schema


def _complex_pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    return {
        "stations": [
            {
                "x_m": s.center.x,
                "y_m": s.center.y,
                "num_elements": s.num_elements,
                "array_radius_m": s.array_radius,
                "element_azimuths_rad": list(s.element_azimuths),
            }
            for s in sc.stations
        ],
        "f_o_hz": sc.center_freq,
        "f_s_hz": sc.sample_rate,
        "duration_s": sc.duration,
        "sources": [
            {
                "x_m": s.position.x,
                "y_m": s.position.y,
                "bandwidth_hz": s.bandwidth,
                **({"attenuation": [_complex_pair(a) for a in s.attenuation]} if s.attenuation is not None else {}),
            }
            for s in sc.sources
        ],
        "snr_db": sc.snr_db,
        "grid": {
            "x_min_m": sc.grid.x_min,
            "x_max_m": sc.grid.x_max,
            "y_min_m": sc.grid.y_min,
            "y_max_m": sc.grid.y_max,
            "spacing_m": sc.grid.spacing,
        },
        "seed": sc.seed,
        "speed_of_light_mps": sc.speed_of_light,
    }


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ValidationError(f"{where}: missing key '{key}'")
    return d[key]


def _num(d: dict, key: str, where: str) -> float:
    v = _need(d, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def scenario_from_dict(doc: dict, defaults: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build a validated scenario; keys missing from ``doc`` come from ``defaults``."""
    if not isinstance(doc, dict):
        raise ValidationError("scenario: top-level JSON value must be an object")
    base = scenario_to_dict(defaults if defaults is not None else default_scenario())
    merged = {**base, **{k: v for k, v in doc.items() if k != "use_defaults"}}
    c = _num(merged, "speed_of_light_mps", "scenario")

    stations = []
    for i, s in enumerate(_need(merged, "stations", "scenario")):
        where = f"stations[{i}]"
        az = s.get("element_azimuths_rad")
        stations.append(
            StationConfig(
                Position(_num(s, "x_m", where), _num(s, "y_m", where)),
                int(_num(s, "num_elements", where)),
                _num(s, "array_radius_m", where),
                tuple(az) if az is not None else None,
            )
        )
    sources = []
    for q, s in enumerate(_need(merged, "sources", "scenario")):
        where = f"sources[{q}]"
        att = s.get("attenuation")
        if att is not None:
            att = tuple(complex(a[0], a[1]) for a in att)
        sources.append(SourceConfig(Position(_num(s, "x_m", where), _num(s, "y_m", where)), _num(s, "bandwidth_hz", where), att))
    g = _need(merged, "grid", "scenario")
    grid = GridSpec(
        _num(g, "x_min_m", "grid"), _num(g, "x_max_m", "grid"), _num(g, "y_min_m", "grid"),
        _num(g, "y_max_m", "grid"), _num(g, "spacing_m", "grid"),
    )
    snr = merged.get("snr_db")
    if isinstance(snr, str):
        if snr.strip().lower() not in ("inf", "+inf", "infinity"):
            raise ValidationError(f"snr_db: unrecognised value {snr!r}")
        snr = None
    elif snr is not None:
        snr = float(snr)
        if math.isinf(snr) and snr > 0:
            snr = None
    seed = merged.get("seed", 1)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValidationError(f"seed: expected an integer, got {seed!r}")
    return ScenarioConfig(
        stations=tuple(stations),
        center_freq=_num(merged, "f_o_hz", "scenario"),
        sample_rate=_num(merged, "f_s_hz", "scenario"),
        duration=_num(merged, "duration_s", "scenario"),
        sources=tuple(sources),
        snr_db=snr,
        grid=grid,
        speed_of_light=c,
        seed=seed,
    )
