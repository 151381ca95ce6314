from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..scenario import GridSpec, ScenarioConfig, grid_array, steering_matrix, tdoa_vector

VARIANTS = ("dpd", "lost", "target", "ccdpd")
ORIENTATION = {"dpd": "maximize", "lost": "minimize", "target": "minimize", "ccdpd": "minimize"}

# Reference stack depth at which the LOST eigenvector count L*M*Q was chosen.
LOST_REFERENCE_K = 35
LOST_DEFAULT_K = 8
CHUNK = 256


@dataclass(frozen=True)
class EstimatorParams:
    """Tuning knobs for one estimator; ``None`` fields are filled by :func:`resolve_params`.

    K is the DPD channel count or the LOST stack depth, ``n_m`` the ccDPD
    projector order, ``q_t`` the TARGET pseudo-inverse order and ``q`` the
    assumed number of sources (DPD signal subspace size). ``band`` is the
    occupied bandwidth DPD restricts its channels to.
    """

    variant: str
    K: int | None = None
    n_m: int = 2
    q_t: int | None = None
    q: int | None = None
    lost_signal_dim: int | None = None
    oversample: int = 4
    ordering: str = "algebraic"
    lost_max_dim: int = 1024
    band: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown estimator {self.variant!r}; expected one of {VARIANTS}")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.n_m < 0:
            raise ValueError("n_m must be >= 0")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")


def dpd_channels_for(scenario: ScenarioConfig) -> int:
    """Channel count covering the largest inter-station delay: ceil(dtau_max * f_s)."""
    return max(1, math.ceil(scenario.max_baseline_delay() * scenario.sample_rate - 1e-9))


def resolve_params(params: EstimatorParams, scenario: ScenarioConfig) -> EstimatorParams:
    L, M = scenario.num_stations, scenario.num_elements
    q = params.q if params.q is not None else max(1, len(scenario.sources))
    out = replace(params, q=q)
    if params.variant == "dpd":
        K = params.K if params.K is not None else dpd_channels_for(scenario)
        if q >= L * M:
            raise ValueError(f"DPD needs Q < LM, got Q={q}")
        band = params.band if params.band is not None else max((s.bandwidth for s in scenario.sources), default=None)
        out = replace(out, K=K, band=band)
    elif params.variant == "lost":
        K = params.K if params.K is not None else LOST_DEFAULT_K
        d = params.lost_signal_dim
        if d is None:
            d = max(1, round(L * M * q * K / LOST_REFERENCE_K))
            d = min(d, K * L * M - 1)
        if not 0 <= d <= K * L * M:
            raise ValueError(f"lost_signal_dim={d} outside [0, KLM={K * L * M}]")
        out = replace(out, K=K, lost_signal_dim=d)
    elif params.variant == "target":
        q_t = params.q_t if params.q_t is not None else M - 1
        if not 1 <= q_t < M:
            raise ValueError(f"q_t={q_t} must satisfy 1 <= q_t < M={M}")
        out = replace(out, q_t=q_t)
    elif params.variant == "ccdpd":
        if params.n_m >= L * M:
            raise ValueError(f"n_m={params.n_m} must be < LM={L * M}")
    return out


def reference_params(variant: str, scenario: ScenarioConfig, **overrides) -> EstimatorParams:
    return resolve_params(EstimatorParams(variant, **overrides), scenario)


@dataclass(frozen=True)
class Geometry:
    stations: tuple
    center_freq: float
    speed_of_light: float

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "Geometry":
        return cls(scenario.stations, scenario.center_freq, scenario.speed_of_light)

    def steering(self, points: np.ndarray) -> np.ndarray:
        """``(L, P, M)`` unit-norm steering vectors."""
        return np.stack([steering_matrix(s, points, self.center_freq, self.speed_of_light) for s in self.stations])

    def delays(self, points: np.ndarray) -> np.ndarray:
        """``(L, P)`` propagation delays."""
        c = np.array([[s.center.x, s.center.y] for s in self.stations])
        d = points[None, :, :] - c[:, None, :]
        return np.hypot(d[..., 0], d[..., 1]) / self.speed_of_light

    def tdoas(self, points: np.ndarray) -> np.ndarray:
        return tdoa_vector(points, self.stations, self.speed_of_light)


@dataclass(frozen=True)
class CostSurface:
    grid: GridSpec
    points: np.ndarray
    values: np.ndarray
    orientation: str
    estimator: str = ""

    def best_index(self) -> int:
        return int(np.argmax(self.values) if self.orientation == "maximize" else np.argmin(self.values))

    def score(self) -> np.ndarray:
        """Values mapped so that smaller is always better."""
        return -self.values if self.orientation == "maximize" else self.values


def as_points(points) -> np.ndarray:
    from ..scenario import Position

    if isinstance(points, Position):
        return points.as_array()[None, :]
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], Position):
        return np.array([p.as_array() for p in points])
    return np.atleast_2d(np.asarray(points, dtype=float))


def evaluate_points(costs_fn, points: np.ndarray, threads: int = 1) -> np.ndarray:
    """Evaluate a vectorised cost over fixed-size chunks, optionally on a thread pool.

    Chunk boundaries do not depend on ``threads`` so results are bitwise
    identical for any worker count.
    """
    chunks = [points[s:s + CHUNK] for s in range(0, len(points), CHUNK)]
    if threads <= 1 or len(chunks) == 1:
        parts = [costs_fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(costs_fn, chunks))
    return np.concatenate(parts) if parts else np.empty(0)


def surface_from(grid: GridSpec, values: np.ndarray, variant: str, points: np.ndarray | None = None) -> CostSurface:
    pts = grid_array(grid) if points is None else points
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{variant}: non-finite cost values")
    return CostSurface(grid, pts, values, ORIENTATION[variant], variant)
