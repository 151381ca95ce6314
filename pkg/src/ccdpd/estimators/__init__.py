"""Position-hypothesis cost functions: DPD, LOST, TARGET and ccDPD.

Every estimator follows the same two steps: :func:`build_context` does the
per-batch precomputation once, then :func:`evaluate_surface` (or the
per-variant ``*_cost`` functions) scores position hypotheses against it.
"""

from __future__ import annotations

from ..scenario import GridSpec, ScenarioConfig, grid_array, station_pairs
from ..synth import ReceivedBatch
from ..xcov import lagged_crosscov
from .ccdpd import CcdpdContext, ccdpd_cost, ccdpd_costs
from .common import (
    ORIENTATION,
    VARIANTS,
    CostSurface,
    EstimatorParams,
    Geometry,
    as_points,
    dpd_channels_for,
    evaluate_points,
    reference_params,
    resolve_params,
    surface_from,
)
from .dpd import DpdContext, build_dpd, dpd_channelize, dpd_cost, dpd_costs
from .lost import LostContext, build_lost, lost_build, lost_cost, lost_costs
from .target import TargetContext, build_target, target_cost, target_costs

# Extra lag coverage beyond the largest baseline, in samples.
LAG_GUARD_SAMPLES = 4

_COSTS = {"dpd": dpd_costs, "lost": lost_costs, "target": target_costs, "ccdpd": ccdpd_costs}


def pair_crosscovs(batch: ReceivedBatch, scenario: ScenarioConfig, oversample: int = 4, max_lag: float | None = None):
    """Lagged cross-covariances for every station pair ``i < j``."""
    if max_lag is None:
        max_lag = scenario.max_baseline_delay() + LAG_GUARD_SAMPLES / batch.sample_rate
    return {
        (i, j): lagged_crosscov(batch.samples[i], batch.samples[j], oversample, max_lag, batch.sample_rate, (i, j))
        for i, j in station_pairs(batch.num_stations)
    }


def build_context(variant: str, batch: ReceivedBatch, scenario: ScenarioConfig, params: EstimatorParams | None = None, cache: dict | None = None):
    """Precompute everything one estimator needs from a batch.

    ``cache`` lets TARGET and ccDPD share the pairwise cross-covariances when
    both run on the same batch.
    """
    params = resolve_params(params or EstimatorParams(variant), scenario)
    if params.variant != variant:
        raise ValueError(f"params are for {params.variant!r}, not {variant!r}")
    geo = Geometry.from_scenario(scenario)
    if variant == "dpd":
        return build_dpd(batch, geo, params.K, params.q, params.band)
    if variant == "lost":
        return build_lost(batch, geo, params.K, params.lost_signal_dim, params.lost_max_dim)
    cache = {} if cache is None else cache
    key = ("lcc", params.oversample)
    if key not in cache:
        cache[key] = pair_crosscovs(batch, scenario, params.oversample)
    if variant == "target":
        return build_target(batch, geo, params.q_t, cache[key])
    return CcdpdContext(geo, cache[key], params.n_m, params.ordering)


def costs(variant: str, ctx, points):
    return _COSTS[variant](as_points(points), ctx)


def evaluate_surface(variant: str, params, ctx, grid: GridSpec, threads: int = 1, points=None) -> CostSurface:
    """Cost at every grid point, in grid order.

    ``points`` may override the lattice (any ``(P, 2)`` array); the surface
    then follows that ordering.
    """
    pts = grid_array(grid) if points is None else as_points(points)
    fn = _COSTS[variant]
    values = evaluate_points(lambda chunk: fn(chunk, ctx), pts, threads)
    return surface_from(grid, values, variant, pts)


__all__ = [
    "ORIENTATION",
    "VARIANTS",
    "CcdpdContext",
    "CostSurface",
    "DpdContext",
    "EstimatorParams",
    "LostContext",
    "TargetContext",
    "build_context",
    "ccdpd_cost",
    "ccdpd_costs",
    "costs",
    "dpd_channelize",
    "dpd_channels_for",
    "dpd_cost",
    "dpd_costs",
    "evaluate_surface",
    "lost_build",
    "lost_cost",
    "lost_costs",
    "pair_crosscovs",
    "reference_params",
    "resolve_params",
    "target_cost",
    "target_costs",
]
