"""Peak extraction, error metrics, Monte Carlo trials and parameter sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .estimators import CostSurface, EstimatorParams, build_context, dpd_channels_for, evaluate_surface, resolve_params
from .scenario import Position, ScenarioConfig, derive_seed
from .synth import add_noise, synthesize_received

SWEEP_HEADER = ["estimator", "axis", "axis_value", "trials", "rmse_m", "mean_wall_s"]
SURFACE_HEADER = ["x_m", "y_m", "cost"]
DEFAULT_TRIALS = 20
DEFAULT_SNR_AXIS = tuple(float(v) for v in range(-20, 11, 5))


@dataclass(frozen=True)
class TrialResult:
    estimator: str
    estimates: np.ndarray  # (Q, 2)
    seed: int
    wall_time: float

    def positions(self) -> list[Position]:
        return [Position(float(x), float(y)) for x, y in self.estimates]


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    axis_value: float
    trials: int
    rmse_m: float
    mean_wall_s: float
    median_error_m: float


@dataclass
class SweepTable:
    axis: str
    rows: list[SweepRow] = field(default_factory=list)

    def lookup(self, estimator: str, value: float) -> SweepRow:
        for r in self.rows:
            if r.estimator == estimator and r.axis_value == value:
                return r
        raise KeyError((estimator, value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in self.rows:
            w.writerow([r.estimator, self.axis, repr(float(r.axis_value)), r.trials, repr(float(r.rmse_m)), repr(float(r.mean_wall_s))])
        return buf.getvalue()


def default_exclusion_radius(scenario: ScenarioConfig) -> float:
    """max(3 grid cells, a quarter of the closest source spacing)."""
    pts = scenario.source_positions()
    min_sep = 0.0
    if len(pts) > 1:
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        min_sep = float(d[np.triu_indices(len(pts), 1)].min())
    return max(3.0 * scenario.grid.spacing, 0.25 * min_sep)


def extract_minima(surface: CostSurface, Q: int, exclusion_radius: float) -> list[Position]:
    """Greedy best-first extrema with neighbourhood suppression.

    Follows the surface orientation (a maximized surface yields its peaks);
    ties are broken by grid order.
    """
    score = surface.score()
    order = np.argsort(score, kind="stable")
    alive = np.ones(len(score), bool)
    picked = []
    for idx in order:
        if not alive[idx]:
            continue
        p = surface.points[idx]
        picked.append(Position(float(p[0]), float(p[1])))
        if len(picked) == Q:
            return picked
        alive &= np.linalg.norm(surface.points - p, axis=1) > exclusion_radius
    raise ValueError(f"only {len(picked)} separable extrema for Q={Q} at radius {exclusion_radius} m")


def _as_xy(pts) -> np.ndarray:
    if len(pts) and isinstance(pts[0], Position):
        return np.array([p.as_array() for p in pts])
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def match_errors(estimates, truth) -> np.ndarray:
    """Per-source squared errors under the minimum-total-squared-distance matching."""
    est, tru = _as_xy(estimates), _as_xy(truth)
    if est.shape != tru.shape:
        raise ValueError(f"{len(est)} estimates for {len(tru)} sources")
    cost = np.sum((tru[:, None, :] - est[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols]


def rmse(estimates_per_trial, truth) -> float:
    """sqrt(mean over sources and trials of squared horizontal error), after matching."""
    sq = [match_errors(est, truth) for est in estimates_per_trial]
    if not sq:
        raise ValueError("no trials")
    return math.sqrt(float(np.mean(np.concatenate(sq))))


def brute_force_rmse(estimates_per_trial, truth) -> float:
    """Reference for :func:`rmse` by enumerating every matching (small Q only)."""
    tru = _as_xy(truth)
    total = 0.0
    for est in estimates_per_trial:
        est = _as_xy(est)
        total += min(
            sum(float(np.sum((tru[q] - est[perm[q]]) ** 2)) for q in range(len(tru)))
            for perm in itertools.permutations(range(len(tru)))
        )
    return math.sqrt(total / (len(tru) * len(estimates_per_trial)))


def trial_batch(scenario: ScenarioConfig, seed: int):
    return add_noise(synthesize_received(scenario, seed), scenario.snr_db, seed)


def run_trial(
    scenario: ScenarioConfig,
    params_list,
    seed: int,
    threads: int = 1,
    exclusion_radius: float | None = None,
    batch=None,
) -> dict[str, TrialResult]:
    """Synthesize one noisy batch and localize all sources with every estimator."""
    batch = trial_batch(scenario, seed) if batch is None else batch
    radius = default_exclusion_radius(scenario) if exclusion_radius is None else exclusion_radius
    Q = len(scenario.sources)
    cache: dict = {}
    out = {}
    for params in params_list:
        params = resolve_params(params, scenario)
        t0 = time.perf_counter()
        ctx = build_context(params.variant, batch, scenario, params, cache)
        surface = evaluate_surface(params.variant, params, ctx, scenario.grid, threads)
        est = extract_minima(surface, Q, radius)
        wall = time.perf_counter() - t0
        out[params.variant] = TrialResult(params.variant, _as_xy(est), seed, wall)
    return out


def scenario_for(scenario: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Scenario at one sweep point.

    The bandwidth axis sets every source to ``B = value`` and samples at
    ``f_s = 2B`` so the record keeps the same occupied fraction of the band.
    """
    if axis == "snr_db":
        return scenario.replace(snr_db=float(value))
    if axis == "bandwidth_hz":
        srcs = tuple(replace(s, bandwidth=float(value)) for s in scenario.sources)
        return scenario.replace(sources=srcs, sample_rate=2.0 * float(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def params_for(params: EstimatorParams, scenario: ScenarioConfig, axis: str) -> EstimatorParams:
    """Rescale bandwidth-dependent parameters: DPD channel count follows dtau_max * f_s."""
    if axis == "bandwidth_hz" and params.variant == "dpd":
        params = replace(params, K=dpd_channels_for(scenario), band=None)
    return resolve_params(params, scenario)


def run_sweep(
    scenario: ScenarioConfig,
    axis: str,
    values,
    trials: int = DEFAULT_TRIALS,
    params_list=None,
    seed: int = 1,
    threads: int = 1,
) -> SweepTable:
    """RMSE per estimator and axis value over ``trials`` paired-seed trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if params_list is None:
        params_list = [EstimatorParams(v) for v in ("dpd", "lost", "target", "ccdpd")]
    table = SweepTable(axis)
    for value in values:
        sc = scenario_for(scenario, axis, value)
        plist = [params_for(p, sc, axis) for p in params_list]
        truth = sc.source_positions()
        seeds = [int(derive_seed(seed, "trial", j).generate_state(1)[0]) for j in range(trials)]

        def one(s):
            return run_trial(sc, plist, s, threads=1)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, seeds))
        else:
            results = [one(s) for s in seeds]
        for p in plist:
            ests = [r[p.variant].estimates for r in results]
            errs = np.sqrt(np.concatenate([match_errors(e, truth) for e in ests]))
            table.rows.append(
                SweepRow(
                    p.variant,
                    float(value),
                    trials,
                    rmse(ests, truth),
                    float(np.mean([r[p.variant].wall_time for r in results])),
                    float(np.median(errs)),
                )
            )
    return table


def surface_to_csv(surface: CostSurface) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SURFACE_HEADER)
    for (x, y), v in zip(surface.points, surface.values):
        w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
