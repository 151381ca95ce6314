"""Shared scenario builders and independent oracles for the test-suite.

Oracles here deliberately avoid the package's own code paths: plain loops,
explicit time-domain sums and hand geometry.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from ccdpd.scenario import GridSpec, Position, ScenarioConfig, SourceConfig, StationConfig, triangle_stations

C = 299792458.0
F_O = 1.575e9
F_S = 20e6
B = 10e6


def single_source(
    p: Position,
    duration: float = 0.5e-3,
    snr_db=None,
    grid: GridSpec | None = None,
    bandwidth: float = B,
    stations=None,
) -> ScenarioConfig:
    return ScenarioConfig(
        stations=tuple(stations) if stations is not None else triangle_stations(),
        center_freq=F_O,
        sample_rate=F_S,
        duration=duration,
        sources=(SourceConfig(p, bandwidth),),
        snr_db=snr_db,
        grid=grid if grid is not None else GridSpec(-300.0, 300.0, -300.0, 300.0, 10.0),
        seed=1,
    )


def multi_source(points, duration=0.5e-3, snr_db=None, grid=None) -> ScenarioConfig:
    return single_source(points[0], duration, snr_db, grid).replace(sources=tuple(SourceConfig(p, B) for p in points))


def steering_oracle(station: StationConfig, p: Position, f_o: float = F_O) -> np.ndarray:
    """Entry-by-entry evaluation of the UCA plane-wave response."""
    lam = C / f_o
    theta = math.atan2(p.y - station.center.y, p.x - station.center.x)
    M = station.num_elements
    az = station.element_azimuths or [2 * math.pi * m / M for m in range(M)]
    return np.array(
        [cmath.exp(1j * 2 * math.pi * station.array_radius / lam * math.cos(theta - g)) / math.sqrt(M) for g in az]
    )


def brute_xcorr(x: np.ndarray, y: np.ndarray, k: int) -> complex:
    """(1/N) sum_t x(t) conj(y(t+k)) with zero padding outside the record."""
    N = len(x)
    if k >= 0:
        return complex(np.sum(x[: N - k] * np.conj(y[k:])) / N)
    return complex(np.sum(x[-k:] * np.conj(y[: N + k])) / N)


def circular_shift_oracle(x: np.ndarray, k: int, f_o: float, f_s: float) -> np.ndarray:
    tau = k / f_s
    N = len(x)
    return np.array([x[(n - k) % N] for n in range(N)]) * cmath.exp(-2j * math.pi * f_o * tau)


def fractional_xcorr(x: np.ndarray, y: np.ndarray, tau: float, f_s: float) -> np.ndarray:
    """Direct fractional-lag cross-covariance via a phase ramp on ``y``.

    Returns ``(1/N) sum_t x(t) y(t+tau)^H`` with ``y(t+tau)`` formed by a
    circular spectral advance (no carrier term).
    """
    N = x.shape[-1]
    f = np.fft.fftfreq(N, 1.0 / f_s)
    y_adv = np.fft.ifft(np.fft.fft(y, axis=-1) * np.exp(2j * np.pi * f * tau), axis=-1)
    return x @ y_adv.conj().T / N


def planted_wells(grid_pts: np.ndarray, centers: np.ndarray, width: float, depths=None) -> np.ndarray:
    depths = np.ones(len(centers)) if depths is None else np.asarray(depths)
    v = np.ones(len(grid_pts))
    for c, d in zip(centers, depths):
        v -= d * np.exp(-np.sum((grid_pts - c) ** 2, axis=1) / (2 * width**2))
    return v


def stacked_steering(a_list, mask) -> np.ndarray:
    """``[m_1 a_1; m_2 a_2; ...]`` for a 0/1 mask per station."""
    return np.concatenate([mk * a for mk, a in zip(mask, a_list)])


def projector_residual(E: np.ndarray, v: np.ndarray) -> float:
    """Relative part of ``v`` outside the range of projector ``E``."""
    return float(np.linalg.norm(v - E @ v) / np.linalg.norm(v))


def haar_ccdpd_mean(a: np.ndarray, n_m: int, seed: int = 0) -> float:
    """Mean of det(I - A^H E A) for Haar-random rank-``n_m`` E, one draw per point.

    ``a`` is ``(L, P, M)`` unit-norm steering.
    """
    L, P, M = a.shape
    rng = np.random.default_rng(seed)
    out = []
    for k in range(P):
        X = rng.standard_normal((L * M, n_m)) + 1j * rng.standard_normal((L * M, n_m))
        E = np.linalg.qr(X)[0].reshape(L, M, n_m)
        W = np.einsum("lm,lmk->lk", a[:, k].conj(), E)
        out.append(np.linalg.det(np.eye(L) - W @ W.conj().T).real)
    return float(np.mean(out))
