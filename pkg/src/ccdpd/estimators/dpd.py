"""Channelized (wideband) DPD.

The record is cut into non-overlapping K-sample frames; the DFT of each frame
gives K narrowband channels, of which only those centred strictly inside the
occupied band ``|f| < B/2`` are kept (out-of-band bins hold nothing but
window leakage whose phase slope does not match the bin frequency). Per
channel the L stations are stacked into an LM-vector, a covariance is formed
over frames and its Q-dimensional signal subspace kept. A position
hypothesis is scored by the largest eigenvalue of

    D(p) = sum_k A_k(p)^H Psi_k Psi_k^H A_k(p)

with ``A_k(p)`` the LM x L block-diagonal matrix of steering vectors, each
rotated by the channel phase ``exp(-j w_k tau_l(p))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..synth import ReceivedBatch
from ..xcov import SubspacePair, signal_noise_split
from .common import Geometry


@dataclass(frozen=True)
class DpdContext:
    geometry: Geometry
    subspaces: tuple[SubspacePair, ...]
    channel_freqs: np.ndarray  # absolute RF frequency of each channel, Hz


def channel_covariances(batch: ReceivedBatch, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel ``LM x LM`` covariances ``(K, LM, LM)`` and baseband channel offsets."""
    L, M, N = batch.samples.shape
    F = N // K
    if F < 8:
        raise ValueError(f"too few frames: N={N} gives {F} frames of K={K} samples (need >= 8)")
    x = np.asarray(batch.samples[:, :, :F * K], dtype=complex).reshape(L * M, F, K)
    X = np.fft.fft(x, axis=-1)  # (LM, F, K)
    Y = np.moveaxis(X, -1, 0)  # (K, LM, F)
    R = Y @ np.conj(np.swapaxes(Y, -1, -2)) / F
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    return R, np.fft.fftfreq(K, 1.0 / batch.sample_rate)


def dpd_channelize(batch: ReceivedBatch, K: int, q: int, band: float | None = None) -> tuple[list[SubspacePair], np.ndarray]:
    """Signal subspaces of the in-band channels and their baseband offsets.

    ``band=None`` keeps every channel.
    """
    R, offsets = channel_covariances(batch, K)
    keep = np.ones(K, bool) if band is None else np.abs(offsets) < band / 2
    return [signal_noise_split(R[k], q) for k in np.flatnonzero(keep)], offsets[keep]


def build_dpd(batch: ReceivedBatch, geometry: Geometry, K: int, q: int, band: float | None = None) -> DpdContext:
    subspaces, offsets = dpd_channelize(batch, K, q, band)
    return DpdContext(geometry, tuple(subspaces), geometry.center_freq + offsets)


def dpd_costs(points: np.ndarray, ctx: DpdContext) -> np.ndarray:
    geo = ctx.geometry
    a = geo.steering(points)  # (L, P, M)
    tau = geo.delays(points)  # (L, P)
    L, P, M = a.shape
    D = np.zeros((P, L, L), dtype=complex)
    for sub, f_k in zip(ctx.subspaces, ctx.channel_freqs):
        psi = sub.signal.reshape(L, M, -1)
        G = np.einsum("lmq,lpm->pql", np.conj(psi), a)  # Psi^H A_k, before channel phase
        G = G * np.exp(-2j * np.pi * f_k * tau.T)[:, None, :]
        D += np.conj(np.swapaxes(G, -1, -2)) @ G
    return np.linalg.eigvalsh(D)[:, -1]


def dpd_cost(p, ctx: DpdContext) -> float:
    from .common import as_points

    return float(dpd_costs(as_points(p), ctx)[0])
