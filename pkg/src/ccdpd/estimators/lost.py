"""LOST: space-time subspace fitting over K stacked time shifts.

Snapshots ``z(t) = [y(t); y(t+Ts); ...; y(t+(K-1)Ts)]`` give a KLM x KLM
covariance whose minor eigenvectors form ``Phi``. The reduced cost is

    J(p) = lambda_min{ (V^H V)^-1 V^H Phi Phi^H V },   V(p) = I_K kron A(p)

where ``A(p)`` is the LM x L block-diagonal steering matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..synth import ReceivedBatch
from .common import Geometry


@dataclass(frozen=True)
class LostContext:
    geometry: Geometry
    noise_basis: np.ndarray  # (KLM, KLM - d)
    K: int


def space_time_covariance(batch: ReceivedBatch, K: int) -> np.ndarray:
    L, M, N = batch.samples.shape
    T = N - K + 1
    y = np.asarray(batch.samples, dtype=complex).reshape(L * M, N)
    Z = np.concatenate([y[:, k:k + T] for k in range(K)], axis=0)
    R = Z @ Z.conj().T / T
    return 0.5 * (R + R.conj().T)


def lost_build(batch: ReceivedBatch, K: int, signal_dim: int, max_dim: int = 1024) -> np.ndarray:
    """Noise-subspace basis of the space-time covariance."""
    L, M, N = batch.samples.shape
    dim = K * L * M
    if dim > max_dim:
        raise ValueError(f"space-time dimension KLM={dim} exceeds the ceiling {max_dim}")
    if N - K + 1 < 1:
        raise ValueError("record shorter than the stack depth")
    if not 0 <= signal_dim <= dim:
        raise ValueError(f"signal dimension {signal_dim} outside [0, {dim}]")
    _, V = np.linalg.eigh(space_time_covariance(batch, K))
    # eigh is ascending: the first dim - signal_dim columns are the minor eigenvectors
    return V[:, :dim - signal_dim]


def build_lost(batch: ReceivedBatch, geometry: Geometry, K: int, signal_dim: int, max_dim: int = 1024) -> LostContext:
    return LostContext(geometry, lost_build(batch, K, signal_dim, max_dim), K)


def lost_costs(points: np.ndarray, ctx: LostContext) -> np.ndarray:
    a = ctx.geometry.steering(points)  # (L, P, M)
    L, P, M = a.shape
    K = ctx.K
    phi = ctx.noise_basis
    if phi.shape[1] == 0:
        return np.zeros(P)
    phi = phi.reshape(K, L, M, -1)
    W = np.einsum("klmd,lpm->pdkl", np.conj(phi), a).reshape(P, phi.shape[-1], K * L)
    G = np.conj(np.swapaxes(W, -1, -2)) @ W  # V^H Phi Phi^H V
    # V^H V is diagonal with entries |a_l|^2
    n = np.tile(np.sum(np.abs(a) ** 2, axis=-1).T, (1, K))  # (P, KL)
    s = 1.0 / np.sqrt(n)
    G = G * s[:, :, None] * s[:, None, :]
    return np.linalg.eigvalsh(G)[:, 0]


def lost_cost(p, ctx: LostContext) -> float:
    from .common import as_points

    return float(lost_costs(as_points(p), ctx)[0])
