"""TARGET: pairwise AOA-TDOA Rayleigh quotients.

For an ordered station pair (i, j) and the hypothesis TDOA ``tau``::

    G_ij = I - R_ii^+ C_ij R_jj^+ C_ij^H
    J_ij(p) = a_i^H G_ij a_i / a_i^H a_i

where ``C_ij`` is the cross-covariance block aligned at the hypothesis
(``R_ij(tau_ij(p))`` in this package's lag convention) and ``R_ii^+`` is the
pseudo-inverse restricted to the ``Q_T`` largest eigenpairs. The cost is the
mean over all ``L(L-1)`` ordered pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..synth import ReceivedBatch
from ..xcov import LaggedCrossCov, crosscov_at, herm_eig, sample_autocov
from .common import Geometry


@dataclass(frozen=True)
class TargetContext:
    geometry: Geometry
    pinvs: tuple[np.ndarray, ...]
    lccs: Mapping[tuple[int, int], LaggedCrossCov]


def truncated_pinv(R: np.ndarray, q_t: int) -> np.ndarray:
    """``Pi diag(1/sigma) Pi^H`` over the ``q_t`` largest eigenpairs."""
    w, V = herm_eig(R)
    w, V = w[:q_t], V[:, :q_t]
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("truncated pseudo-inverse needs positive leading eigenvalues")
    return (V / w) @ V.conj().T


def build_target(batch: ReceivedBatch, geometry: Geometry, q_t: int, lccs) -> TargetContext:
    pinvs = tuple(truncated_pinv(sample_autocov(r).matrix, q_t) for r in batch.samples)
    return TargetContext(geometry, pinvs, lccs)


def _aligned_block(ctx: TargetContext, i: int, j: int, tau_ij: np.ndarray) -> np.ndarray:
    if i < j:
        return crosscov_at(ctx.lccs[(i, j)], tau_ij)
    return np.conj(np.swapaxes(crosscov_at(ctx.lccs[(j, i)], -tau_ij), -1, -2))


def target_costs(points: np.ndarray, ctx: TargetContext) -> np.ndarray:
    geo = ctx.geometry
    a = geo.steering(points)  # (L, P, M)
    tau = geo.delays(points)  # (L, P)
    L, P, _ = a.shape
    total = np.zeros(P)
    for i in range(L):
        ai = a[i]
        w1 = ai @ ctx.pinvs[i].T  # R_ii^+ a_i
        norm = np.sum(np.abs(ai) ** 2, axis=-1)
        for j in range(L):
            if i == j:
                continue
            C = _aligned_block(ctx, i, j, tau[j] - tau[i])  # (P, M, M)
            w2 = np.einsum("pmn,pm->pn", np.conj(C), ai)  # C^H a_i
            w3 = w2 @ ctx.pinvs[j].T  # R_jj^+ C^H a_i
            v = np.einsum("pmn,pn->pm", C, w3)
            quad = np.real(np.einsum("pm,pm->p", np.conj(w1), v))
            total += (norm - quad) / norm
    return total / (L * (L - 1))


def target_cost(p, ctx: TargetContext) -> float:
    from .common import as_points

    return float(target_costs(as_points(p), ctx)[0])
