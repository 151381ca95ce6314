"""Cross-correlation DPD.

For a position hypothesis the TDOAs of all station pairs select one lag of
every pairwise cross-covariance. These blocks form the modified composite
covariance (zero diagonal blocks). Its ``n_m`` dominant eigenvectors span
``E`` and the hypothesis is scored by

    J(p) = det(A^H (I - E) A) / det(A^H A)

with ``A(p)`` the LM x L block-diagonal steering matrix. J is 0 when the
steering subspace lies inside ``E`` and 1 when it is orthogonal to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..xcov import LaggedCrossCov, _dominant_vectors, build_composites
from .common import Geometry


@dataclass(frozen=True)
class CcdpdContext:
    geometry: Geometry
    lccs: Mapping[tuple[int, int], LaggedCrossCov]
    n_m: int = 2
    ordering: str = "algebraic"


def ccdpd_costs(points: np.ndarray, ctx: CcdpdContext, n_m: int | None = None) -> np.ndarray:
    n_m = ctx.n_m if n_m is None else n_m
    geo = ctx.geometry
    a = geo.steering(points)  # (L, P, M)
    L, P, M = a.shape
    gram = np.sum(np.abs(a) ** 2, axis=-1).T  # diag of A^H A, (P, L)
    if n_m == 0:
        return np.ones(P)
    R = build_composites(ctx.lccs, None, geo.tdoas(points), "modified")
    E = _dominant_vectors(R, n_m, ctx.ordering).reshape(P, L, M, n_m)
    W = np.einsum("lpm,plmk->plk", np.conj(a), E)  # A^H e_k
    num = -W @ np.conj(np.swapaxes(W, -1, -2))
    idx = np.arange(L)
    num[:, idx, idx] += gram
    return np.real(np.linalg.det(num)) / np.prod(gram, axis=-1)


def ccdpd_cost(p, ctx: CcdpdContext, n_m: int | None = None) -> float:
    from .common import as_points

    return float(ccdpd_costs(as_points(p), ctx, n_m)[0])
