"""Covariance estimation and the TDOA-compensated composite covariance.

Cross-covariance convention used throughout::

    R_ij(tau) = (1/N) sum_t r_i(t) r_j(t + tau)^H

so ``R_ij`` peaks at ``tau = tau_j - tau_i`` for a common source, and
``R_ji(-tau) = R_ij(tau)^H``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.fft import next_fast_len

# Relative threshold below which eigenvalues count as zero in rank counts.
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SampleCovariance:
    matrix: np.ndarray
    snapshots: int


@dataclass(frozen=True)
class SubspacePair:
    signal: np.ndarray
    noise: np.ndarray
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class LaggedCrossCov:
    """Cross-covariance of two stations on a uniform lag axis.

    ``values[k]`` is the ``M x M`` matrix at ``lags[k] = (k - half) * lag_step``.
    """

    pair: tuple[int, int]
    oversample: int
    lag_step: float
    values: np.ndarray

    @property
    def half(self) -> int:
        return (self.values.shape[0] - 1) // 2

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) * self.lag_step

    @property
    def max_lag(self) -> float:
        return self.half * self.lag_step

    def reversed(self) -> "LaggedCrossCov":
        """The (j, i) cross-covariance, via ``R_ji(-tau) = R_ij(tau)^H``."""
        vals = np.conj(np.swapaxes(self.values[::-1], -1, -2))
        return LaggedCrossCov((self.pair[1], self.pair[0]), self.oversample, self.lag_step, vals)


@dataclass(frozen=True)
class CompositeCovariance:
    matrix: np.ndarray
    tdoa: np.ndarray
    variant: str

    def to_json(self) -> str:
        """Debug dump: dimensions, hypothesis and eigenvalues."""
        ev = np.linalg.eigvalsh(self.matrix)[::-1]
        return json.dumps(
            {
                "dim": int(self.matrix.shape[0]),
                "variant": self.variant,
                "tdoa_s": [float(t) for t in np.ravel(self.tdoa)],
                "eigenvalues": [float(v) for v in ev],
            }
        )


def sample_autocov(r: np.ndarray) -> SampleCovariance:
    """``(1/N) sum_t r(t) r(t)^H`` for an ``M x N`` block of snapshots."""
    r = np.asarray(r)
    M, N = r.shape
    if N < M:
        raise ValueError(f"too few snapshots: N={N} < M={M}")
    r = r.astype(complex, copy=False)
    R = r @ r.conj().T / N
    return SampleCovariance(0.5 * (R + R.conj().T), N)


def _oversampled_spectrum(C: np.ndarray, factor: int) -> np.ndarray:
    """Zero-pad spectra along the last axis by ``factor`` (band-limited interpolation)."""
    n = C.shape[-1]
    if factor == 1:
        return C
    out = np.zeros(C.shape[:-1] + (n * factor,), dtype=complex)
    h = (n + 1) // 2
    out[..., :h] = C[..., :h]
    if n % 2 == 0:
        # split the Nyquist bin between both ends
        out[..., h] = 0.5 * C[..., h]
        out[..., -h] = 0.5 * C[..., h]
        out[..., -h + 1:] = C[..., h + 1:]
    else:
        out[..., -(n - h):] = C[..., h:]
    return out


def lagged_crosscov(
    r_i: np.ndarray,
    r_j: np.ndarray,
    oversample: int = 4,
    max_lag: float | None = None,
    sample_rate: float = 1.0,
    pair: tuple[int, int] = (0, 1),
) -> LaggedCrossCov:
    """All element-pair cross-correlations of two stations on a refined lag axis.

    Linear (zero-padded) correlation through the FFT, band-limited
    interpolation by spectral zero-padding to ``oversample`` lags per sample,
    normalized by N. ``max_lag`` (seconds) defaults to N/4 samples.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    r_i, r_j = np.asarray(r_i), np.asarray(r_j)
    if r_i.shape[-1] != r_j.shape[-1]:
        raise ValueError("stations must have the same number of samples")
    r_i, r_j = np.atleast_2d(r_i), np.atleast_2d(r_j)
    N = r_i.shape[-1]
    if max_lag is None:
        max_lag = N / 4 / sample_rate
    lag_samples = int(math.ceil(max_lag * sample_rate))
    half = int(math.ceil(max_lag * sample_rate * oversample))
    nfft = next_fast_len(N + lag_samples + 2)
    U = np.fft.fft(r_i, nfft)
    V = np.fft.fft(r_j, nfft)
    idx = np.arange(-half, half + 1) % (nfft * oversample)
    out = np.empty((2 * half + 1, r_i.shape[0], r_j.shape[0]), dtype=complex)
    for m in range(r_i.shape[0]):
        # w[k] = sum_t conj(r_i(t)) r_j(t + k / O); conjugate for our convention
        w = np.fft.ifft(_oversampled_spectrum(np.conj(U[m])[None, :] * V, oversample), axis=-1)
        out[:, m, :] = np.conj(w[:, idx].T) * (oversample / N)
    return LaggedCrossCov(tuple(pair), int(oversample), 1.0 / (oversample * sample_rate), out)


def crosscov_at(lcc: LaggedCrossCov, tau) -> np.ndarray:
    """Linear interpolation of the stored lags at ``tau`` (scalar or array).

    Returns ``M x M`` for a scalar, ``(..., M, M)`` for an array.
    """
    t = np.asarray(tau, dtype=float)
    pos = t / lcc.lag_step + lcc.half
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    n = lcc.values.shape[0]
    if np.any(pos < 0) or np.any(pos > n - 1) or not np.all(np.isfinite(pos)):
        raise ValueError(f"TDOA hypothesis outside the covered lag range +/-{lcc.max_lag:.4e} s")
    i0 = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = (pos - i0)[..., None, None]
    lo = lcc.values[i0]
    hi = lcc.values[i0 + 1]
    return np.where(frac == 0.0, lo, (1.0 - frac) * lo + frac * hi)


def build_composites(
    lccs: Mapping[tuple[int, int], LaggedCrossCov],
    autocovs: Sequence[np.ndarray] | None,
    tdoas: np.ndarray,
    variant: str = "modified",
) -> np.ndarray:
    """Stacked composite covariances for many TDOA hypotheses.

    ``tdoas`` is ``(P, L(L-1)/2)`` in station-pair order; the result is
    ``(P, LM, LM)``. ``variant="full"`` places the auto-covariances on the
    diagonal, ``"modified"`` leaves zero diagonal blocks.
    """
    if variant not in ("full", "modified"):
        raise ValueError(f"unknown composite variant {variant!r}")
    tdoas = np.atleast_2d(np.asarray(tdoas, dtype=float))
    pairs = sorted(lccs)
    L = max(j for _, j in pairs) + 1
    if tdoas.shape[-1] != len(pairs) or len(pairs) != L * (L - 1) // 2:
        raise ValueError(f"expected {L * (L - 1) // 2} TDOAs per hypothesis, got {tdoas.shape[-1]}")
    M = lccs[pairs[0]].values.shape[-1]
    P = tdoas.shape[0]
    out = np.zeros((P, L * M, L * M), dtype=complex)
    for k, (i, j) in enumerate(pairs):
        blk = crosscov_at(lccs[(i, j)], tdoas[:, k])
        out[:, i * M:(i + 1) * M, j * M:(j + 1) * M] = blk
        out[:, j * M:(j + 1) * M, i * M:(i + 1) * M] = np.conj(np.swapaxes(blk, -1, -2))
    if variant == "full":
        if autocovs is None:
            raise ValueError("full composite needs the station auto-covariances")
        for l, R in enumerate(autocovs):
            out[:, l * M:(l + 1) * M, l * M:(l + 1) * M] = R
    return out


def build_composite(lccs, autocovs, tdoa, variant: str = "modified") -> CompositeCovariance:
    tdoa = np.asarray(tdoa, dtype=float)
    return CompositeCovariance(build_composites(lccs, autocovs, tdoa[None, :], variant)[0], tdoa, variant)


def _check_hermitian(H: np.ndarray, tol: float):
    H = np.asarray(H)
    if H.shape[-1] != H.shape[-2]:
        raise ValueError("matrix is not square")
    err = np.linalg.norm(H - np.conj(np.swapaxes(H, -1, -2)), axis=(-2, -1))
    scale = np.maximum(np.linalg.norm(H, axis=(-2, -1)), np.finfo(float).tiny)
    if np.any(err > tol * scale):
        raise ValueError("matrix is not Hermitian within tolerance")


def herm_eig(H: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a Hermitian matrix (or stack), eigenvalues in descending order."""
    H = np.asarray(H)
    _check_hermitian(H, tol)
    w, V = np.linalg.eigh(H)
    return w[..., ::-1], V[..., ::-1]


def _dominant_vectors(H: np.ndarray, n: int, order: str) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    if order == "algebraic":
        return V[..., V.shape[-1] - n:]
    if order == "magnitude":
        idx = np.argsort(-np.abs(w), axis=-1, kind="stable")[..., :n]
        return np.take_along_axis(V, idx[..., None, :], axis=-1)
    raise ValueError(f"unknown eigenvalue ordering {order!r}")


def dominant_projector(R, n_m: int, order: str = "algebraic") -> np.ndarray:
    """Projector onto the ``n_m`` dominant eigenvectors.

    ``order="algebraic"`` takes the largest eigenvalues, ``"magnitude"`` the
    largest ``|lambda|``. ``n_m=0`` returns the zero matrix.
    """
    H = R.matrix if isinstance(R, CompositeCovariance) else np.asarray(R)
    dim = H.shape[-1]
    if not 0 <= n_m < dim:
        raise ValueError(f"projector order {n_m} outside [0, {dim})")
    if n_m == 0:
        return np.zeros_like(H)
    E = _dominant_vectors(H, n_m, order)
    return E @ np.conj(np.swapaxes(E, -1, -2))


def signal_noise_split(R: np.ndarray, q: int) -> SubspacePair:
    """Signal basis from the ``q`` largest eigenvalues, noise basis from the rest."""
    R = np.asarray(R)
    dim = R.shape[-1]
    if not 0 <= q < dim:
        raise ValueError(f"signal dimension {q} outside [0, {dim})")
    w, V = herm_eig(R)
    return SubspacePair(V[:, :q], V[:, q:], w)


def numerical_rank(eigenvalues: np.ndarray, scale: float) -> int:
    return int(np.sum(np.abs(eigenvalues) > RANK_TOL * scale))
