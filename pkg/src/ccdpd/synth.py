"""Received-signal synthesis.

Each source emits unit-power complex white Gaussian noise confined to
``|f| <= B/2``. A station sees every source delayed by its propagation time
(circular fractional delay plus carrier phase), weighted by the path
attenuation and the array response, with additive white receiver noise.

Array response convention: each element has unit gain, i.e. a source
contributes ``sqrt(M) * a_l(p)`` where ``a_l`` is the unit-norm steering
vector. Per-element, per-source signal power is therefore 1 and the SNR is
simply ``1 / noise_var``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .scenario import ScenarioConfig, derive_seed, propagation_delay, steering_matrix

MAGIC = b"CCDP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQddd")


@dataclass(frozen=True)
class SourceSignal:
    samples: np.ndarray
    bandwidth: float
    sample_rate: float


@dataclass(frozen=True)
class ReceivedBatch:
    """Per-station element samples, ``samples[l]`` is ``M x N``."""

    samples: np.ndarray
    sample_rate: float
    center_freq: float
    duration: float
    scenario_hash: str | None = None
    noise_var: float = 0.0

    @property
    def num_stations(self) -> int:
        return self.samples.shape[0]

    @property
    def num_elements(self) -> int:
        return self.samples.shape[1]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[2]

    def scaled(self, factor: complex) -> "ReceivedBatch":
        return replace(self, samples=self.samples * factor)

    def quantized(self) -> "ReceivedBatch":
        """Round samples to complex64, i.e. exactly what the file format stores."""
        return replace(self, samples=self.samples.astype(np.complex64))


def gen_bandlimited_wgn(N: int, B: float, f_s: float, seed) -> SourceSignal:
    """Complex white Gaussian noise with a brick-wall spectrum over ``|f| <= B/2``.

    Spectral coefficients on in-band DFT bins are i.i.d. circular Gaussian,
    all other bins are zero. The waveform is scaled to unit mean power.
    """
    if not 0 < B <= f_s / 2:
        raise ValueError(f"bandwidth B={B} outside (0, f_s/2={f_s / 2}]")
    rng = np.random.default_rng(seed)
    freqs = np.fft.fftfreq(N, 1.0 / f_s)
    band = np.abs(freqs) <= B / 2
    spec = np.zeros(N, dtype=complex)
    n_in = int(band.sum())
    spec[band] = rng.standard_normal(n_in) + 1j * rng.standard_normal(n_in)
    x = np.fft.ifft(spec)
    x /= np.sqrt(np.mean(np.abs(x) ** 2))
    return SourceSignal(x, float(B), float(f_s))


def _delay_spectrum(spec: np.ndarray, tau: float, f_s: float, f_o: float) -> np.ndarray:
    freqs = np.fft.fftfreq(spec.shape[-1], 1.0 / f_s)
    return spec * np.exp(-2j * np.pi * freqs * tau) * np.exp(-2j * np.pi * f_o * tau)


def apply_delay(sig, tau: float, f_s: float, f_o: float) -> np.ndarray:
    """Circular fractional delay by ``tau`` seconds including the carrier phase ``exp(-j2*pi*f_o*tau)``."""
    x = sig.samples if isinstance(sig, SourceSignal) else np.asarray(sig)
    N = x.shape[-1]
    if abs(tau) >= N / f_s / 4:
        raise ValueError(f"delay {tau:.3e} s too large for a {N / f_s:.3e} s record")
    if tau == 0:
        return x.copy()
    return np.fft.ifft(_delay_spectrum(np.fft.fft(x), tau, f_s, f_o))


def source_waveforms(scenario: ScenarioConfig, seed: int) -> list[SourceSignal]:
    N = scenario.num_samples
    return [
        gen_bandlimited_wgn(N, src.bandwidth, scenario.sample_rate, derive_seed(seed, "source", q))
        for q, src in enumerate(scenario.sources)
    ]


def synthesize_received(scenario: ScenarioConfig, seed: int) -> ReceivedBatch:
    """Noiseless received samples for every station."""
    L, M, N = scenario.num_stations, scenario.num_elements, scenario.num_samples
    f_s, f_o, c = scenario.sample_rate, scenario.center_freq, scenario.speed_of_light
    out = np.zeros((L, M, N), dtype=complex)
    for q, (src, sig) in enumerate(zip(scenario.sources, source_waveforms(scenario, seed))):
        for l, st in enumerate(scenario.stations):
            delayed = apply_delay(sig, propagation_delay(st, src.position, c), f_s, f_o)
            a = steering_matrix(st, src.position, f_o, c)[0] * math.sqrt(M)
            out[l] += src.gain(l) * a[:, None] * delayed[None, :]
    return ReceivedBatch(out, f_s, f_o, scenario.duration, scenario.digest(), 0.0)


def add_noise(batch: ReceivedBatch, snr_db: float | None, seed: int) -> ReceivedBatch:
    """Add circular white noise of variance ``10**(-snr_db/10)`` per element.

    ``snr_db=None`` or ``+inf`` leaves the batch untouched.
    """
    if snr_db is None or (math.isinf(snr_db) and snr_db > 0):
        return batch
    var = 10.0 ** (-snr_db / 10.0)
    L, M, N = batch.samples.shape
    noisy = batch.samples.astype(complex, copy=True)
    for l in range(L):
        rng = np.random.default_rng(derive_seed(seed, "noise", l))
        noisy[l] += math.sqrt(var / 2) * (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N)))
    return replace(batch, samples=noisy, noise_var=batch.noise_var + var)


def simulate(scenario: ScenarioConfig, seed: int | None = None) -> ReceivedBatch:
    """Synthesis followed by noise at the scenario SNR."""
    seed = scenario.seed if seed is None else seed
    return add_noise(synthesize_received(scenario, seed), scenario.snr_db, seed)


# ---------------------------------------------------------------- file format


def write_batch(path, batch: ReceivedBatch) -> None:
    """Write the little-endian CCDP container (complex samples stored as float32 pairs)."""
    L, M, N = batch.samples.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, L, M, N, batch.sample_rate, batch.center_freq, batch.noise_var)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(batch.samples, dtype="<c8").tobytes())


def read_batch(path) -> ReceivedBatch:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, L, M, N, f_s, f_o, noise_var = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * L * M * N
    if len(data) != expected:
        raise ValueError(f"{path}: size {len(data)} does not match header ({expected} bytes)")
    samples = np.frombuffer(data, dtype="<c8", offset=_HEADER.size).reshape(L, M, N).astype(np.complex64)
    return ReceivedBatch(samples, f_s, f_o, N / f_s, None, noise_var)
