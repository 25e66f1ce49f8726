"""Baseband signal generation, FIR filtering, and the NMSE/ACPR figures of merit.

All quantities are dimensionless baseband amplitudes on a uniform sample grid.
A single dB floor (DB_FLOOR) stands in for -inf so CSV reports stay finite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DB_FLOOR = -200.0

_CSIG_MAGIC = b"CSIG"
_CSIG_VERSION = 1


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband sequence."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("signal must be a non-empty 1-D sequence")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.abs(self.samples) ** 2)))

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> "ComplexSignal":
        return ComplexSignal(samples, self.sample_rate_hz)

    def scaled_to_rms(self, target_rms: float) -> "ComplexSignal":
        rms = self.rms
        if rms == 0.0:
            raise ValueError("cannot rescale an all-zero signal")
        return self.with_samples(self.samples * (target_rms / rms))


@dataclass(frozen=True)
class FirFilter:
    """Real-tap FIR filter, applied as a causal convolution."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("filter needs at least one tap")
        object.__setattr__(self, "taps", taps)

    def __len__(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class SpectrumConfig:
    """Welch PSD estimation parameters used by the spectral metrics."""

    fft_size: int = 4096
    segment_overlap: float = 0.5
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n < 64 or n & (n - 1) != 0:
            raise ValueError("fft_size must be a power of two >= 64")
        if not 0.0 <= self.segment_overlap < 1.0:
            raise ValueError("segment_overlap must lie in [0, 1)")
        if self.window not in ("rectangular", "hann"):
            raise ValueError(f"unknown window {self.window!r}")


# Occupied fraction of the nominal bandwidth and the width of the raised-cosine
# edge taper, mimicking OFDM guard carriers. Without the guard, window mainlobe
# spill from brick-wall edge bins floors every adjacent-channel measurement.
_BAND_OCCUPANCY = 0.95
_EDGE_TAPER = 0.10


def generate_multicarrier(num_samples: int, bandwidth_hz: float, sample_rate_hz: float,
                          seed: int, target_rms: float = 1.0) -> ComplexSignal:
    """Seeded band-limited multicarrier test signal.

    Independent complex Gaussian amplitudes are drawn on the FFT bins inside
    +-bandwidth/2 (with a small guard and a raised-cosine edge taper, as OFDM
    guard carriers would leave) and transformed to the time domain, giving
    OFDM-like amplitude statistics without any framing. The result is
    normalized to ``target_rms``.
    """
    if num_samples < 16:
        raise ValueError("num_samples must be at least 16")
    if not 0.0 < bandwidth_hz < sample_rate_hz:
        raise ValueError("bandwidth must satisfy 0 < bandwidth < sample_rate")
    rng = np.random.default_rng(seed)
    freqs = np.fft.fftfreq(num_samples, d=1.0 / sample_rate_hz)
    f_edge = _BAND_OCCUPANCY * bandwidth_hz / 2.0
    f_flat = (1.0 - _EDGE_TAPER) * f_edge
    mag = np.abs(freqs)
    weight = np.zeros(num_samples)
    weight[mag <= f_flat] = 1.0
    ramp = (mag > f_flat) & (mag <= f_edge)
    weight[ramp] = 0.5 * (1.0 + np.cos(np.pi * (mag[ramp] - f_flat) / (f_edge - f_flat)))
    occupied = weight > 0.0
    count = int(np.count_nonzero(occupied))
    spectrum = np.zeros(num_samples, dtype=np.complex128)
    spectrum[occupied] = weight[occupied] * (rng.normal(size=count) + 1j * rng.normal(size=count))
    samples = np.fft.ifft(spectrum)
    return ComplexSignal(samples, sample_rate_hz).scaled_to_rms(target_rms)


def fir_apply(x: ComplexSignal, f: FirFilter) -> ComplexSignal:
    """Causal FIR convolution; output has the input's length (tail dropped)."""
    out = np.convolve(x.samples, f.taps)[: len(x)]
    return x.with_samples(out)


def fir_apply_real(x: np.ndarray, f: FirFilter) -> np.ndarray:
    """Same causal convolution on a bare real-valued array (branch signals)."""
    x = np.asarray(x, dtype=np.float64)
    return np.convolve(x, f.taps)[: x.size]


def nmse_db(y: ComplexSignal, u: ComplexSignal, align_gain: bool = True,
            floor_db: float = DB_FLOOR) -> float:
    """Normalized mean-square error of y against the reference u, in dB.

    With ``align_gain`` (default) y is first scaled by the complex least-squares
    scalar that best maps it onto u, so a pure complex gain does not count as
    error. A zero-error result is clamped to ``floor_db``.
    """
    ys = y.samples
    us = u.samples
    if ys.size != us.size:
        raise ValueError(f"length mismatch: {ys.size} vs {us.size}")
    ref_power = np.sum(np.abs(us) ** 2)
    if ref_power == 0.0:
        raise ValueError("reference signal has zero power")
    if align_gain:
        denom = np.sum(np.abs(ys) ** 2)
        if denom == 0.0:
            g = 0.0
        else:
            g = np.vdot(ys, us) / denom
        ys = g * ys
    err_power = np.sum(np.abs(ys - us) ** 2)
    if err_power == 0.0:
        return floor_db
    return max(float(10.0 * np.log10(err_power / ref_power)), floor_db)


def welch_psd(x: ComplexSignal, cfg: SpectrumConfig) -> tuple[np.ndarray, np.ndarray]:
    """Welch-averaged two-sided PSD estimate (density, power per Hz).

    Returns (freqs, psd) sorted in ascending frequency. Segments shorter than
    ``fft_size`` are not padded; the signal must hold at least one segment.
    """
    samples = x.samples
    n = cfg.fft_size
    if samples.size < n:
        raise ValueError(f"signal too short for fft_size {n}")
    if cfg.window == "hann":
        window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    else:
        window = np.ones(n)
    step = max(1, int(round(n * (1.0 - cfg.segment_overlap))))
    num_segments = 1 + (samples.size - n) // step
    acc = np.zeros(n)
    for k in range(num_segments):
        seg = samples[k * step : k * step + n] * window
        acc += np.abs(np.fft.fft(seg)) ** 2
    psd = acc / (num_segments * x.sample_rate_hz * np.sum(window**2))
    freqs = np.fft.fftfreq(n, d=1.0 / x.sample_rate_hz)
    order = np.argsort(freqs)
    return freqs[order], psd[order]


def band_power(freqs: np.ndarray, psd: np.ndarray, f_lo: float, f_hi: float) -> float:
    """Integrate a PSD over [f_lo, f_hi) by summing bin densities."""
    mask = (freqs >= f_lo) & (freqs < f_hi)
    df = freqs[1] - freqs[0]
    return float(np.sum(psd[mask]) * df)


def acpr_dbc(y: ComplexSignal, channel_bw_hz: float,
             cfg: SpectrumConfig | None = None, floor_db: float = DB_FLOOR) -> float:
    """Adjacent channel power ratio in dBc.

    Integrates the Welch PSD over the main channel centered at DC and over the
    two immediately flanking channels of equal width; reports the worse (larger)
    adjacent channel relative to the main channel.
    """
    cfg = cfg or SpectrumConfig()
    half = channel_bw_hz / 2.0
    if 3.0 * half > y.sample_rate_hz / 2.0:
        raise ValueError("main + adjacent channels exceed the Nyquist span")
    freqs, psd = welch_psd(y, cfg)
    main = band_power(freqs, psd, -half, half)
    lower = band_power(freqs, psd, -3.0 * half, -half)
    upper = band_power(freqs, psd, half, 3.0 * half)
    if main == 0.0:
        raise ValueError("main channel has zero power")
    worst = max(lower, upper)
    if worst == 0.0:
        return floor_db
    return max(float(10.0 * np.log10(worst / main)), floor_db)


def save_csig(path: str | Path, signal: ComplexSignal) -> None:
    """Write the binary signal format: magic, version, rate, length, f64 IQ pairs."""
    header = _CSIG_MAGIC + struct.pack(
        "<IdQ", _CSIG_VERSION, signal.sample_rate_hz, len(signal)
    )
    interleaved = np.empty(2 * len(signal))
    interleaved[0::2] = signal.samples.real
    interleaved[1::2] = signal.samples.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(interleaved.astype("<f8").tobytes())


def load_csig(path: str | Path) -> ComplexSignal:
    with open(path, "rb") as fh:
        blob = fh.read()
    head_len = 4 + struct.calcsize("<IdQ")
    if len(blob) < head_len or blob[:4] != _CSIG_MAGIC:
        raise ValueError(f"{path}: not a CSIG file")
    version, rate, length = struct.unpack("<IdQ", blob[4:head_len])
    if version != _CSIG_VERSION:
        raise ValueError(f"{path}: unsupported CSIG version {version}")
    payload = np.frombuffer(blob, dtype="<f8", offset=head_len)
    if payload.size != 2 * length:
        raise ValueError(f"{path}: truncated CSIG payload")
    return ComplexSignal(payload[0::2] + 1j * payload[1::2], rate)


def save_csv_signal(path: str | Path, signal: ComplexSignal) -> None:
    """Plain-text interop dump, columns re,im (sample rate is not stored)."""
    with open(path, "w") as fh:
        fh.write("re,im\n")
        for value in signal.samples:
            fh.write(f"{float(value.real)!r},{float(value.imag)!r}\n")


def load_csv_signal(path: str | Path, sample_rate_hz: float) -> ComplexSignal:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.lower().replace(" ", "") == "re,im":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 're,im' columns")
            rows.append(complex(float(parts[0]), float(parts[1])))
    return ComplexSignal(np.asarray(rows), sample_rate_hz)
