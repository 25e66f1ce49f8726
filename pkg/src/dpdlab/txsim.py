"""Simulated direct-conversion transmitter.

Chain: per-branch DAC clip/quantize -> per-branch lowpass FIR -> mixer with
gain/phase imbalance -> memory-polynomial power amplifier with hard saturation
and additive measurement noise. Every stage is a pure function; the full
transmitter is deterministic given its config seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import textconfig
from .signals import ComplexSignal, FirFilter, fir_apply_real
from .textconfig import ConfigError

CONFIG_VERSION = 1


@dataclass(frozen=True)
class DacModel:
    """Ideal-clock DAC: hard clip to full scale, then uniform quantization."""

    num_bits: int
    clip_level: float

    def __post_init__(self):
        if self.num_bits < 4:
            raise ValueError("num_bits must be at least 4")
        if not self.clip_level > 0:
            raise ValueError("clip_level must be positive")


@dataclass(frozen=True)
class IqImbalanceConfig:
    """Gain/phase mismatch plus per-branch filters of the IQ modulator."""

    gain_imbalance_db: float
    phase_deg: float
    fir_i: FirFilter
    fir_q: FirFilter
    gain_before_dac: bool = False

    @property
    def branch_gains(self) -> tuple[float, float]:
        """(g_I, g_Q) realizing the imbalance split symmetrically."""
        half = self.gain_imbalance_db / 2.0
        return 10.0 ** (half / 20.0), 10.0 ** (-half / 20.0)


@dataclass(frozen=True)
class PaSurrogate:
    """Memory-polynomial PA with hard saturation and measurement noise.

    ``coeffs`` maps (odd order p, memory tap m) to a complex coefficient of the
    term |z(n-m)|^(p-1) * z(n-m).
    """

    coeffs: dict[tuple[int, int], complex]
    saturation_level: float
    noise_variance: float

    def __post_init__(self):
        if not self.saturation_level > 0:
            raise ValueError("saturation_level must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        for (p, m) in self.coeffs:
            if p < 1 or p % 2 == 0:
                raise ValueError(f"polynomial order {p} must be odd and >= 1")
            if m < 0:
                raise ValueError(f"memory tap {m} must be nonnegative")
        if self.coeffs.get((1, 0), 0.0) == 0.0:
            raise ValueError("PA needs a nonzero linear (p=1, m=0) coefficient")

    @property
    def linear_gain(self) -> complex:
        return complex(self.coeffs[(1, 0)])


@dataclass(frozen=True)
class TransmitterConfig:
    dac: DacModel | None
    iq: IqImbalanceConfig
    pa: PaSurrogate
    seed: int = 0


def dac_quantize(branch: np.ndarray, d: DacModel) -> np.ndarray:
    """Clip to +-clip_level, then round to the nearest of 2^num_bits levels.

    Levels include both endpoints, so re-quantizing is a no-op and an
    over-range input maps exactly to the clip level.
    """
    x = np.clip(np.asarray(branch, dtype=np.float64), -d.clip_level, d.clip_level)
    step = 2.0 * d.clip_level / (2**d.num_bits - 1)
    return np.round((x + d.clip_level) / step) * step - d.clip_level


def iq_modulate(x: ComplexSignal, cfg: IqImbalanceConfig,
                dac: DacModel | None = None) -> ComplexSignal:
    """Run both branches through DAC and filter, then mix with phase imbalance.

    z(n) = s_I(n) + j * e^{j*phi} * s_Q(n), with the branch gains applied at the
    mixer (default) or ahead of the DACs when ``cfg.gain_before_dac`` is set.
    """
    g_i, g_q = cfg.branch_gains
    branch_i = x.samples.real
    branch_q = x.samples.imag
    if cfg.gain_before_dac:
        branch_i = branch_i * g_i
        branch_q = branch_q * g_q
    if dac is not None:
        branch_i = dac_quantize(branch_i, dac)
        branch_q = dac_quantize(branch_q, dac)
    s_i = fir_apply_real(branch_i, cfg.fir_i)
    s_q = fir_apply_real(branch_q, cfg.fir_q)
    if not cfg.gain_before_dac:
        s_i = s_i * g_i
        s_q = s_q * g_q
    phi = np.deg2rad(cfg.phase_deg)
    z = s_i + 1j * np.exp(1j * phi) * s_q
    return x.with_samples(z)


def pa_apply(z: ComplexSignal, pa: PaSurrogate, seed: int = 0) -> ComplexSignal:
    """Memory-polynomial PA, then hard magnitude clip, then seeded noise."""
    zs = z.samples
    y = np.zeros_like(zs)
    for (p, m), coeff in sorted(pa.coeffs.items()):
        delayed = np.concatenate([np.zeros(m, dtype=zs.dtype), zs[: zs.size - m]])
        y += coeff * np.abs(delayed) ** (p - 1) * delayed
    mag = np.abs(y)
    over = mag > pa.saturation_level
    if np.any(over):
        y[over] *= pa.saturation_level / mag[over]
    if pa.noise_variance > 0.0:
        rng = np.random.default_rng(seed)
        sigma = np.sqrt(pa.noise_variance / 2.0)
        y = y + sigma * (rng.normal(size=y.size) + 1j * rng.normal(size=y.size))
    return z.with_samples(y)


def transmit(x: ComplexSignal, cfg: TransmitterConfig, seed: int | None = None) -> ComplexSignal:
    """Full transmitter chain; noise seed defaults to the config seed."""
    z = iq_modulate(x, cfg.iq, cfg.dac)
    return pa_apply(z, cfg.pa, cfg.seed if seed is None else seed)


# ---------------------------------------------------------------------------
# Config serialization


def transmitter_to_entries(cfg: TransmitterConfig) -> dict:
    entries: dict = {"version": CONFIG_VERSION}
    if cfg.dac is not None:
        entries["dac.num_bits"] = cfg.dac.num_bits
        entries["dac.clip_level"] = cfg.dac.clip_level
    entries["iq.gain_imbalance_db"] = cfg.iq.gain_imbalance_db
    entries["iq.phase_deg"] = cfg.iq.phase_deg
    entries["iq.fir_i"] = [float(t) for t in cfg.iq.fir_i.taps]
    entries["iq.fir_q"] = [float(t) for t in cfg.iq.fir_q.taps]
    if cfg.iq.gain_before_dac:
        entries["iq.gain_before_dac"] = True
    entries["pa.coeffs"] = [
        [p, m, c.real, c.imag] for (p, m), c in sorted(cfg.pa.coeffs.items())
    ]
    entries["pa.saturation_level"] = cfg.pa.saturation_level
    entries["pa.noise_variance"] = cfg.pa.noise_variance
    entries["seed"] = cfg.seed
    return entries


def transmitter_from_entries(values: dict, source: str = "config") -> TransmitterConfig:
    values = dict(values)
    version = textconfig.take_optional(values, "version", int, CONFIG_VERSION, source)
    if version != CONFIG_VERSION:
        raise ConfigError(f"{source}: unsupported transmitter config version {version}")
    dac = None
    if "dac.num_bits" in values or "dac.clip_level" in values:
        dac = DacModel(
            num_bits=textconfig.take(values, "dac.num_bits", int, source),
            clip_level=textconfig.take(values, "dac.clip_level", float, source),
        )
    iq = IqImbalanceConfig(
        gain_imbalance_db=textconfig.take(values, "iq.gain_imbalance_db", float, source),
        phase_deg=textconfig.take(values, "iq.phase_deg", float, source),
        fir_i=FirFilter(textconfig.take(values, "iq.fir_i", list, source)),
        fir_q=FirFilter(textconfig.take(values, "iq.fir_q", list, source)),
        gain_before_dac=textconfig.take_optional(values, "iq.gain_before_dac", bool, False, source),
    )
    raw_coeffs = textconfig.take(values, "pa.coeffs", list, source)
    coeffs: dict[tuple[int, int], complex] = {}
    for item in raw_coeffs:
        if not (isinstance(item, list) and len(item) == 4):
            raise ConfigError(f"{source}: pa.coeffs entries must be [p, m, re, im]")
        p, m, re, im = item
        coeffs[(int(p), int(m))] = complex(float(re), float(im))
    pa = PaSurrogate(
        coeffs=coeffs,
        saturation_level=textconfig.take(values, "pa.saturation_level", float, source),
        noise_variance=textconfig.take(values, "pa.noise_variance", float, source),
    )
    seed = textconfig.take_optional(values, "seed", int, 0, source)
    textconfig.ensure_consumed(values, source)
    return TransmitterConfig(dac=dac, iq=iq, pa=pa, seed=seed)


def save_transmitter_config(path: str | Path, cfg: TransmitterConfig) -> None:
    textconfig.save_file(path, transmitter_to_entries(cfg), header="transmitter config")


def load_transmitter_config(path: str | Path) -> TransmitterConfig:
    return transmitter_from_entries(textconfig.load_file(path), source=str(path))


def reference_transmitter() -> TransmitterConfig:
    """The transmitter config shipped with the package (see configs/reference_tx.cfg)."""
    text = resources.files("dpdlab").joinpath("configs/reference_tx.cfg").read_text()
    return transmitter_from_entries(
        textconfig.parse_text(text, "reference_tx.cfg"), "reference_tx.cfg"
    )


def ideal_transmitter(gain: float = 1.0) -> TransmitterConfig:
    """Impairment-free transmitter with linear gain; handy for sanity checks."""
    unit = FirFilter([1.0])
    return TransmitterConfig(
        dac=None,
        iq=IqImbalanceConfig(0.0, 0.0, unit, unit),
        pa=PaSurrogate({(1, 0): complex(gain)}, saturation_level=1e9, noise_variance=0.0),
        seed=0,
    )
