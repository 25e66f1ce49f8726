"""Scratch calibration for the reference transmitter (not part of the package)."""
import numpy as np
import dpdlab as d
from dpdlab.lab import TRANSIENT_GUARD


def measure(tx, seed=11, n=2**16):
    x = d.generate_multicarrier(n, 10e6, 200e6, seed=seed, target_rms=0.25)
    y = d.transmit(x, tx, seed=seed + 999)
    yb = d.ComplexSignal(y.samples[TRANSIENT_GUARD:], 200e6)
    xb = d.ComplexSignal(x.samples[TRANSIENT_GUARD:], 200e6)
    nmse = d.nmse_db(yb, xb)
    acpr = d.acpr_dbc(yb, 10e6)
    floor = 10 * np.log10(tx.pa.noise_variance / yb.power) if tx.pa.noise_variance else -200
    return f"nmse {nmse:7.2f}  acpr {acpr:7.2f}  rms {yb.rms:5.2f}  floor {floor:7.2f}"


def image_ratio_db(tx, seed=5):
    # clean tone at +f0; image shows up at -f0
    n = 2**14
    f0 = 12.5e6  # bin-aligned: 12.5e6/200e6*16384 = 1024
    t = np.arange(n)
    x = d.ComplexSignal(0.25 * np.exp(2j * np.pi * f0 / 200e6 * t), 200e6)
    z = d.iq_modulate(x, tx.iq, tx.dac)
    spec = np.abs(np.fft.fft(z.samples[64:64 + 8192])) ** 2
    freqs = np.fft.fftfreq(8192, 1 / 200e6)
    k_pos = int(np.argmin(np.abs(freqs - f0)))
    k_neg = int(np.argmin(np.abs(freqs + f0)))
    lo = 3
    p_pos = spec[k_pos - lo:k_pos + lo + 1].sum()
    p_neg = spec[k_neg - lo:k_neg + lo + 1].sum()
    return 10 * np.log10(p_neg / p_pos)


def build_tx(G, c11, c12, c30, c31, c50, c70, fir_i, fir_q, nv=0.0032):
    return d.TransmitterConfig(
        dac=d.DacModel(12, 1.0),
        iq=d.IqImbalanceConfig(1.0, 8.0, d.FirFilter(fir_i), d.FirFilter(fir_q)),
        pa=d.PaSurrogate({(1, 0): G, (1, 1): c11, (1, 2): c12,
                          (3, 0): c30, (3, 1): c31, (5, 0): c50, (7, 0): c70},
                         saturation_level=24.1, noise_variance=nv),
        seed=2024,
    )


flat_i = [0.94, 0.08, -0.03, 0.016, -0.008, 0.004]
flat_q = [0.91, 0.115, -0.045, 0.022, -0.011, 0.005]
# high-lag structured mismatch: branch responses diverge across the band
mis_i = [0.93, 0.05, -0.02, 0.012, -0.06, 0.09]
mis_q = [0.90, 0.10, -0.05, 0.025, 0.07, -0.11]

cases = {
    "A base G20": dict(G=20, c11=0.7 - 0.45j, c12=-0.28 + 0.18j, c30=-10.5 + 8j,
                       c31=-2.5 + 1.9j, c50=12 - 17j, c70=-25 + 31j,
                       fir_i=flat_i, fir_q=flat_q),
    "B mism G20": dict(G=20, c11=0.7 - 0.45j, c12=-0.28 + 0.18j, c30=-10.5 + 8j,
                       c31=-2.5 + 1.9j, c50=12 - 17j, c70=-25 + 31j,
                       fir_i=mis_i, fir_q=mis_q),
    "C mism softer3": dict(G=20, c11=0.7 - 0.45j, c12=-0.28 + 0.18j, c30=-7 + 5.5j,
                           c31=-1.8 + 1.3j, c50=9 - 12j, c70=-18 + 22j,
                           fir_i=mis_i, fir_q=mis_q),
}
for name, kw in cases.items():
    tx = build_tx(**kw)
    print(f"{name}: {measure(tx)}  image {image_ratio_db(tx):6.2f} dB")
