"""Scratch: end-to-end ILA check on a candidate reference transmitter."""
import time
import numpy as np
from dataclasses import replace
import dpdlab as d
from dpdlab.lab import ExperimentConfig, NetShape, evaluate_dpd, ila_run, noise_floor_report
from dpdlab.training import TrainConfig


def build_candidate(nv=0.0032, cubic=1.0):
    fir_i = [0.94, 0.08, -0.03, 0.016, -0.008, 0.004]
    fir_q = [0.84, 0.10, -0.045, 0.022, 0.055, -0.065]
    return d.TransmitterConfig(
        dac=d.DacModel(12, 1.0),
        iq=d.IqImbalanceConfig(1.0, 8.0, d.FirFilter(fir_i), d.FirFilter(fir_q)),
        pa=d.PaSurrogate({(1, 0): 25.0 + 0j, (1, 1): 0.9 - 0.6j, (1, 2): -0.35 + 0.22j,
                          (3, 0): cubic * (-8.0 + 6.0j), (3, 1): cubic * (-2.0 + 1.5j),
                          (5, 0): cubic * (2.5 - 3.0j), (7, 0): cubic * (-1.2 + 1.3j)},
                         saturation_level=24.1, noise_variance=nv),
        seed=2024,
    )


if __name__ == "__main__":
    for steps, cubic in [(16000, 1.0), (16000, 1.4)]:
        tx = build_candidate(cubic=cubic)
        cfg = ExperimentConfig(
            transmitter=tx, model_kind="arden", net_shape=NetShape(3, (8, 8, 8)),
            train=TrainConfig(total_steps=steps), ila_iterations=2, seed=1)
        nodpd = evaluate_dpd(None, cfg)
        print(f"--- steps={steps} cubic={cubic}: no-DPD nmse {nodpd.nmse_db:.2f} acpr {nodpd.acpr_dbc:.2f}")
        for seed in (1, 2, 3):
            c = replace(cfg, seed=seed)
            t0 = time.time()
            model, hist = ila_run(c)
            rep = evaluate_dpd(model, c)
            print(f"  seed {seed}: nmse {rep.nmse_db:7.2f}  acpr {rep.acpr_dbc:7.2f}  "
                  f"impr {nodpd.nmse_db - rep.nmse_db:5.1f}/{nodpd.acpr_dbc - rep.acpr_dbc:4.1f}  "
                  f"({time.time() - t0:.0f}s)")
