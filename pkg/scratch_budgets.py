"""Scratch: shortcut-on vs shortcut-off at small budgets; PH baseline; pruning."""
import time
import numpy as np
from dataclasses import replace
import dpdlab as d
from dpdlab.lab import ExperimentConfig, NetShape, evaluate_dpd, ila_run
from dpdlab.training import TrainConfig
from scratch_ila import build_candidate

tx = build_candidate(cubic=1.0)
base = ExperimentConfig(transmitter=tx, model_kind="arden",
                        train=TrainConfig(total_steps=16000), ila_iterations=2, seed=1)

t_all = time.time()
print("== shortcut ordering, 5 seeds ==")
for D in (2, 4, 6, 8):
    row = {}
    for kind in ("arden", "rvtdnn"):
        vals = []
        for seed in (1, 2, 3, 4, 5):
            c = replace(base, model_kind=kind, net_shape=NetShape(3, (D, D, D)), seed=seed)
            model, _ = ila_run(c)
            vals.append(evaluate_dpd(model, c).nmse_db)
        row[kind] = (float(np.median(vals)), vals)
    flops = d.flops_for_dims((8, D, D, D, 2), 0, True)
    ok = row["arden"][0] <= row["rvtdnn"][0]
    print(f"D={D} ({flops:4d} FLOPs): arden {row['arden'][0]:7.2f}  rvtdnn {row['rvtdnn'][0]:7.2f}  "
          f"{'OK' if ok else 'FAIL'}   {[round(v,1) for v in row['arden'][1]]} vs {[round(v,1) for v in row['rvtdnn'][1]]}")

print("== PH baseline (7,3,2) ==")
for seed in (1, 2, 3):
    c = replace(base, model_kind="ph", ph_shape=d.PhShape.uniform(7, 3, 2), seed=seed)
    model, _ = ila_run(c)
    rep = evaluate_dpd(model, c)
    print(f"  seed {seed}: nmse {rep.nmse_db:7.2f}  acpr {rep.acpr_dbc:7.2f}  flops {rep.flops}")

print("== pruned 824->416 vs dense 424, 3 seeds ==")
for seed in (1, 2, 3):
    dense = replace(base, net_shape=NetShape(3, (8, 8, 8)), seed=seed)
    m1, _ = ila_run(dense)
    r1 = evaluate_dpd(m1, dense)
    pruned = replace(base, net_shape=NetShape(3, (12, 12, 12)), prune_eta=0.5,
                     prune_delta_n=200, seed=seed)
    m2, _ = ila_run(pruned)
    r2 = evaluate_dpd(m2, pruned)
    print(f"  seed {seed}: dense424 {r1.nmse_db:7.2f} ({r1.flops})  pruned416 {r2.nmse_db:7.2f} ({r2.flops})")

print(f"total {time.time()-t_all:.0f}s")
