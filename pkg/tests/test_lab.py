import os
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import dpdlab as d
from dpdlab import report
from dpdlab.cli import main
from dpdlab.hammerstein import NumericalError, PhShape, ph_flops
from dpdlab.lab import (ExperimentConfig, MetricsReport, NetShape, SignalSpec,
                        estimate_small_signal_gain, evaluate_dpd, ila_identify,
                        ila_run, load_experiment, noise_floor_report, sweep)
from dpdlab.network import flops_for_dims, realized_flops
from dpdlab.signals import load_csig

FAST_SIGNAL = SignalSpec(num_samples=8192)


def fast_cfg(**kwargs):
    defaults = dict(
        transmitter=d.reference_transmitter(),
        model_kind="arden",
        net_shape=NetShape(3, (4, 4, 4)),
        ph_shape=PhShape.uniform(3, 1, 2),
        train=d.TrainConfig(total_steps=600),
        signal=FAST_SIGNAL,
        ila_iterations=1,
        seed=1,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


FAST_MANIFEST = """\
transmitter = "reference"
model.kind = "arden"
model.memory = 3
model.hidden = [4, 4, 4]
train.total_steps = 400
ila_iterations = 1
signal.num_samples = 8192
seed = 3
sweep.hidden = [[2, 2, 2], [4, 4, 4]]
sweep.eta = [0.0]
sweep.seeds = [1, 2]
"""


class TestIlaIdentify:
    def test_linear_capable_model_inverts_ideal_transmitter(self):
        cfg = fast_cfg(transmitter=d.ideal_transmitter(gain=4.0),
                       model_kind="ph", ph_shape=PhShape.uniform(1, 0, 1))
        gain = estimate_small_signal_gain(cfg)
        assert gain == pytest.approx(4.0, abs=1e-9)
        model = ila_identify(cfg)
        # post-distorter composes the 1/G normalization with a unit coefficient
        assert model.coeffs[0] == pytest.approx(1.0, abs=1e-9)
        assert evaluate_dpd(model, cfg).nmse_db == -200.0

    def test_ph_improves_reference_by_at_least_8_db(self):
        cfg = fast_cfg(model_kind="ph", ph_shape=PhShape.uniform(7, 3, 2),
                       signal=SignalSpec(num_samples=30_000), ila_iterations=2)
        baseline = evaluate_dpd(None, cfg)
        model = ila_identify(cfg)
        rep = evaluate_dpd(model, cfg)
        assert rep.nmse_db <= baseline.nmse_db - 8.0

    def test_network_ila_improves_reference(self):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=2000),
                       signal=SignalSpec(num_samples=30_000), ila_iterations=2)
        baseline = evaluate_dpd(None, cfg)
        model = ila_identify(cfg)
        rep = evaluate_dpd(model, cfg)
        assert rep.nmse_db <= baseline.nmse_db

    def test_divergence_raises_numerical_error(self):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=200, learning_rate=1e155))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(NumericalError, match="diverged"):
                ila_run(cfg)

    def test_identify_is_deterministic(self):
        models = [ila_identify(fast_cfg()) for _ in range(2)]
        for a, b in zip(models[0].weights, models[1].weights):
            assert np.array_equal(a, b)
        assert np.array_equal(models[0].shortcut, models[1].shortcut)


class TestEvaluateDpd:
    def test_identity_model_on_ideal_transmitter_hits_floor(self):
        cfg = fast_cfg(transmitter=d.ideal_transmitter(gain=2.0))
        net = d.build_network(3, (4, 4, 4), seed=0)
        for w in net.weights:
            w[:] = 0.0
        rep = evaluate_dpd(net, cfg)
        assert rep.nmse_db == -200.0

    def test_no_dpd_row_shape(self):
        rep = evaluate_dpd(None, fast_cfg())
        assert rep.model_kind == "none"
        assert rep.flops == 0
        assert rep.shape == "-"

    def test_reported_flops_delegates_to_model_accounting(self):
        net_cfg = fast_cfg()
        model = ila_identify(net_cfg)
        assert evaluate_dpd(model, net_cfg).flops == d.flops(model, 0.0)
        ph_cfg = fast_cfg(model_kind="ph", ph_shape=PhShape.uniform(3, 1, 2))
        ph_model = ila_identify(ph_cfg)
        assert evaluate_dpd(ph_model, ph_cfg).flops == ph_flops(3, 1, 2)

    def test_evaluation_signal_differs_from_training(self):
        cfg = fast_cfg()
        train_sig = cfg.signal.generate(cfg.seed * 100 + 1)
        eval_sig = cfg.signal.generate(cfg.seed * 100 + 2)
        assert not np.array_equal(train_sig.samples, eval_sig.samples)


class TestSweep:
    def test_flops_column_replicates_reference_ladder(self):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=40),
                       signal=SignalSpec(num_samples=8192))
        shapes = [(w, w, w) for w in (2, 4, 6, 8, 10, 12, 18)]
        rows = sweep(cfg, shapes, etas=[0.0], seeds=[1])
        flops = [r.flops for r in rows if r.model_kind != "lower_bound"]
        assert flops == [64, 152, 272, 424, 608, 824, 1664]

    def test_empty_shape_list_gives_no_rows(self, tmp_path):
        rows = sweep(fast_cfg(), [], etas=[0.0], seeds=[1])
        assert rows == []
        path = tmp_path / "empty.csv"
        report.write_metrics_csv(path, rows)
        assert path.read_text() == report.CSV_HEADER + "\n"

    def test_eta_pair_follows_flop_relation(self):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=40),
                       signal=SignalSpec(num_samples=8192), prune_delta_n=10)
        rows = sweep(cfg, [(8, 8, 8)], etas=[0.0, 0.5], seeds=[1])
        by_eta = {r.eta_d: r.flops for r in rows if r.model_kind == "arden"}
        assert by_eta[0.5] == (by_eta[0.0] - 8) // 2 + 8

    def test_rows_sorted_with_noise_floor_first(self):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=40),
                       signal=SignalSpec(num_samples=8192))
        rows = sweep(cfg, [(6, 6, 6), (2, 2, 2)], etas=[0.0], seeds=[1, 2])
        assert rows[0].model_kind == "lower_bound"
        flops = [r.flops for r in rows[1:]]
        assert flops == sorted(flops)

    def test_flops_recomputable_from_shape_columns(self, tmp_path):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=40),
                       signal=SignalSpec(num_samples=8192), prune_delta_n=10)
        rows = sweep(cfg, [(4, 4, 4)], etas=[0.0, 0.5], seeds=[1])
        path = tmp_path / "table.csv"
        report.write_metrics_csv(path, rows)
        for row in report.read_metrics_csv(path):
            if row.model_kind in ("lower_bound", "none"):
                continue
            dims = tuple(int(v) for v in row.shape.split("-"))
            assert row.flops == realized_flops(dims, row.eta_d,
                                               shortcut_enabled=row.model_kind == "arden")

    def test_thread_pool_gives_identical_rows(self, monkeypatch):
        cfg = fast_cfg(train=d.TrainConfig(total_steps=60),
                       signal=SignalSpec(num_samples=8192))
        shapes = [(2, 2, 2), (4, 4, 4)]
        monkeypatch.delenv("DPDLAB_THREADS", raising=False)
        serial = sweep(cfg, shapes, etas=[0.0], seeds=[1, 2])
        monkeypatch.setenv("DPDLAB_THREADS", "3")
        threaded = sweep(cfg, shapes, etas=[0.0], seeds=[1, 2])
        assert serial == threaded

    def test_noise_floor_row_matches_direct_computation(self):
        cfg = fast_cfg()
        row = noise_floor_report(cfg)
        assert row.model_kind == "lower_bound"
        assert row.flops == 0
        assert -45.0 < row.nmse_db < -35.0
        assert row.acpr_dbc < row.nmse_db  # adjacent share is a band fraction


class TestManifest:
    def test_load_experiment_and_sweep_lists(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(FAST_MANIFEST)
        cfg, lists = load_experiment(path)
        assert cfg.model_kind == "arden"
        assert cfg.net_shape.hidden == (4, 4, 4)
        assert cfg.train.total_steps == 400
        assert cfg.seed == 3
        assert lists["shapes"] == [[2, 2, 2], [4, 4, 4]]
        assert lists["seeds"] == [1, 2]

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(FAST_MANIFEST + 'model.widths = [3]\n')
        with pytest.raises(d.ConfigError):
            load_experiment(path)

    def test_transmitter_path_resolution(self, tmp_path):
        tx_path = tmp_path / "tx.cfg"
        d.save_transmitter_config(tx_path, d.ideal_transmitter(gain=3.0))
        exp = tmp_path / "exp.cfg"
        exp.write_text('transmitter = "tx.cfg"\n')
        cfg, _ = load_experiment(exp)
        assert cfg.transmitter.pa.linear_gain == 3.0


class TestCli:
    def write_manifest(self, tmp_path, extra=""):
        path = tmp_path / "exp.cfg"
        path.write_text(FAST_MANIFEST + extra)
        return path

    def test_flops_prints_marker_value(self, capsys):
        assert main(["flops", "--model", "arden", "--dims", "8,8,8,8,2", "--eta", "0"]) == 0
        assert capsys.readouterr().out.strip() == "424"

    def test_flops_shortcut_off_and_ph(self, capsys):
        assert main(["flops", "--model", "rvtdnn", "--dims", "8,8,8,8,2"]) == 0
        assert capsys.readouterr().out.strip() == "416"
        assert main(["flops", "--model", "ph", "--p", "1", "--q", "1", "--length", "1"]) == 0
        assert capsys.readouterr().out.strip() == "39"

    def test_unknown_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["flops", "--bogus"])
        assert exc.value.code == 2

    def test_missing_config_exits_2(self, capsys):
        assert main(["identify", "--config", "/nonexistent.cfg", "--out", "/tmp/x.ckpt"]) == 2

    def test_bad_manifest_exits_2(self, tmp_path, capsys):
        path = tmp_path / "broken.cfg"
        path.write_text("model.kind = \"warp-drive\"\n")
        out = tmp_path / "m.ckpt"
        assert main(["identify", "--config", str(path), "--out", str(out)]) == 2

    def test_divergence_exits_3(self, tmp_path, capsys):
        path = self.write_manifest(tmp_path, 'train.learning_rate = 1e155\n')
        out = tmp_path / "m.ckpt"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert main(["identify", "--config", str(path), "--out", str(out)]) == 3

    def test_simulate_writes_loadable_csig(self, tmp_path, capsys):
        path = self.write_manifest(tmp_path)
        out = tmp_path / "sig.csig"
        assert main(["simulate", "--config", str(path), "--out", str(out),
                     "--no-figures"]) == 0
        sig = load_csig(out)
        assert len(sig) == 8192
        assert sig.sample_rate_hz == 200e6

    def test_identify_twice_gives_identical_checkpoints(self, tmp_path, capsys):
        path = self.write_manifest(tmp_path)
        out1, out2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        assert main(["identify", "--config", str(path), "--out", str(out1)]) == 0
        assert main(["identify", "--config", str(path), "--out", str(out2)]) == 0
        assert out1.read_text() == out2.read_text()

    def test_evaluate_checkpoint_and_figures(self, tmp_path, capsys):
        manifest = self.write_manifest(tmp_path)
        ckpt = tmp_path / "m.ckpt"
        assert main(["identify", "--config", str(manifest), "--out", str(ckpt)]) == 0
        out_dir = tmp_path / "rpt"
        assert main(["evaluate", "--config", str(manifest), "--model", str(ckpt),
                     "--out", str(out_dir)]) == 0
        rows = report.read_metrics_csv(out_dir / "metrics.csv")
        assert len(rows) == 1 and rows[0].model_kind == "arden"
        assert (out_dir / "psd.png").exists()

    def test_sweep_writes_table_and_figures(self, tmp_path, capsys):
        manifest = self.write_manifest(tmp_path)
        out_dir = tmp_path / "sweepout"
        assert main(["sweep", "--config", str(manifest), "--out", str(out_dir)]) == 0
        rows = report.read_metrics_csv(out_dir / "sweep.csv")
        # one lower-bound row plus one row per (shape, eta, seed)
        assert len(rows) == 1 + 2 * 1 * 2
        assert rows[0].model_kind == "lower_bound"
        assert (out_dir / "nmse_vs_flops.png").exists()
        assert (out_dir / "acpr_vs_flops.png").exists()

    def test_csv_header_is_exact(self, tmp_path):
        report.write_metrics_csv(tmp_path / "x.csv", [])
        header = (tmp_path / "x.csv").read_text().splitlines()[0]
        assert header == "model,shape,eta_d,seed,flops,nmse_db,acpr_dbc,ila_iters"
