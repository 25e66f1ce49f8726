"""Command-line experiment runner.

Subcommands: simulate, identify, evaluate, sweep, flops.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import report
from .hammerstein import NumericalError, PhModel, ph_flops, save_ph
from .lab import (ExperimentConfig, apply_model, evaluate_dpd, ila_run,
                  load_experiment, sweep)
from .network import flops_for_dims, save_network
from .signals import save_csig
from .textconfig import ConfigError
from .training import save_history_csv
from .txsim import transmit


def _parse_dims(text: str) -> list[int]:
    try:
        dims = [int(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad dims {text!r}; expected comma-separated integers")
    if len(dims) < 2:
        raise ConfigError("dims needs at least two layers")
    return dims


def _load(args) -> ExperimentConfig:
    cfg, _ = load_experiment(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    u = cfg.signal.generate(cfg.seed * 100 + 1)
    y = transmit(u, cfg.transmitter, seed=cfg.seed * 100 + 6)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csig(out, y)
    if args.figures:
        fig = report.render_psd_figure(
            {"input": u, "transmitter output": y},
            out.with_suffix(".psd.png"), cfg.metrics.spectrum)
        print(f"wrote {out} and {fig}")
    else:
        print(f"wrote {out}")
    return 0


def _cmd_identify(args) -> int:
    cfg = _load(args)
    model, history = ila_run(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(model, PhModel):
        save_ph(out, model)
    else:
        save_network(out, model)
    if history:
        save_history_csv(out.with_suffix(out.suffix + ".history.csv"), history)
    print(f"wrote {out}")
    return 0


def _load_model(path: str):
    from . import hammerstein, network, textconfig

    values = textconfig.load_file(path)
    fmt = values.get("format")
    if fmt == hammerstein.CHECKPOINT_FORMAT:
        return hammerstein.ph_from_entries(values, str(path))
    if fmt == network.CHECKPOINT_FORMAT:
        return network.network_from_entries(values, str(path))
    raise ConfigError(f"{path}: unknown checkpoint format {fmt!r}")


def _cmd_evaluate(args) -> int:
    cfg = _load(args)
    model = _load_model(args.model) if args.model else None
    result = evaluate_dpd(model, cfg)
    out_dir = Path(args.out) if args.out else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_metrics_csv(out_dir / "metrics.csv", [result])
    print(f"model={result.model_kind} shape={result.shape} flops={result.flops} "
          f"nmse_db={result.nmse_db:.2f} acpr_dbc={result.acpr_dbc:.2f}")
    if args.figures:
        u = cfg.signal.generate(cfg.seed * 100 + 2)
        y_raw = transmit(u, cfg.transmitter, seed=cfg.seed * 100 + 6)
        y_dpd = transmit(apply_model(model, u), cfg.transmitter, seed=cfg.seed * 100 + 6)
        report.render_psd_figure(
            {"input": u, "no DPD": y_raw, "with DPD": y_dpd},
            out_dir / "psd.png", cfg.metrics.spectrum)
    print(f"wrote {out_dir / 'metrics.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    cfg, lists = load_experiment(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    shapes = lists["ph_shapes"] if cfg.model_kind == "ph" else lists["shapes"]
    rows = sweep(cfg, shapes, lists["etas"], lists["seeds"])
    out_dir = Path(args.out) if args.out else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    report.write_metrics_csv(csv_path, rows)
    written = [csv_path]
    if args.figures and rows:
        written += report.render_sweep_figures(rows, out_dir)
    print(f"{len(rows)} rows -> " + ", ".join(str(p) for p in written))
    return 0


def _cmd_flops(args) -> int:
    if args.model in ("arden", "rvtdnn"):
        if not args.dims:
            raise ConfigError("--dims is required for network models")
        dims = _parse_dims(args.dims)
        print(flops_for_dims(dims, args.eta, shortcut_enabled=(args.model == "arden")))
        return 0
    if args.model == "ph":
        print(ph_flops(args.p, args.q, args.length))
        return 0
    raise ConfigError(f"unknown model kind {args.model!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpdlab",
        description="Digital predistortion lab: simulate, identify, evaluate, sweep.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment manifest file")
        p.add_argument("--seed", type=int, default=None, help="override the manifest seed")

    p = sub.add_parser("simulate", help="transmit a generated signal and dump it as CSIG")
    add_common(p)
    p.add_argument("--out", required=True, help="output .csig path")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("identify", help="run ILA identification and save the checkpoint")
    add_common(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(fn=_cmd_identify)

    p = sub.add_parser("evaluate", help="score a model (or the bare transmitter) on held-out data")
    add_common(p)
    p.add_argument("--model", default=None, help="checkpoint to deploy; omit for no-DPD")
    p.add_argument("--out", default=None, help="report directory (default: manifest output_dir)")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("sweep", help="run the manifest's sweep grid and write the report table")
    add_common(p)
    p.add_argument("--out", default=None, help="report directory (default: manifest output_dir)")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("flops", help="print the running complexity of a model shape")
    p.add_argument("--model", required=True, choices=["arden", "rvtdnn", "ph"])
    p.add_argument("--dims", default=None, help="comma-separated layer widths, e.g. 8,8,8,8,2")
    p.add_argument("--eta", type=float, default=0.0, help="target sparsity")
    p.add_argument("--p", type=int, default=7)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--length", type=int, default=2, help="shared FIR length per order")
    p.set_defaults(fn=_cmd_flops)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
