"""Report rendering: the metrics CSV plus matplotlib figures saved next to it."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .lab import MetricsReport
from .signals import ComplexSignal, SpectrumConfig, welch_psd

CSV_HEADER = "model,shape,eta_d,seed,flops,nmse_db,acpr_dbc,ila_iters"


def write_metrics_csv(path: str | Path, rows: list[MetricsReport]) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(f"{r.model_kind},{r.shape},{r.eta_d!r},{r.seed},"
                     f"{r.flops},{r.nmse_db:.6f},{r.acpr_dbc:.6f},{r.ila_iters}\n")


def read_metrics_csv(path: str | Path) -> list[MetricsReport]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            model, shape, eta, seed, flops, nmse, acpr, iters = line.strip().split(",")
            rows.append(MetricsReport(float(nmse), float(acpr), int(flops), model,
                                      shape, float(eta), int(seed), int(iters)))
    return rows


def _series(rows: list[MetricsReport]):
    """Group sweep rows into ((model, eta) -> median metric per FLOP count)."""
    groups: dict[tuple[str, float], dict[int, list[MetricsReport]]] = {}
    for r in rows:
        if r.model_kind == "lower_bound":
            continue
        groups.setdefault((r.model_kind, r.eta_d), {}).setdefault(r.flops, []).append(r)
    out = {}
    for key, by_flops in groups.items():
        flops = sorted(by_flops)
        nmse = [float(np.median([r.nmse_db for r in by_flops[f]])) for f in flops]
        acpr = [float(np.median([r.acpr_dbc for r in by_flops[f]])) for f in flops]
        out[key] = (flops, nmse, acpr)
    return out


def render_sweep_figures(rows: list[MetricsReport], out_dir: str | Path) -> list[Path]:
    """NMSE-vs-FLOPs and ACPR-vs-FLOPs figures for a sweep table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = _series(rows)
    bound = next((r for r in rows if r.model_kind == "lower_bound"), None)
    paths = []
    for metric_index, (name, ylabel, bound_value) in enumerate(
        (("nmse_vs_flops", "NMSE [dB]", bound.nmse_db if bound else None),
         ("acpr_vs_flops", "ACPR [dBc]", bound.acpr_dbc if bound else None))
    ):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for (model, eta), (flops, nmse, acpr) in sorted(series.items()):
            values = nmse if metric_index == 0 else acpr
            label = model if eta == 0.0 else f"{model}, eta={eta:g}"
            ax.semilogx(flops, values, marker="o", label=label)
        if bound_value is not None:
            ax.axhline(bound_value, color="gray", linewidth=1.2, label="noise floor")
        ax.set_xlabel("FLOPs")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.4)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_psd_figure(signals: dict[str, ComplexSignal], path: str | Path,
                      cfg: SpectrumConfig | None = None) -> Path:
    """Overlayed Welch PSDs (dB) of the labelled signals."""
    cfg = cfg or SpectrumConfig()
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for label, signal in signals.items():
        freqs, psd = welch_psd(signal, cfg)
        ax.plot(freqs / 1e6, 10.0 * np.log10(np.maximum(psd, 1e-30)), label=label, lw=1.0)
    ax.set_xlabel("Frequency [MHz]")
    ax.set_ylabel("PSD [dB/Hz]")
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
