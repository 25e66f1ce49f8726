"""Experiment orchestration: ILA identification, DPD evaluation, model sweeps.

The predistorter is identified indirectly: the model is fitted as a
post-distorter from the gain-normalized transmitter output back to the
transmitter input, then deployed in front of the transmitter. Each ILA
iteration after the first re-transmits through the current predistorter and
refits on the fresh pair. All randomness derives from the experiment seed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import textconfig
from .hammerstein import (NumericalError, PhModel, PhShape, ph_fit,
                          ph_model_flops, ph_predict)
from .network import ArdenNetwork, build_network, flops_for_dims, predistort, window_signal
from .signals import ComplexSignal, SpectrumConfig, acpr_dbc, generate_multicarrier, nmse_db
from .textconfig import ConfigError
from .training import (HistoryRow, PruneSchedule, TrainConfig, live_flops,
                       train_with_pruning)
from .txsim import TransmitterConfig, load_transmitter_config, reference_transmitter, transmit

# Samples dropped at the head of every transmission before fitting or scoring,
# so filter warm-up never biases the estimates.
TRANSIENT_GUARD = 64

_MAX_ALIGN_LAG = 16

MODEL_KINDS = ("arden", "rvtdnn", "ph")


@dataclass(frozen=True)
class SignalSpec:
    num_samples: int = 100_000
    bandwidth_hz: float = 10e6
    sample_rate_hz: float = 200e6
    rms: float = 0.25

    def generate(self, seed: int) -> ComplexSignal:
        return generate_multicarrier(self.num_samples, self.bandwidth_hz,
                                     self.sample_rate_hz, seed, target_rms=self.rms)


@dataclass(frozen=True)
class MetricSpec:
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    channel_bw_hz: float = 10e6


@dataclass(frozen=True)
class NetShape:
    memory: int = 3
    hidden: tuple[int, ...] = (8, 8, 8)
    activation: str = "relu"

    def dims(self) -> tuple[int, ...]:
        return (2 * (self.memory + 1), *self.hidden, 2)

    def descriptor(self) -> str:
        return "-".join(str(d) for d in self.dims())


@dataclass(frozen=True)
class ExperimentConfig:
    transmitter: TransmitterConfig
    model_kind: str = "arden"
    net_shape: NetShape = field(default_factory=NetShape)
    ph_shape: PhShape = field(default_factory=lambda: PhShape.uniform(7, 3, 2))
    train: TrainConfig = field(default_factory=TrainConfig)
    prune_eta: float = 0.0
    prune_delta_n: int = 500
    prune_output_layer: bool = True
    ila_iterations: int = 2
    signal: SignalSpec = field(default_factory=SignalSpec)
    metrics: MetricSpec = field(default_factory=MetricSpec)
    output_dir: Path = Path("dpdlab-out")
    seed: int = 1

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if self.ila_iterations < 1:
            raise ValueError("ila_iterations must be at least 1")
        if not 0.0 <= self.prune_eta < 1.0:
            raise ValueError("prune_eta must lie in [0, 1)")

    def prune_schedule(self) -> PruneSchedule | None:
        if self.prune_eta == 0.0 or self.model_kind == "ph":
            return None
        return PruneSchedule(self.prune_eta, self.prune_delta_n, self.train.total_steps)

    def shape_descriptor(self) -> str:
        if self.model_kind == "ph":
            return self.ph_shape.descriptor()
        return self.net_shape.descriptor()


@dataclass(frozen=True)
class MetricsReport:
    nmse_db: float
    acpr_dbc: float
    flops: int
    model_kind: str
    shape: str
    eta_d: float
    seed: int
    ila_iters: int


def _seed(base: int, purpose: int) -> int:
    return base * 100 + purpose

_TRAIN_SIGNAL, _EVAL_SIGNAL, _PROBE_SIGNAL = 1, 2, 3
_NET_INIT, _SHUFFLE, _NOISE_EVAL, _NOISE_PROBE = 4, 5, 6, 7
_NOISE_ILA = 10  # plus the iteration index


def estimate_small_signal_gain(cfg: ExperimentConfig) -> complex:
    """Linear transmitter gain from a low-amplitude probe (noise averaged out)."""
    spec = cfg.signal
    probe = generate_multicarrier(
        min(spec.num_samples, 1 << 15), spec.bandwidth_hz, spec.sample_rate_hz,
        _seed(cfg.seed, _PROBE_SIGNAL), target_rms=0.2 * spec.rms,
    )
    echo = transmit(probe, cfg.transmitter, seed=_seed(cfg.seed, _NOISE_PROBE))
    xs = probe.samples[TRANSIENT_GUARD:]
    ys = echo.samples[TRANSIENT_GUARD:]
    gain = np.vdot(xs, ys) / np.vdot(xs, xs)
    if not np.isfinite(gain) or gain == 0.0:
        raise NumericalError("probe gain estimate is degenerate")
    return complex(gain)


def _estimate_lag(x: ComplexSignal, y: ComplexSignal) -> int:
    """Integer bulk delay of y relative to x (causal chain, small lags only)."""
    xs, ys = x.samples, y.samples
    max_lag = min(_MAX_ALIGN_LAG, xs.size // 4)
    scores = []
    for lag in range(max_lag + 1):
        n = xs.size - lag
        scores.append(abs(np.vdot(xs[:n], ys[lag:])))
    return int(np.argmax(scores))


def _training_pair(x: ComplexSignal, y_norm: np.ndarray, lag: int) -> tuple[ComplexSignal, ComplexSignal]:
    """Lag-advanced, transient-trimmed (input=y, target=x) pair for fitting."""
    n = len(x) - lag
    ys = y_norm[lag : lag + n][TRANSIENT_GUARD:]
    xs = x.samples[:n][TRANSIENT_GUARD:]
    rate = x.sample_rate_hz
    return ComplexSignal(xs, rate), ComplexSignal(ys, rate)


def _fit_net_iteration(net: ArdenNetwork, x_sig: ComplexSignal, y_sig: ComplexSignal,
                       cfg: ExperimentConfig, step_offset: int) -> list[HistoryRow]:
    memory = net.memory
    windows = window_signal(y_sig, memory)
    tail = x_sig.samples[memory:]
    targets = np.column_stack([tail.real, tail.imag])
    train_cfg = replace(cfg.train, seed=_seed(cfg.seed, _SHUFFLE))
    history = train_with_pruning(net, windows, targets, train_cfg,
                                 cfg.prune_schedule(), cfg.prune_output_layer)
    rows = [HistoryRow(r.step + step_offset, r.loss, r.eta_current, r.flops_current)
            for r in history]
    losses = [r.loss for r in rows if not math.isnan(r.loss)]
    if losses and not np.isfinite(losses[-1]):
        raise NumericalError(f"training diverged: loss {losses[-1]} at step {rows[-1].step}")
    return rows


def ila_run(cfg: ExperimentConfig):
    """Full ILA identification; returns (model, training history rows)."""
    gain = estimate_small_signal_gain(cfg)
    u = cfg.signal.generate(_seed(cfg.seed, _TRAIN_SIGNAL))

    model: ArdenNetwork | PhModel | None = None
    if cfg.model_kind in ("arden", "rvtdnn"):
        shape = cfg.net_shape
        model = build_network(shape.memory, shape.hidden, shape.activation,
                              shortcut_enabled=(cfg.model_kind == "arden"),
                              seed=_seed(cfg.seed, _NET_INIT))
    history: list[HistoryRow] = []
    lag = None
    for iteration in range(1, cfg.ila_iterations + 1):
        x = u if iteration == 1 else apply_model(model, u)
        y = transmit(x, cfg.transmitter, seed=_seed(cfg.seed, _NOISE_ILA + iteration))
        if lag is None:
            lag = _estimate_lag(x, y)
        x_sig, y_sig = _training_pair(x, y.samples / gain, lag)
        if cfg.model_kind == "ph":
            model = ph_fit(y_sig, x_sig, cfg.ph_shape)
        else:
            history += _fit_net_iteration(model, x_sig, y_sig, cfg,
                                          step_offset=(iteration - 1) * cfg.train.total_steps)
    return model, history


def ila_identify(cfg: ExperimentConfig):
    """Identified post-distorter model, ready to deploy as the predistorter."""
    model, _ = ila_run(cfg)
    return model


def apply_model(model, u: ComplexSignal) -> ComplexSignal:
    """Predistort u with a network or PH model; None means passthrough."""
    if model is None:
        return u
    if isinstance(model, PhModel):
        return ph_predict(u, model)
    return predistort(model, u)


def model_flops(model) -> int:
    if model is None:
        return 0
    if isinstance(model, PhModel):
        return ph_model_flops(model)
    return live_flops(model)


def evaluate_dpd(model, cfg: ExperimentConfig) -> MetricsReport:
    """Deploy the model on a held-out signal and score the transmitter output.

    The evaluation signal uses a different seed than any training signal; the
    initial TRANSIENT_GUARD samples are excluded from the scored region.
    """
    u = cfg.signal.generate(_seed(cfg.seed, _EVAL_SIGNAL))
    x = apply_model(model, u)
    y = transmit(x, cfg.transmitter, seed=_seed(cfg.seed, _NOISE_EVAL))
    rate = u.sample_rate_hz
    y_body = ComplexSignal(y.samples[TRANSIENT_GUARD:], rate)
    u_body = ComplexSignal(u.samples[TRANSIENT_GUARD:], rate)
    nmse = nmse_db(y_body, u_body, align_gain=True)
    acpr = acpr_dbc(y_body, cfg.metrics.channel_bw_hz, cfg.metrics.spectrum)
    eta = cfg.prune_eta if cfg.model_kind != "ph" else 0.0
    return MetricsReport(
        nmse_db=nmse,
        acpr_dbc=acpr,
        flops=model_flops(model),
        model_kind=cfg.model_kind if model is not None else "none",
        shape=cfg.shape_descriptor() if model is not None else "-",
        eta_d=eta if model is not None else 0.0,
        seed=cfg.seed,
        ila_iters=cfg.ila_iterations if model is not None else 0,
    )


def noise_floor_report(cfg: ExperimentConfig) -> MetricsReport:
    """Reference row: the NMSE/ACPR floors set by the measurement noise alone."""
    u = cfg.signal.generate(_seed(cfg.seed, _EVAL_SIGNAL))
    y = transmit(u, cfg.transmitter, seed=_seed(cfg.seed, _NOISE_EVAL))
    out_power = float(np.mean(np.abs(y.samples[TRANSIENT_GUARD:]) ** 2))
    variance = cfg.transmitter.pa.noise_variance
    if variance <= 0.0 or out_power <= 0.0:
        nmse = acpr = -200.0
    else:
        nmse = 10.0 * math.log10(variance / out_power)
        adjacent = variance * cfg.metrics.channel_bw_hz / cfg.signal.sample_rate_hz
        acpr = 10.0 * math.log10(adjacent / out_power)
    return MetricsReport(nmse, acpr, 0, "lower_bound", "-", 0.0, cfg.seed, 0)


def _sweep_variant(cfg: ExperimentConfig, shape, eta: float, seed: int) -> ExperimentConfig:
    if cfg.model_kind == "ph":
        ph = shape if isinstance(shape, PhShape) else PhShape.uniform(*shape)
        return replace(cfg, ph_shape=ph, prune_eta=0.0, seed=seed)
    net = shape if isinstance(shape, NetShape) else replace(cfg.net_shape, hidden=tuple(shape))
    return replace(cfg, net_shape=net, prune_eta=eta, seed=seed)


def _sweep_job(variant: ExperimentConfig) -> MetricsReport:
    model = ila_identify(variant)
    return evaluate_dpd(model, variant)


def sweep(cfg: ExperimentConfig, shapes, etas, seeds) -> list[MetricsReport]:
    """One identified-and-evaluated report per (shape, eta, seed).

    Rows come back sorted by FLOPs with the noise-floor reference row first.
    Jobs are independent; DPDLAB_THREADS > 1 runs them in a thread pool without
    affecting per-job determinism or the output ordering.
    """
    shapes = list(shapes)
    if not shapes:
        return []
    etas = [0.0] if cfg.model_kind == "ph" else list(etas)
    variants = [_sweep_variant(cfg, shape, eta, seed)
                for shape in shapes for eta in etas for seed in seeds]
    workers = int(os.environ.get("DPDLAB_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, variants))
    else:
        rows = [_sweep_job(v) for v in variants]
    rows.sort(key=lambda r: (r.flops, r.shape, r.eta_d, r.seed))
    return [noise_floor_report(cfg)] + rows


# ---------------------------------------------------------------------------
# Experiment manifest parsing


def _resolve_transmitter(token: str, base_dir: Path) -> TransmitterConfig:
    if token == "reference":
        return reference_transmitter()
    path = Path(token)
    if not path.is_absolute():
        path = base_dir / path
    return load_transmitter_config(path)


def experiment_from_entries(values: dict, source: str, base_dir: Path) -> tuple[ExperimentConfig, dict]:
    """Build an ExperimentConfig from manifest entries.

    Returns the config plus the raw sweep lists (``shapes``, ``etas``,
    ``seeds``), which are empty when the manifest does not define a sweep.
    """
    values = dict(values)
    tc = textconfig
    transmitter = _resolve_transmitter(
        tc.take_optional(values, "transmitter", str, "reference", source), base_dir)
    kind = tc.take_optional(values, "model.kind", str, "arden", source)
    net_shape = NetShape(
        memory=tc.take_optional(values, "model.memory", int, 3, source),
        hidden=tuple(tc.take_optional(values, "model.hidden", list, [8, 8, 8], source)),
        activation=tc.take_optional(values, "model.activation", str, "relu", source),
    )
    ph_shape = PhShape.uniform(
        tc.take_optional(values, "model.p", int, 7, source),
        tc.take_optional(values, "model.q", int, 3, source),
        tc.take_optional(values, "model.filter_length", int, 2, source),
    )
    train = TrainConfig(
        batch_size=tc.take_optional(values, "train.batch_size", int, 256, source),
        learning_rate=tc.take_optional(values, "train.learning_rate", float, 1e-3, source),
        adam_beta1=tc.take_optional(values, "train.adam_beta1", float, 0.9, source),
        adam_beta2=tc.take_optional(values, "train.adam_beta2", float, 0.999, source),
        adam_eps=tc.take_optional(values, "train.adam_eps", float, 1e-8, source),
        total_steps=tc.take_optional(values, "train.total_steps", int, 50_000, source),
    )
    signal = SignalSpec(
        num_samples=tc.take_optional(values, "signal.num_samples", int, 100_000, source),
        bandwidth_hz=tc.take_optional(values, "signal.bandwidth_hz", float, 10e6, source),
        sample_rate_hz=tc.take_optional(values, "signal.sample_rate_hz", float, 200e6, source),
        rms=tc.take_optional(values, "signal.rms", float, 0.25, source),
    )
    metrics = MetricSpec(
        spectrum=SpectrumConfig(
            fft_size=tc.take_optional(values, "metrics.fft_size", int, 4096, source),
            segment_overlap=tc.take_optional(values, "metrics.overlap", float, 0.5, source),
            window=tc.take_optional(values, "metrics.window", str, "hann", source),
        ),
        channel_bw_hz=tc.take_optional(values, "metrics.channel_bw_hz", float,
                                       signal.bandwidth_hz, source),
    )
    sweep_lists = {
        "shapes": tc.take_optional(values, "sweep.hidden", list, [], source),
        "ph_shapes": tc.take_optional(values, "sweep.ph", list, [], source),
        "etas": tc.take_optional(values, "sweep.eta", list, [0.0], source),
        "seeds": tc.take_optional(values, "sweep.seeds", list, [1], source),
    }
    try:
        cfg = ExperimentConfig(
            transmitter=transmitter,
            model_kind=kind,
            net_shape=net_shape,
            ph_shape=ph_shape,
            train=train,
            prune_eta=tc.take_optional(values, "prune.eta_d", float, 0.0, source),
            prune_delta_n=tc.take_optional(values, "prune.delta_n", int, 500, source),
            prune_output_layer=tc.take_optional(values, "prune.output_layer", bool, True, source),
            ila_iterations=tc.take_optional(values, "ila_iterations", int, 2, source),
            signal=signal,
            metrics=metrics,
            output_dir=Path(tc.take_optional(values, "output_dir", str, "dpdlab-out", source)),
            seed=tc.take_optional(values, "seed", int, 1, source),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    tc.ensure_consumed(values, source)
    return cfg, sweep_lists


def load_experiment(path: str | Path) -> tuple[ExperimentConfig, dict]:
    path = Path(path)
    values = textconfig.load_file(path)
    return experiment_from_entries(values, str(path), path.parent)
