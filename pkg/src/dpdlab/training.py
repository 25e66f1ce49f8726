"""Mini-batch training (backprop + Adam, MSE loss) and gradual magnitude pruning.

Pruning follows the cubic ramp eta_n = eta_d - eta_d * (1 - t)^3 with
t = floor(n / dN) / floor(N / dN), so the ramp starts at zero sparsity and
lands exactly on the target after the last pruning event. Masked weights stay
exactly 0.0: their gradients are zeroed and the mask is re-applied after every
optimizer step, so pruned connections can never come back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import ArdenNetwork, activation_grad


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    total_steps: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.total_steps < 1:
            raise ValueError("total_steps must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class PruneSchedule:
    """Target sparsity, pruning interval, and the total step count it spans."""

    eta_d: float
    delta_n: int
    total_steps: int

    def __post_init__(self):
        if not 0.0 <= self.eta_d < 1.0:
            raise ValueError("eta_d must lie in [0, 1)")
        if self.delta_n < 1:
            raise ValueError("delta_n must be at least 1")
        if self.total_steps < self.delta_n:
            raise ValueError("total_steps must allow at least one pruning event")


def sparsity_at(sched: PruneSchedule, n: int) -> float:
    """Scheduled sparsity after step n; cubic ramp over the pruning events."""
    if not 0 <= n <= sched.total_steps:
        raise ValueError(f"step {n} outside [0, {sched.total_steps}]")
    events_total = sched.total_steps // sched.delta_n
    t = (n // sched.delta_n) / events_total
    return sched.eta_d - sched.eta_d * (1.0 - t) ** 3


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of squared I error plus squared Q error."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 2 or pred.shape[1] != 2 or pred.shape[0] == 0:
        raise ValueError("expected a non-empty (batch, 2) array")
    diff = pred - target
    return float(np.mean(np.sum(diff * diff, axis=1)))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    shortcut: np.ndarray


def gradients(net: ArdenNetwork, windows: np.ndarray,
              targets: np.ndarray) -> tuple[float, Gradients]:
    """Loss and exact gradients of mse_loss for one batch.

    Gradients at masked weight positions are zeroed; the shortcut gradient is
    zero when the shortcut is disabled.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    batch = windows.shape[0]
    last = len(net.weights) - 1

    # Forward, keeping pre-activations for the backward sweep.
    inputs = [windows]
    pre_acts = []
    h = windows
    for k, (w, b, m) in enumerate(zip(net.weights, net.biases, net.masks)):
        z = h @ (m * w).T + b
        pre_acts.append(z)
        if k != last:
            h = np.maximum(z, 0.0) if net.activation == "relu" else z / (1.0 + np.abs(z))
            inputs.append(h)
        else:
            h = z
    out = h
    if net.shortcut_enabled:
        out = out + windows[:, :2] @ net.shortcut.T

    diff = out - targets
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    d_out = 2.0 * diff / batch

    grad_w = [np.zeros_like(w) for w in net.weights]
    grad_b = [np.zeros_like(b) for b in net.biases]
    grad_a = np.zeros((2, 2))
    if net.shortcut_enabled:
        grad_a = d_out.T @ windows[:, :2]

    delta = d_out
    for k in range(last, -1, -1):
        if k != last:
            delta = delta * activation_grad(net.activation, pre_acts[k])
        grad_w[k] = (delta.T @ inputs[k]) * net.masks[k]
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ (net.masks[k] * net.weights[k])
    return loss, Gradients(grad_w, grad_b, grad_a)


@dataclass
class AdamState:
    """First/second moment estimates for every trainable array."""

    step: int
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    m_shortcut: np.ndarray
    v_shortcut: np.ndarray

    @classmethod
    def for_network(cls, net: ArdenNetwork) -> "AdamState":
        return cls(
            step=0,
            m_weights=[np.zeros_like(w) for w in net.weights],
            v_weights=[np.zeros_like(w) for w in net.weights],
            m_biases=[np.zeros_like(b) for b in net.biases],
            v_biases=[np.zeros_like(b) for b in net.biases],
            m_shortcut=np.zeros((2, 2)),
            v_shortcut=np.zeros((2, 2)),
        )


def _adam_update(param, grad, m, v, cfg: TrainConfig, t: int) -> None:
    m *= cfg.adam_beta1
    m += (1.0 - cfg.adam_beta1) * grad
    v *= cfg.adam_beta2
    v += (1.0 - cfg.adam_beta2) * grad * grad
    m_hat = m / (1.0 - cfg.adam_beta1**t)
    v_hat = v / (1.0 - cfg.adam_beta2**t)
    param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def backprop_step(net: ArdenNetwork, windows: np.ndarray, targets: np.ndarray,
                  cfg: TrainConfig, state: AdamState) -> float:
    """One Adam step on a batch; mutates net and state, returns the batch loss."""
    loss, grads = gradients(net, windows, targets)
    state.step += 1
    t = state.step
    for k in range(len(net.weights)):
        _adam_update(net.weights[k], grads.weights[k],
                     state.m_weights[k], state.v_weights[k], cfg, t)
        _adam_update(net.biases[k], grads.biases[k],
                     state.m_biases[k], state.v_biases[k], cfg, t)
    if net.shortcut_enabled:
        _adam_update(net.shortcut, grads.shortcut,
                     state.m_shortcut, state.v_shortcut, cfg, t)
    net.apply_masks()
    return loss


def prune_layer(net: ArdenNetwork, layer_index: int, eta_n: float) -> None:
    """Mask the smallest-magnitude weights of one layer up to sparsity eta_n.

    The count is the cumulative ceil(N_w * eta_n); already-pruned weights stay
    pruned and equal magnitudes are broken by lowest flat index.
    """
    if not 0.0 <= eta_n <= 1.0:
        raise ValueError("eta_n must lie in [0, 1]")
    weights = net.weights[layer_index]
    mask = net.masks[layer_index]
    total = weights.size
    current = net.layer_sparsity(layer_index)
    if eta_n < current - 1e-12:
        raise ValueError(
            f"layer {layer_index}: target sparsity {eta_n:.4f} below current {current:.4f}"
        )
    target_zeros = math.ceil(total * eta_n)
    flat_mask = mask.ravel()
    needed = target_zeros - int(total - np.count_nonzero(flat_mask))
    if needed <= 0:
        return
    alive = np.flatnonzero(flat_mask)
    order = alive[np.argsort(np.abs(weights.ravel()[alive]), kind="stable")]
    kill = order[:needed]
    flat_mask[kill] = 0.0
    weights.ravel()[kill] = 0.0


def network_sparsity(net: ArdenNetwork) -> float:
    """Zeroed fraction over all maskable weights (the shortcut is excluded)."""
    zeros = sum(m.size - np.count_nonzero(m) for m in net.masks)
    total = sum(m.size for m in net.masks)
    return zeros / total


def live_flops(net: ArdenNetwork) -> int:
    """FLOPs of the net as currently masked: 2 per surviving weight, +8 shortcut."""
    alive = sum(int(np.count_nonzero(m)) for m in net.masks)
    return 2 * alive + (8 if net.shortcut_enabled else 0)


@dataclass
class HistoryRow:
    step: int
    loss: float
    eta_current: float
    flops_current: int


def train_with_pruning(net: ArdenNetwork, windows: np.ndarray, targets: np.ndarray,
                       cfg: TrainConfig, sched: PruneSchedule | None = None,
                       prune_output_layer: bool = True) -> list[HistoryRow]:
    """Run cfg.total_steps of training, pruning every sched.delta_n steps.

    Pruning events replace the training step. Layers already at or above the
    scheduled sparsity are left alone, so retraining a pruned network with the
    same schedule never resurrects masks. The shortcut is never pruned.
    Returns the per-step history; the network and its masks are updated in place.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if windows.shape[0] == 0:
        raise ValueError("empty training set")
    if sched is not None and sched.total_steps != cfg.total_steps:
        raise ValueError("schedule and train config disagree on total_steps")

    prunable = list(range(len(net.weights)))
    if not prune_output_layer:
        prunable = prunable[:-1]

    rng = np.random.default_rng(cfg.seed)
    num = windows.shape[0]
    batch = min(cfg.batch_size, num)
    order = rng.permutation(num)
    cursor = 0
    state = AdamState.for_network(net)

    history: list[HistoryRow] = []
    last_loss = math.nan
    for n in range(1, cfg.total_steps + 1):
        if sched is not None and n % sched.delta_n == 0:
            eta_n = sparsity_at(sched, n)
            for k in prunable:
                if eta_n > net.layer_sparsity(k):
                    prune_layer(net, k, eta_n)
        else:
            if cursor + batch > num:
                order = rng.permutation(num)
                cursor = 0
            idx = order[cursor : cursor + batch]
            cursor += batch
            last_loss = backprop_step(net, windows[idx], targets[idx], cfg, state)
        history.append(HistoryRow(n, last_loss, network_sparsity(net), live_flops(net)))
    return history


def save_history_csv(path: str | Path, history: list[HistoryRow]) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss,eta_current,flops_current\n")
        for row in history:
            fh.write(f"{row.step},{row.loss!r},{row.eta_current!r},{row.flops_current}\n")
