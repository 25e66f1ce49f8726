"""Real-valued time-delay MLP with binary connection masks and a trainable
2x2 shortcut from the current-sample I/Q inputs straight to the outputs.

Layer k holds a weight matrix of shape (dims[k], dims[k-1]); hidden layers
apply the activation, the output layer is linear. Masked weights are kept at
exactly 0.0 and the mask is re-applied inside every forward pass, so a stale
value behind a zero mask can never leak into the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textconfig
from .signals import ComplexSignal
from .textconfig import ConfigError

CHECKPOINT_FORMAT = "arden-ckpt-v1"

ACTIVATIONS = ("relu", "softsign")


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths dims[0..K-1]; dims[0] = 2(M+1) input taps, dims[-1] = 2."""

    dims: tuple[int, ...]
    memory: int

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise ValueError("need at least input and output layers")
        if any(d < 1 for d in dims):
            raise ValueError("layer widths must be positive")
        if self.memory < 0:
            raise ValueError("memory must be nonnegative")
        if dims[0] != 2 * (self.memory + 1):
            raise ValueError("input width must equal 2*(memory+1)")
        if dims[-1] != 2:
            raise ValueError("output width must be 2 (I and Q)")
        object.__setattr__(self, "dims", dims)


class ArdenNetwork:
    """Masked MLP with optional identity-initialized 2x2 input/output shortcut."""

    def __init__(self, spec: LayerSpec, weights: list[np.ndarray], biases: list[np.ndarray],
                 masks: list[np.ndarray], shortcut: np.ndarray, shortcut_enabled: bool,
                 activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        dims = spec.dims
        if len(weights) != len(dims) - 1 or len(biases) != len(weights) or len(masks) != len(weights):
            raise ValueError("one weight/bias/mask set per non-input layer required")
        for k, (w, b, m) in enumerate(zip(weights, biases, masks)):
            want = (dims[k + 1], dims[k])
            if w.shape != want or m.shape != want or b.shape != (dims[k + 1],):
                raise ValueError(f"layer {k + 2}: shape mismatch, expected {want}")
        if shortcut.shape != (2, 2):
            raise ValueError("shortcut matrix must be 2x2")
        self.spec = spec
        self.weights = weights
        self.biases = biases
        self.masks = masks
        self.shortcut = shortcut
        self.shortcut_enabled = bool(shortcut_enabled)
        self.activation = activation

    @property
    def dims(self) -> tuple[int, ...]:
        return self.spec.dims

    @property
    def memory(self) -> int:
        return self.spec.memory

    def num_layers(self) -> int:
        return len(self.spec.dims)

    def copy(self) -> "ArdenNetwork":
        return ArdenNetwork(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [m.copy() for m in self.masks],
            self.shortcut.copy(),
            self.shortcut_enabled,
            self.activation,
        )

    def layer_sparsity(self, index: int) -> float:
        """Fraction of masked-out weights in layer ``index`` (0-based)."""
        mask = self.masks[index]
        return 1.0 - float(np.count_nonzero(mask)) / mask.size

    def apply_masks(self) -> None:
        """Force masked weight entries back to exactly 0.0."""
        for w, m in zip(self.weights, self.masks):
            w *= m


def _activation_fn(name: str):
    if name == "relu":
        return lambda z: np.maximum(z, 0.0)
    return lambda z: z / (1.0 + np.abs(z))


def activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    """Derivative of the hidden activation; ReLU subgradient at 0 is 0."""
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 / (1.0 + np.abs(z)) ** 2


def build_network(memory: int, hidden_dims, activation: str = "relu",
                  shortcut_enabled: bool = True, seed: int = 0) -> ArdenNetwork:
    """He-uniform seeded init, zero biases, all-ones masks, identity shortcut."""
    hidden = tuple(int(d) for d in hidden_dims)
    spec = LayerSpec(dims=(2 * (memory + 1), *hidden, 2), memory=memory)
    rng = np.random.default_rng(seed)
    weights, biases, masks = [], [], []
    dims = spec.dims
    for k in range(len(dims) - 1):
        fan_in = dims[k]
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(dims[k + 1], dims[k])))
        biases.append(np.zeros(dims[k + 1]))
        masks.append(np.ones((dims[k + 1], dims[k])))
    return ArdenNetwork(spec, weights, biases, masks, np.eye(2), shortcut_enabled, activation)


def window_signal(x: ComplexSignal, memory: int) -> np.ndarray:
    """Tapped-delay input windows, one row per time index n in [memory, len).

    Row layout: [I(n), Q(n), I(n-1), Q(n-1), ..., I(n-M), Q(n-M)].
    """
    n = len(x)
    if n <= memory:
        raise ValueError(f"signal length {n} too short for memory {memory}")
    rows = n - memory
    out = np.empty((rows, 2 * (memory + 1)))
    for lag in range(memory + 1):
        segment = x.samples[memory - lag : n - lag]
        out[:, 2 * lag] = segment.real
        out[:, 2 * lag + 1] = segment.imag
    return out


def forward_batch(net: ArdenNetwork, windows: np.ndarray) -> np.ndarray:
    """Forward pass over a (batch, dims[0]) window matrix -> (batch, 2)."""
    act = _activation_fn(net.activation)
    h = windows
    last = len(net.weights) - 1
    for k, (w, b, m) in enumerate(zip(net.weights, net.biases, net.masks)):
        h = h @ (m * w).T + b
        if k != last:
            h = act(h)
    if net.shortcut_enabled:
        h = h + windows[:, :2] @ net.shortcut.T
    return h


def forward(net: ArdenNetwork, window: np.ndarray) -> tuple[float, float]:
    """Single-window forward pass returning the (I, Q) output pair."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (net.dims[0],):
        raise ValueError(f"window must have length {net.dims[0]}")
    out = forward_batch(net, window[None, :])[0]
    return float(out[0]), float(out[1])


def predistort(net: ArdenNetwork, u: ComplexSignal) -> ComplexSignal:
    """Apply the network sample-wise; the first M samples pass through as-is."""
    memory = net.memory
    out = np.array(u.samples, copy=True)
    windows = window_signal(u, memory)
    pred = forward_batch(net, windows)
    out[memory:] = pred[:, 0] + 1j * pred[:, 1]
    return u.with_samples(out)


def flops_for_dims(dims, eta_d: float = 0.0, shortcut_enabled: bool = True) -> int:
    """Running cost per output sample: one FLOP per real multiply or add.

    2*(1 - eta_d) * sum(dims[k] * dims[k+1]) for the masked dense layers, plus
    8 for the 2x2 shortcut when enabled. The sparse term is rounded to the
    nearest integer since arbitrary sparsities make it fractional.
    """
    if not 0.0 <= eta_d <= 1.0:
        raise ValueError("eta_d must lie in [0, 1]")
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("need at least two layers")
    dense = sum(dims[k] * dims[k + 1] for k in range(len(dims) - 1))
    total = int(round(2.0 * (1.0 - eta_d) * dense))
    return total + 8 if shortcut_enabled else total


def flops(net: ArdenNetwork, eta_d: float = 0.0) -> int:
    return flops_for_dims(net.dims, eta_d, net.shortcut_enabled)


def realized_flops(dims, eta_d: float = 0.0, shortcut_enabled: bool = True) -> int:
    """FLOPs of a net actually pruned to eta_d: ceil(size * eta) zeros per layer.

    Matches the cost of a masked network after the pruning schedule completes;
    equals flops_for_dims whenever the per-layer zero counts land on integers.
    """
    if not 0.0 <= eta_d <= 1.0:
        raise ValueError("eta_d must lie in [0, 1]")
    dims = tuple(int(d) for d in dims)
    alive = 0
    for k in range(len(dims) - 1):
        size = dims[k] * dims[k + 1]
        alive += size - int(np.ceil(size * eta_d))
    return 2 * alive + (8 if shortcut_enabled else 0)


# ---------------------------------------------------------------------------
# Checkpoint I/O


def _mask_to_bits(mask: np.ndarray) -> str:
    return "".join("1" if v else "0" for v in mask.ravel())


def network_to_entries(net: ArdenNetwork) -> dict:
    entries: dict = {
        "format": CHECKPOINT_FORMAT,
        "dims": list(net.dims),
        "memory": net.memory,
        "activation": net.activation,
        "shortcut_enabled": net.shortcut_enabled,
        "wa": [float(v) for v in net.shortcut.ravel()],
    }
    for k, (w, b, m) in enumerate(zip(net.weights, net.biases, net.masks), start=2):
        entries[f"w{k}"] = [float(v) for v in w.ravel()]
        entries[f"b{k}"] = [float(v) for v in b.ravel()]
        entries[f"m{k}"] = _mask_to_bits(m)
    return entries


def network_from_entries(values: dict, source: str = "checkpoint") -> ArdenNetwork:
    values = dict(values)
    fmt = textconfig.take(values, "format", str, source)
    if fmt != CHECKPOINT_FORMAT:
        raise ConfigError(f"{source}: unsupported checkpoint format {fmt!r}")
    dims = tuple(textconfig.take(values, "dims", list, source))
    memory = textconfig.take(values, "memory", int, source)
    activation = textconfig.take(values, "activation", str, source)
    shortcut_enabled = textconfig.take(values, "shortcut_enabled", bool, source)
    wa = np.asarray(textconfig.take(values, "wa", list, source), dtype=np.float64)
    spec = LayerSpec(dims=dims, memory=memory)
    weights, biases, masks = [], [], []
    for k in range(2, len(dims) + 1):
        shape = (dims[k - 1], dims[k - 2])
        w = np.asarray(textconfig.take(values, f"w{k}", list, source), dtype=np.float64)
        b = np.asarray(textconfig.take(values, f"b{k}", list, source), dtype=np.float64)
        bits = textconfig.take(values, f"m{k}", str, source)
        if w.size != shape[0] * shape[1] or b.size != shape[0] or len(bits) != w.size:
            raise ConfigError(f"{source}: layer {k} arrays have wrong size")
        if set(bits) - {"0", "1"}:
            raise ConfigError(f"{source}: mask m{k} must be a bitstring")
        weights.append(w.reshape(shape))
        biases.append(b)
        masks.append(np.asarray([c == "1" for c in bits], dtype=np.float64).reshape(shape))
    textconfig.ensure_consumed(values, source)
    net = ArdenNetwork(spec, weights, biases, masks, wa.reshape(2, 2),
                       shortcut_enabled, activation)
    net.apply_masks()
    return net


def save_network(path: str | Path, net: ArdenNetwork) -> None:
    textconfig.save_file(path, network_to_entries(net), header="network checkpoint")


def load_network(path: str | Path) -> ArdenNetwork:
    return network_from_entries(textconfig.load_file(path), source=str(path))
