"""Extended parallel-Hammerstein baseline.

Static odd-order envelope polynomials followed by per-order FIR filters, with
an extra conjugate-signal branch that gives the model its image-compensation
ability. Identification is linear least squares over the stacked basis.

Basis column order is fixed: non-conjugate orders ascending with delays inner,
then conjugate orders ascending with delays inner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textconfig
from .signals import ComplexSignal
from .textconfig import ConfigError

CHECKPOINT_FORMAT = "ph-ckpt-v1"


class NumericalError(RuntimeError):
    """Raised when a solve is numerically unusable (rank deficiency, divergence)."""


def _odd_orders(limit: int) -> tuple[int, ...]:
    return tuple(range(1, limit + 1, 2))


@dataclass(frozen=True)
class PhShape:
    """Polynomial orders and per-order FIR lengths for both branches.

    ``p`` is the top odd order of the direct branch, ``q`` of the conjugate
    branch (0 drops the conjugate branch entirely). Length tuples align with
    the odd orders 1, 3, ..., p (resp. q).
    """

    p: int
    q: int
    lengths_main: tuple[int, ...]
    lengths_conj: tuple[int, ...]

    def __post_init__(self):
        if self.p < 1 or self.p % 2 == 0:
            raise ValueError("p must be a positive odd order")
        if self.q != 0 and (self.q < 1 or self.q % 2 == 0):
            raise ValueError("q must be a positive odd order, or 0 to drop the branch")
        main = tuple(int(v) for v in self.lengths_main)
        conj = tuple(int(v) for v in self.lengths_conj)
        if len(main) != len(_odd_orders(self.p)):
            raise ValueError("one filter length per odd order up to p required")
        if len(conj) != (len(_odd_orders(self.q)) if self.q else 0):
            raise ValueError("one filter length per odd order up to q required")
        if any(l < 1 for l in main + conj):
            raise ValueError("filter lengths must be at least 1")
        object.__setattr__(self, "lengths_main", main)
        object.__setattr__(self, "lengths_conj", conj)

    @classmethod
    def uniform(cls, p: int, q: int, length: int) -> "PhShape":
        return cls(p, q,
                   tuple(length for _ in _odd_orders(p)),
                   tuple(length for _ in _odd_orders(q)) if q else ())

    @property
    def num_columns(self) -> int:
        return sum(self.lengths_main) + sum(self.lengths_conj)

    @property
    def max_length(self) -> int:
        return max(self.lengths_main + self.lengths_conj)

    def descriptor(self) -> str:
        lengths = set(self.lengths_main) | set(self.lengths_conj)
        if len(lengths) == 1:
            return f"p{self.p}q{self.q}l{lengths.pop()}"
        main = ".".join(str(v) for v in self.lengths_main)
        conj = ".".join(str(v) for v in self.lengths_conj)
        return f"p{self.p}q{self.q}l{main}c{conj}"


@dataclass(frozen=True)
class PhModel:
    shape: PhShape
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != (self.shape.num_columns,):
            raise ValueError(
                f"expected {self.shape.num_columns} coefficients, got {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)


def ph_basis(x: ComplexSignal, shape: PhShape) -> np.ndarray:
    """Basis matrix, one row per usable time index n >= max filter length - 1."""
    xs = x.samples
    lead = shape.max_length - 1
    rows = xs.size - lead
    if rows < 1:
        raise ValueError("signal shorter than the longest filter")
    cols = []
    mag = np.abs(xs)
    for orders, lengths, conjugate in (
        (_odd_orders(shape.p), shape.lengths_main, False),
        (_odd_orders(shape.q) if shape.q else (), shape.lengths_conj, True),
    ):
        for order, length in zip(orders, lengths):
            base = mag ** (order - 1) * (np.conj(xs) if conjugate else xs)
            for delay in range(length):
                cols.append(base[lead - delay : xs.size - delay])
    return np.stack(cols, axis=1)


def ls_fit(basis: np.ndarray, target: np.ndarray,
           cond_limit: float = 1e8) -> np.ndarray:
    """Complex least-squares coefficients minimizing ||basis @ c - target||.

    Columns are equilibrated to unit norm before solving. Normal equations are
    used while the (equilibrated) basis condition estimate stays below
    ``cond_limit``; beyond that the solve falls back to QR-based lstsq. A
    rank-deficient basis raises NumericalError with the condition estimate.
    """
    basis = np.asarray(basis, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    if basis.ndim != 2 or basis.shape[0] < basis.shape[1]:
        raise ValueError("basis must be a tall (rows >= cols) matrix")
    if target.shape != (basis.shape[0],):
        raise ValueError("target length must match basis rows")
    scale = np.linalg.norm(basis, axis=0)
    if np.any(scale == 0.0):
        raise NumericalError("basis has an all-zero column (condition estimate inf)")
    scaled = basis / scale
    gram = scaled.conj().T @ scaled
    eigvals = np.linalg.eigvalsh(gram)
    if eigvals[0] <= 0.0 or eigvals[-1] / eigvals[0] > 1e16:
        cond = math.inf if eigvals[0] <= 0 else math.sqrt(eigvals[-1] / eigvals[0])
        raise NumericalError(f"basis is rank deficient (condition estimate {cond:.3e})")
    cond = math.sqrt(eigvals[-1] / eigvals[0])
    if cond <= cond_limit:
        coeffs = np.linalg.solve(gram, scaled.conj().T @ target)
        # one refinement step against the original system recovers the digits
        # lost to forming the normal equations
        correction = scaled.conj().T @ (target - scaled @ coeffs)
        coeffs += np.linalg.solve(gram, correction)
    else:
        coeffs, _, rank, _ = np.linalg.lstsq(scaled, target, rcond=None)
        if rank < basis.shape[1]:
            raise NumericalError(f"basis is rank deficient (condition estimate {cond:.3e})")
    return coeffs / scale


def ph_fit(x: ComplexSignal, target: ComplexSignal, shape: PhShape) -> PhModel:
    """Identify a PH model mapping x to target on the usable (post-lead) rows."""
    basis = ph_basis(x, shape)
    aligned = target.samples[shape.max_length - 1 :]
    return PhModel(shape, ls_fit(basis, aligned))


def ph_predict(x: ComplexSignal, model: PhModel) -> ComplexSignal:
    """Model output; warm-up samples before the longest filter pass through."""
    out = np.array(x.samples, copy=True)
    lead = model.shape.max_length - 1
    if x.samples.size <= lead:
        return x.with_samples(out)
    basis = ph_basis(x, model.shape)
    out[lead:] = basis @ model.coeffs
    return x.with_samples(out)


def ph_flops(p: int, q: int, lengths_main, lengths_conj=None) -> int:
    """Running FLOPs per output sample of the extended PH.

    Complex weights each cost 8 FLOPs (6 multiply + 2 add); the polynomial
    weight count, the filter parameter count (+1), and the envelope power
    chain max(p, q) - 1 follow the model's complexity accounting.
    """
    shape = _shape_from_lengths(p, q, lengths_main, lengths_conj)
    n_poly = (1 + (p + 1) / 2) * (p + 1) / 4
    if q:
        n_poly += (1 + (q + 1) / 2) * (q + 1) / 4
    n_filter = sum(shape.lengths_main) + sum(shape.lengths_conj) + 1
    return int(8 * (n_poly + n_filter) - 4 + 3 + (max(p, q) - 1))


def _shape_from_lengths(p: int, q: int, lengths_main, lengths_conj) -> PhShape:
    if isinstance(lengths_main, int):
        if lengths_conj is not None and not isinstance(lengths_conj, int):
            raise ValueError("mixed scalar/sequence filter lengths")
        conj = lengths_conj if lengths_conj is not None else lengths_main
        return PhShape(p, q,
                       tuple(lengths_main for _ in _odd_orders(p)),
                       tuple(conj for _ in _odd_orders(q)) if q else ())
    main = tuple(lengths_main)
    conj = tuple(lengths_conj) if lengths_conj is not None else ()
    return PhShape(p, q, main, conj)


def ph_model_flops(model: PhModel) -> int:
    shape = model.shape
    return ph_flops(shape.p, shape.q, shape.lengths_main, shape.lengths_conj)


# ---------------------------------------------------------------------------
# Checkpoint I/O


def ph_to_entries(model: PhModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "p": model.shape.p,
        "q": model.shape.q,
        "lengths_main": list(model.shape.lengths_main),
        "lengths_conj": list(model.shape.lengths_conj),
        "coeffs": [[c.real, c.imag] for c in model.coeffs],
    }


def ph_from_entries(values: dict, source: str = "checkpoint") -> PhModel:
    values = dict(values)
    fmt = textconfig.take(values, "format", str, source)
    if fmt != CHECKPOINT_FORMAT:
        raise ConfigError(f"{source}: unsupported checkpoint format {fmt!r}")
    shape = PhShape(
        p=textconfig.take(values, "p", int, source),
        q=textconfig.take(values, "q", int, source),
        lengths_main=tuple(textconfig.take(values, "lengths_main", list, source)),
        lengths_conj=tuple(textconfig.take(values, "lengths_conj", list, source)),
    )
    raw = textconfig.take(values, "coeffs", list, source)
    coeffs = np.asarray([complex(re, im) for re, im in raw])
    textconfig.ensure_consumed(values, source)
    return PhModel(shape, coeffs)


def save_ph(path: str | Path, model: PhModel) -> None:
    textconfig.save_file(path, ph_to_entries(model), header="parallel-Hammerstein checkpoint")


def load_ph(path: str | Path) -> PhModel:
    return ph_from_entries(textconfig.load_file(path), source=str(path))
