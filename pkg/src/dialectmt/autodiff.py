"""Reverse-mode differentiation on a dynamic tape.

Tensors wrap float64 numpy arrays. While a tape is active, every op appends
(output, backward closure) records in creation order; ``Tape.backward`` walks
them in exact reverse order and accumulates gradients into the inputs. Only
the operations the translation model needs are provided; every registered op
is verifiable against central finite differences via :func:`gradient_check`.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyInputError, InstabilityError

__all__ = [
    "Tensor",
    "Tape",
    "record",
    "no_grad",
    "matmul",
    "transpose",
    "add",
    "mul",
    "scale",
    "relu",
    "concat_cols",
    "slice_cols",
    "embedding",
    "softmax_rows",
    "layer_norm",
    "cross_entropy",
    "mse_loss",
    "gradient_check",
    "GradCheckReport",
]

LAYER_NORM_EPS = 1e-5


class Tensor:
    """n-dimensional float64 value with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of op applications; backward runs in reverse order."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, object]] = []

    def append(self, out: Tensor, backward_fn):
        self.nodes.append((out, backward_fn))

    def backward(self, loss: Tensor):
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, backward_fn in reversed(self.nodes):
            if out.grad is not None:
                backward_fn(out.grad)


_TAPE: Tape | None = None


@contextmanager
def record():
    """Activate a fresh tape for the duration of the block."""
    global _TAPE
    prev, _TAPE = _TAPE, Tape()
    try:
        yield _TAPE
    finally:
        _TAPE = prev


@contextmanager
def no_grad():
    """Suspend recording (e.g. the first glancing pass, inference)."""
    global _TAPE
    prev, _TAPE = _TAPE, None
    try:
        yield
    finally:
        _TAPE = prev


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _accum(t, g: np.ndarray):
    """Add a gradient contribution; nodes feeding several consumers sum."""
    if isinstance(t, Tensor) and t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _make_out(value: np.ndarray, inputs, backward_fn) -> Tensor:
    tracked = _TAPE is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    out = Tensor(value, requires_grad=tracked)
    if tracked:
        _TAPE.append(out, backward_fn)
    return out


def matmul(a, b) -> Tensor:
    """Matrix product; backward is dA = dC @ B^T, dB = A^T @ dC."""
    av, bv = _as_array(a), _as_array(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {av.shape} x {bv.shape}")

    def backward(g):
        _accum(a, g @ bv.T)
        _accum(b, av.T @ g)

    return _make_out(av @ bv, (a, b), backward)


def transpose(a) -> Tensor:
    av = _as_array(a)

    def backward(g):
        _accum(a, g.T)

    return _make_out(av.T, (a,), backward)


def add(a, b) -> Tensor:
    """Elementwise sum. Either operand may be a plain array (no gradient);
    a 1-D second operand broadcasts over rows (bias add)."""
    av, bv = _as_array(a), _as_array(b)

    def backward(g):
        _accum(a, g)
        if isinstance(b, Tensor):
            _accum(b, g.sum(axis=0) if b.data.ndim < g.ndim else g)

    return _make_out(av + bv, (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product, same-shape or constant operand."""
    av, bv = _as_array(a), _as_array(b)

    def backward(g):
        _accum(a, g * bv)
        if isinstance(b, Tensor):
            _accum(b, g * av)

    return _make_out(av * bv, (a, b), backward)


def scale(a, c: float) -> Tensor:
    av = _as_array(a)

    def backward(g):
        _accum(a, g * c)

    return _make_out(av * c, (a,), backward)


def relu(a) -> Tensor:
    av = _as_array(a)
    pos = av > 0

    def backward(g):
        _accum(a, g * pos)

    return _make_out(np.where(pos, av, 0.0), (a,), backward)


def concat_cols(parts) -> Tensor:
    """Concatenate 2-D tensors along the feature (last) axis."""
    parts = list(parts)
    arrays = [_as_array(p) for p in parts]
    widths = [x.shape[1] for x in arrays]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, lo:hi])

    return _make_out(np.concatenate(arrays, axis=1), tuple(parts), backward)


def slice_cols(a, start: int, stop: int) -> Tensor:
    av = _as_array(a)

    def backward(g):
        full = np.zeros_like(av)
        full[:, start:stop] = g
        _accum(a, full)

    return _make_out(av[:, start:stop].copy(), (a,), backward)


def embedding(table, ids) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds into the table."""
    tv = _as_array(table)
    idx = np.asarray(ids, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= tv.shape[0]):
        raise DimensionError(
            f"embedding ids out of range [0, {tv.shape[0]}): {idx.min()}..{idx.max()}"
        )

    def backward(g):
        if isinstance(table, Tensor) and table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(tv)
            np.add.at(table.grad, idx, g)

    return _make_out(tv[idx], (table,), backward)


def softmax_rows(a) -> Tensor:
    """Row-wise softmax with max-subtraction for stability."""
    av = _as_array(a)
    shifted = av - av.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        _accum(a, out * (g - dot))

    return _make_out(out, (a,), backward)


def layer_norm(a, gain, bias) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    av = _as_array(a)
    d = av.shape[-1]
    if d < 2:
        raise DimensionError(f"layer_norm needs last dimension >= 2, got {d}")
    gv, bv = _as_array(gain), _as_array(bias)
    mean = av.mean(axis=-1, keepdims=True)
    centered = av - mean
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = centered * inv_std
    out = xhat * gv + bv

    def backward(g):
        gx = g * gv
        # d/dx of (x - mean) * inv_std, folding the mean and variance paths
        dx = inv_std * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        _accum(a, dx)
        axes = tuple(range(av.ndim - 1))
        if isinstance(gain, Tensor):
            _accum(gain, (g * xhat).sum(axis=axes))
        if isinstance(bias, Tensor):
            _accum(bias, g.sum(axis=axes))

    return _make_out(out, (a, gain, bias), backward)


def cross_entropy(logits, targets, ignore_mask=None) -> Tensor:
    """Mean negative log-softmax of the target ids over unmasked rows."""
    lv = _as_array(logits)
    tgt = np.asarray(targets, dtype=np.intp)
    m, v = lv.shape
    if tgt.shape != (m,):
        raise DimensionError(f"targets shape {tgt.shape} does not match {m} rows")
    if tgt.size and tgt.max() >= v:
        raise DimensionError(f"target id {tgt.max()} outside vocabulary of {v}")
    keep = np.ones(m, dtype=bool)
    if ignore_mask is not None:
        keep = ~np.asarray(ignore_mask, dtype=bool)
    if not keep.any():
        raise EmptyInputError("cross_entropy: every position is masked")
    shifted = lv - lv.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    n = int(keep.sum())
    loss = -log_probs[keep, tgt[keep]].sum() / n

    def backward(g):
        probs = np.exp(log_probs)
        grad = probs.copy()
        grad[np.arange(m), tgt] -= 1.0
        grad[~keep] = 0.0
        _accum(logits, grad * (float(g) / n))

    return _make_out(loss, (logits,), backward)


def mse_loss(x, y, mask=None) -> Tensor:
    """Mean of elementwise squared differences; optional cell mask."""
    xv, yv = _as_array(x), _as_array(y)
    if xv.shape != yv.shape:
        raise DimensionError(f"mse_loss shapes differ: {xv.shape} vs {yv.shape}")
    keep = np.ones(xv.shape, dtype=bool) if mask is None else np.asarray(mask, bool)
    if not keep.any():
        raise EmptyInputError("mse_loss: every cell is masked")
    n = int(keep.sum())
    diff = np.where(keep, xv - yv, 0.0)
    loss = (diff ** 2).sum() / n

    def backward(g):
        _accum(x, diff * (2.0 * float(g) / n))
        _accum(y, diff * (-2.0 * float(g) / n))

    return _make_out(loss, (x, y), backward)


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference comparison."""

    max_rel_error: float
    tolerance: float
    per_input: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(op, input_shapes, tolerance: float = 1e-4,
                   eps: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of ``op`` against central differences.

    ``op`` takes len(input_shapes) tensors and returns one tensor; the check
    reduces the output to a scalar through a fixed random projection so a
    single backward covers the whole Jacobian along one direction.
    """
    rng = np.random.default_rng(seed)
    values = [rng.standard_normal(s) for s in input_shapes]
    inputs = [Tensor(v, requires_grad=True) for v in values]
    proj = None

    def run(arrays) -> float:
        nonlocal proj
        with no_grad():
            out = op(*[Tensor(v) for v in arrays])
        if proj is None:
            proj = rng.standard_normal(out.data.shape)
        val = float((out.data * proj).sum())
        if not np.isfinite(val):
            raise InstabilityError("non-finite value during gradient check")
        return val

    run(values)  # fixes the projection before differencing

    with record() as tape:
        out = op(*inputs)
    # seed the op output with the projection direction and walk the tape
    out.grad = proj.copy()
    for node, backward_fn in reversed(tape.nodes):
        if node.grad is not None:
            backward_fn(node.grad)

    max_rel = 0.0
    per_input = []
    for t, base in zip(inputs, values):
        analytic = t.grad if t.grad is not None else np.zeros_like(base)
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = run(values)
            flat[i] = orig - eps
            lo = run(values)
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2 * eps)
        if not (np.isfinite(analytic).all() and np.isfinite(numeric).all()):
            raise InstabilityError("non-finite gradient during gradient check")
        denom = np.linalg.norm(analytic) + np.linalg.norm(numeric) + 1e-12
        rel = float(np.linalg.norm(analytic - numeric) / denom)
        per_input.append(rel)
        max_rel = max(max_rel, rel)
    return GradCheckReport(max_rel_error=max_rel, tolerance=tolerance,
                           per_input=per_input)
