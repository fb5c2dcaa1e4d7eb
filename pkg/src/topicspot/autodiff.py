"""Tape-based reverse-mode automatic differentiation over dense float64 tensors.

Ops execute eagerly on numpy arrays. While a Tape is active, each op that
touches a grad-requiring tensor appends a backward closure to the tape;
the recording order is the topological order, so backward simply replays
the closures in reverse. Without an active tape, ops are pure forward
computations (used for inference and for the finite-difference oracle).

Supported shapes are 0-d scalars, 1-d vectors and 2-d matrices, which is
all the model math needs. Broadcasting is deliberately limited to bias
addition (matrix + row vector, vector + scalar).
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .errors import NumericalError, ShapeError
from .rng import Rng

PROB_FLOOR = 1e-12


class Tensor:
    """Shape-tagged float64 array with an optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


# active tape is thread-local: tapes are single-threaded, and inference on
# other threads must never record onto a training thread's tape
_STATE = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_STATE, "tape", None)


class Tape:
    """Ordered record of executed ops; backward replays it in reverse."""

    def __init__(self):
        self._ops: list[tuple[Tensor, object]] = []
        self._consumed = False
        self._prev = None

    def __enter__(self) -> "Tape":
        self._prev = _active_tape()
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _STATE.tape = self._prev
        self._prev = None

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        if self._consumed:
            raise ValueError("tape already consumed by a previous backward pass")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._ops):
            if out.grad is not None:
                fn(out.grad)


def backward(loss: Tensor) -> None:
    """Populate .grad on every grad-requiring tensor the loss depends on."""
    if loss.tape is None:
        raise ValueError("loss was not recorded on a tape")
    loss.tape.backward(loss)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], fn) -> Tensor:
    """Wrap an op result, recording its backward closure if a tape is live."""
    t = _active_tape()
    track = t is not None and any(x.requires_grad for x in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        out.tape = t
        t._ops.append((out, fn(out)))
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product with numpy matmul semantics on 1-d/2-d operands."""
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-d/2-d operands, got {ad.shape} @ {bd.shape}")
    inner_a = ad.shape[-1]
    inner_b = bd.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")
    out_data = ad @ bd

    def fn(out):
        def run(g):
            if a.requires_grad:
                if ad.ndim == 2 and bd.ndim == 2:
                    a.accumulate(g @ bd.T)
                elif ad.ndim == 2 and bd.ndim == 1:
                    a.accumulate(np.outer(g, bd))
                elif ad.ndim == 1 and bd.ndim == 2:
                    a.accumulate(bd @ g)
                else:
                    a.accumulate(g * bd)
            if b.requires_grad:
                if ad.ndim == 2 and bd.ndim == 2:
                    b.accumulate(ad.T @ g)
                elif ad.ndim == 2 and bd.ndim == 1:
                    b.accumulate(ad.T @ g)
                elif ad.ndim == 1 and bd.ndim == 2:
                    b.accumulate(np.outer(ad, g))
                else:
                    b.accumulate(g * ad)
        return run

    return _make(out_data, (a, b), fn)


def _bias_mode(x: np.ndarray, y: np.ndarray) -> str:
    """Classify an add/sub operand pair: equal shapes, row bias, or scalar bias."""
    if x.shape == y.shape:
        return "equal"
    if x.ndim == 2 and y.ndim == 1 and x.shape[1] == y.shape[0]:
        return "row"
    if y.ndim == 0:
        return "scalar"
    raise ShapeError(f"incompatible elementwise shapes: {x.shape} vs {y.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    mode = _bias_mode(a.data, b.data)
    out_data = a.data + b.data

    def fn(out):
        def run(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                if mode == "equal":
                    b.accumulate(g)
                elif mode == "row":
                    b.accumulate(g.sum(axis=0))
                else:
                    b.accumulate(np.asarray(g.sum()))
        return run

    return _make(out_data, (a, b), fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    mode = _bias_mode(a.data, b.data)
    out_data = a.data - b.data

    def fn(out):
        def run(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                if mode == "equal":
                    b.accumulate(-g)
                elif mode == "row":
                    b.accumulate(-g.sum(axis=0))
                else:
                    b.accumulate(np.asarray(-g.sum()))
        return run

    return _make(out_data, (a, b), fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul requires equal shapes, got {a.data.shape} vs {b.data.shape}")
    ad, bd = a.data, b.data
    out_data = ad * bd

    def fn(out):
        def run(g):
            if a.requires_grad:
                a.accumulate(g * bd)
            if b.requires_grad:
                b.accumulate(g * ad)
        return run

    return _make(out_data, (a, b), fn)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def fn(out):
        od = out.data

        def run(g):
            if x.requires_grad:
                x.accumulate(g * (1.0 - od * od))
        return run

    return _make(out_data, (x,), fn)


def sigmoid(x: Tensor) -> Tensor:
    # exp on the negative branch only, so large |x| cannot overflow
    xd = x.data
    out_data = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))),
                        np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))

    def fn(out):
        od = out.data

        def run(g):
            if x.requires_grad:
                x.accumulate(g * od * (1.0 - od))
        return run

    return _make(out_data, (x,), fn)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax of a 1-d tensor; output sums to 1 and is shift-invariant."""
    if x.data.ndim != 1 or x.data.size == 0:
        raise ShapeError(f"softmax requires a non-empty 1-d tensor, got shape {x.data.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    out_data = e / e.sum()

    def fn(out):
        s = out.data

        def run(g):
            if x.requires_grad:
                x.accumulate(s * (g - np.dot(g, s)))
        return run

    return _make(out_data, (x,), fn)


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim:
        raise ShapeError(f"concat rank mismatch: {ad.shape} vs {bd.shape}")
    for dim in range(ad.ndim):
        if dim != axis % max(ad.ndim, 1) and ad.shape[dim] != bd.shape[dim]:
            raise ShapeError(f"concat non-axis dims disagree: {ad.shape} vs {bd.shape}")
    out_data = np.concatenate([ad, bd], axis=axis)
    split = ad.shape[axis]

    def fn(out):
        def run(g):
            ga, gb = np.split(g, [split], axis=axis)
            if a.requires_grad:
                a.accumulate(ga)
            if b.requires_grad:
                b.accumulate(gb)
        return run

    return _make(out_data, (a, b), fn)


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal length into a 2-d matrix, one per row."""
    if not rows:
        raise ShapeError("stack_rows requires at least one row")
    n = rows[0].data.shape
    for r in rows:
        if r.data.ndim != 1 or r.data.shape != n:
            raise ShapeError("stack_rows requires equal-length 1-d tensors")
    out_data = np.stack([r.data for r in rows])

    def fn(out):
        def run(g):
            for i, r in enumerate(rows):
                if r.requires_grad:
                    r.accumulate(g[i])
        return run

    return _make(out_data, tuple(rows), fn)


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError(f"slice1d requires a 1-d tensor, got shape {x.data.shape}")
    out_data = x.data[start:stop].copy()

    def fn(out):
        def run(g):
            if x.requires_grad:
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[start:stop] += g
        return run

    return _make(out_data, (x,), fn)


def row(x: Tensor, i: int) -> Tensor:
    """Extract row i of a 2-d tensor as a 1-d tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"row requires a 2-d tensor, got shape {x.data.shape}")
    if not 0 <= i < x.data.shape[0]:
        raise IndexError(f"row {i} out of range for shape {x.data.shape}")
    out_data = x.data[i].copy()

    def fn(out):
        def run(g):
            if x.requires_grad:
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[i] += g
        return run

    return _make(out_data, (x,), fn)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose requires a 2-d tensor, got shape {x.data.shape}")
    out_data = x.data.T.copy()

    def fn(out):
        def run(g):
            if x.requires_grad:
                x.accumulate(g.T)
        return run

    return _make(out_data, (x,), fn)


def tensor_sum(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum())

    def fn(out):
        def run(g):
            if x.requires_grad:
                x.accumulate(np.broadcast_to(g, x.data.shape))
        return run

    return _make(out_data, (x,), fn)


def nll_loss(probs: Tensor, label: int) -> Tensor:
    """Negative log likelihood of a class under an explicit distribution.

    Probabilities are floored at PROB_FLOOR before the log; a floored entry
    contributes zero gradient.
    """
    if probs.data.ndim != 1:
        raise ShapeError(f"nll_loss requires a 1-d distribution, got shape {probs.data.shape}")
    if not 0 <= label < probs.data.shape[0]:
        raise IndexError(f"label {label} out of range for {probs.data.shape[0]} classes")
    p = probs.data[label]
    clamped = max(p, PROB_FLOOR)
    out_data = np.asarray(-math.log(clamped))

    def fn(out):
        def run(g):
            if probs.requires_grad and p > PROB_FLOOR:
                if probs.grad is None:
                    probs.grad = np.zeros_like(probs.data)
                probs.grad[label] += -float(g) / p
        return run

    return _make(out_data, (probs,), fn)


def softmax_nll(logits: Tensor, label: int) -> Tensor:
    """Fused log-space softmax + NLL; backward is (softmax - onehot)."""
    ld = logits.data
    if ld.ndim != 1 or ld.size == 0:
        raise ShapeError(f"softmax_nll requires a non-empty 1-d tensor, got shape {ld.shape}")
    if not 0 <= label < ld.shape[0]:
        raise IndexError(f"label {label} out of range for {ld.shape[0]} classes")
    m = ld.max()
    lse = m + math.log(np.exp(ld - m).sum())
    out_data = np.asarray(lse - ld[label])

    def fn(out):
        def run(g):
            if logits.requires_grad:
                s = np.exp(ld - m)
                s /= s.sum()
                s[label] -= 1.0
                logits.accumulate(float(g) * s)
        return run

    return _make(out_data, (logits,), fn)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


def grad_check(f, params: list[Tensor], eps: float = 1e-5,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Max symmetric relative error between tape gradients and central differences.

    ``f`` must be a deterministic closure over ``params`` returning a scalar
    Tensor. Error per coordinate is |g_ad - g_fd| / max(1, |g_ad| + |g_fd|).
    ``max_coords`` caps the number of coordinates checked per parameter,
    chosen by a seeded selector.
    """
    zero_grads(params)
    with Tape():
        loss = f()
    if not np.isfinite(loss.data):
        raise NumericalError("objective is non-finite at the evaluation point")
    backward(loss)

    rng = Rng(seed).derive("gradcheck")
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        if not np.shares_memory(flat, p.data):  # perturbation must hit the live array
            p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        gflat = grad.reshape(-1)
        indices = list(range(flat.size))
        if max_coords is not None and flat.size > max_coords:
            rng.shuffle(indices)
            indices = indices[:max_coords]
        for i in indices:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f().data)
            flat[i] = orig - eps
            f_minus = float(f().data)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericalError("objective became non-finite during perturbation")
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g_ad = gflat[i]
            err = abs(g_ad - g_fd) / max(1.0, abs(g_ad) + abs(g_fd))
            if err > worst:
                worst = err
    return worst
