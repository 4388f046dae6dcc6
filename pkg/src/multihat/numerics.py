"""Dense float64 tensors with an explicit reverse-mode gradient tape.

Everything downstream (model, losses, training) is built on the small set
of operations in this module.  Design points:

* float64 everywhere; desk-scale sizes make precision cheaper than
  debugging and allow tight gradient-check tolerances,
* tensors are rank 0..2 and immutable once produced by an op,
* ops record onto the innermost active :class:`Tape`; with no active tape
  they evaluate eagerly (used for decoding and finite differences),
* the backward pass replays the recorded operations in exact reverse
  order, accumulating into ``Tensor.grad``,
* every op output is checked for NaN/Inf so numeric failures surface at
  the op that produced them.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

Array = np.ndarray


class Tensor:
    """A rank-0..2 array of float64 values plus an accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are limited to rank 2, got shape {arr.shape}")
        self.data = arr
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, data={self.data!r})"


# --------------------------------------------------------------------------
# Tape
# --------------------------------------------------------------------------

_TAPE_STACK: list["Tape"] = []

# A node is (op name, output, inputs, backward).  backward maps the output
# gradient to one gradient array (or None) per input.
_Node = tuple[str, Tensor, tuple[Tensor, ...], Callable[[Array], tuple]]


class Tape:
    """Ordered record of operations for one forward pass.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded.  ``backward`` must be called after the block (or inside it)
    with the scalar loss produced by those ops.
    """

    def __init__(self) -> None:
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must be exited in LIFO order"

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def op_names(self) -> list[str]:
        return [name for name, _, _, _ in self._nodes]

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into ``.grad`` of every tensor on a
        path to ``loss``, visiting ops in exact reverse recording order."""
        if loss.data.ndim != 0:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.grad is None:
            loss.grad = np.zeros(())
        loss.grad = loss.grad + 1.0
        for name, out, inputs, backward_fn in reversed(self._nodes):
            gout = out.grad
            if gout is None:
                continue
            grads = backward_fn(gout)
            for tensor, g in zip(inputs, grads):
                if g is None:
                    continue
                g = np.asarray(g)
                if g.shape != tensor.data.shape:
                    raise ShapeError(
                        f"backward of {name!r} produced gradient shape {g.shape} "
                        f"for input shape {tensor.data.shape}"
                    )
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += g


def zero_grads(tensors: Iterable[Tensor]) -> None:
    """Reset gradients to exact zeros (parameters off any loss path keep
    an all-zero gradient rather than None)."""
    for t in tensors:
        t.grad = np.zeros_like(t.data)


def record_op(name: str, out_data: Array, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Register a (possibly fused) op result on the active tape.

    ``backward_fn`` maps the output gradient to one gradient per input.
    This is the extension point for ops implemented outside this module.
    """
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"op {name!r} produced non-finite values")
    out = Tensor(out_data)
    if _TAPE_STACK:
        _TAPE_STACK[-1]._nodes.append((name, out, inputs, backward_fn))
    return out


# --------------------------------------------------------------------------
# Elementwise ops
# --------------------------------------------------------------------------


def neg(x: Tensor) -> Tensor:
    return record_op("neg", -x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)
    return record_op("scale", c * x.data, (x,), lambda g: (c * g,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also supports (n, m) + (m,) row broadcasting."""
    if a.shape == b.shape:
        return record_op("add", a.data + b.data, (a, b), lambda g: (g, g))
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return record_op("add", a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return record_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return record_op("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid_array(x: Array) -> Array:
    # Piecewise form is stable for |x| up to ~700 in either direction.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid_array(x.data)
    return record_op("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def _log_sigmoid_array(x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    """log(sigmoid(x)); use log_sigmoid(neg(x)) for log(1 - sigmoid(x))."""
    y = _log_sigmoid_array(x.data)
    return record_op("log_sigmoid", y, (x,), lambda g: (g * _sigmoid_array(-x.data),))


def _log_softmax_array(v: Array, axis: int) -> Array:
    shifted = v - v.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax(v: Tensor) -> Tensor:
    """Max-shifted log softmax over a rank-1 tensor."""
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeError(f"log_softmax needs a nonempty rank-1 tensor, got shape {v.shape}")
    y = _log_softmax_array(v.data, axis=0)

    def backward(g: Array):
        return (g - np.exp(y) * g.sum(),)

    return record_op("log_softmax", y, (v,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    """log softmax applied independently to every row of a rank-2 tensor."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"log_softmax_rows needs a rank-2 tensor, got shape {x.shape}")
    y = _log_softmax_array(x.data, axis=1)

    def backward(g: Array):
        return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)

    return record_op("log_softmax_rows", y, (x,), backward)


# --------------------------------------------------------------------------
# Linear algebra
# --------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return record_op(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def matmul_t(x: Tensor, w: Tensor) -> Tensor:
    """x @ w.T without materializing the transpose."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"matmul_t: incompatible shapes {x.shape} and {w.shape}")
    return record_op(
        "matmul_t",
        x.data @ w.data.T,
        (x, w),
        lambda g: (g @ w.data, g.T @ x.data),
    )


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """W.x + b for a rank-1 input (the project-and-sum building block)."""
    if x.ndim != 1 or w.ndim != 2 or b.ndim != 1 or w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ShapeError(
            f"affine: W{w.shape} does not map x{x.shape} to b{b.shape}"
        )
    out = w.data @ x.data + b.data

    def backward(g: Array):
        return (w.data.T @ g, np.outer(g, x.data), g)

    return record_op("affine", out, (x, w, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row-batched affine map: (n, in) @ W(out, in).T + b -> (n, out)."""
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1 or x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ShapeError(f"linear: W{w.shape}, b{b.shape} do not apply to rows of {x.shape}")
    out = x.data @ w.data.T + b.data

    def backward(g: Array):
        return (g @ w.data, g.T @ x.data, g.sum(axis=0))

    return record_op("linear", out, (x, w, b), backward)


# --------------------------------------------------------------------------
# Reductions and combinations
# --------------------------------------------------------------------------


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a rank-0 tensor."""
    shape = x.shape
    return record_op("total", x.data.sum(), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def weighted_sum(terms: Sequence[tuple[float, Tensor]]) -> Tensor:
    """sum(w_i * t_i) for same-shaped tensors with python-float weights."""
    if not terms:
        raise ShapeError("weighted_sum needs at least one term")
    weights = [float(w) for w, _ in terms]
    tensors = tuple(t for _, t in terms)
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise ShapeError(f"weighted_sum: mixed shapes {shape} and {t.shape}")
    out = sum(w * t.data for w, t in zip(weights, tensors))

    def backward(g: Array):
        return tuple(w * g for w in weights)

    return record_op("weighted_sum", out, tensors, backward)


# --------------------------------------------------------------------------
# Indexing, gathering, reshaping
# --------------------------------------------------------------------------


def take(v: Tensor, idx: Array) -> Tensor:
    """Gather entries of a rank-1 tensor at integer indices."""
    if v.ndim != 1:
        raise ShapeError(f"take needs a rank-1 tensor, got shape {v.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = v.data[idx]

    def backward(g: Array):
        gv = np.zeros_like(v.data)
        np.add.at(gv, idx, g)
        return (gv,)

    return record_op("take", out, (v,), backward)


def gather_rows(m: Tensor, idx: Array) -> Tensor:
    """Gather rows of a rank-2 tensor (embedding lookup)."""
    if m.ndim != 2:
        raise ShapeError(f"gather_rows needs a rank-2 tensor, got shape {m.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = m.data[idx]

    def backward(g: Array):
        gm = np.zeros_like(m.data)
        np.add.at(gm, idx, g)
        return (gm,)

    return record_op("gather_rows", out, (m,), backward)


def gather_elems(m: Tensor, rows: Array, cols: Array) -> Tensor:
    """Gather m[rows[k], cols[k]] into a rank-1 tensor."""
    if m.ndim != 2:
        raise ShapeError(f"gather_elems needs a rank-2 tensor, got shape {m.shape}")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = m.data[rows, cols]

    def backward(g: Array):
        gm = np.zeros_like(m.data)
        np.add.at(gm, (rows, cols), g)
        return (gm,)

    return record_op("gather_elems", out, (m,), backward)


def column(m: Tensor, j: int) -> Tensor:
    if m.ndim != 2:
        raise ShapeError(f"column needs a rank-2 tensor, got shape {m.shape}")
    out = m.data[:, j].copy()

    def backward(g: Array):
        gm = np.zeros_like(m.data)
        gm[:, j] = g
        return (gm,)

    return record_op("column", out, (m,), backward)


def slice_cols(m: Tensor, j0: int, j1: int) -> Tensor:
    if m.ndim != 2:
        raise ShapeError(f"slice_cols needs a rank-2 tensor, got shape {m.shape}")
    out = m.data[:, j0:j1].copy()

    def backward(g: Array):
        gm = np.zeros_like(m.data)
        gm[:, j0:j1] = g
        return (gm,)

    return record_op("slice_cols", out, (m,), backward)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: incompatible shapes {a.shape} and {b.shape}")
    na = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g: Array):
        return (g[:, :na].copy(), g[:, na:].copy())

    return record_op("concat_cols", out, (a, b), backward)


def repeat_rows(x: Tensor, k: int) -> Tensor:
    """Repeat each row k times consecutively: (n, m) -> (n*k, m)."""
    if x.ndim != 2:
        raise ShapeError(f"repeat_rows needs a rank-2 tensor, got shape {x.shape}")
    n, m = x.shape
    out = np.repeat(x.data, k, axis=0)

    def backward(g: Array):
        return (g.reshape(n, k, m).sum(axis=1),)

    return record_op("repeat_rows", out, (x,), backward)


def tile_rows(x: Tensor, k: int) -> Tensor:
    """Stack k copies of the whole block: (n, m) -> (k*n, m)."""
    if x.ndim != 2:
        raise ShapeError(f"tile_rows needs a rank-2 tensor, got shape {x.shape}")
    n, m = x.shape
    out = np.tile(x.data, (k, 1))

    def backward(g: Array):
        return (g.reshape(k, n, m).sum(axis=0),)

    return record_op("tile_rows", out, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    out = x.data.reshape(shape)

    def backward(g: Array):
        return (g.reshape(old),)

    return record_op("reshape", out, (x,), backward)


def shift_rows_down(x: Tensor) -> Tensor:
    """Shift rows down by one, filling row 0 with zeros (causal context)."""
    if x.ndim != 2:
        raise ShapeError(f"shift_rows_down needs a rank-2 tensor, got shape {x.shape}")
    out = np.zeros_like(x.data)
    out[1:] = x.data[:-1]

    def backward(g: Array):
        gx = np.zeros_like(x.data)
        gx[:-1] = g[1:]
        return (gx,)

    return record_op("shift_rows_down", out, (x,), backward)


# --------------------------------------------------------------------------
# Finite-difference checking
# --------------------------------------------------------------------------


def grad_check(
    f: Callable[[], Tensor],
    tensors: Sequence[tuple[str, Tensor]],
    eps: float = 1e-5,
    max_coords: int = 64,
    seed: int = 0,
) -> float:
    """Compare tape gradients of ``f`` against central finite differences.

    ``f`` is a nullary callable that rebuilds the scalar loss from the
    given named tensors each time it is called (it runs once under a tape
    for the analytic pass and many times eagerly for the differences).
    Checks all coordinates when there are at most ``max_coords``, else a
    seeded sample of ``max_coords`` of them.  Returns the max relative
    error with denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ConfigError(f"grad_check eps must lie in [1e-7, 1e-3], got {eps}")
    params = [t for _, t in tensors]
    with Tape() as tape:
        loss = f()
    if not np.isfinite(loss.data):
        raise NumericError("grad_check: loss is not finite")
    zero_grads(params)
    tape.backward(loss)

    coords = [(i, j) for i, t in enumerate(params) for j in range(t.data.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(c)] for c in sorted(chosen)]

    worst = 0.0
    for i, j in coords:
        t = params[i]
        analytic = float(t.grad.flat[j])
        orig = float(t.data.flat[j])
        t.data.flat[j] = orig + eps
        hi = float(f().data)
        t.data.flat[j] = orig - eps
        lo = float(f().data)
        t.data.flat[j] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError("grad_check: perturbed loss is not finite")
        numeric = (hi - lo) / (2.0 * eps)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
