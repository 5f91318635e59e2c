"""Dense tensors with reverse-mode automatic differentiation.

Everything the model computes is built from a small set of primitives,
each with a hand-derived vector-Jacobian product. Tensors are immutable after
construction; one loss evaluation owns one graph. Math runs in 64-bit by
default (32-bit is allowed for inference-only weights).

Shape conventions: matrices are 2-D, biases are 1-D, scalars are 0-D. Row
vectors (queries, single tree nodes) are carried as 1 x d matrices so that
matmul stays strictly two dimensional. Broadcasting is limited to scalar *
tensor, row-vector bias adds, and tiling one row across a token axis.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, UsageError

GELU_CUBIC_COEFF = 0.044715
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# When True (inference fast path), ops skip graph construction entirely.
_GRAD_DISABLED = False


@contextmanager
def no_grad():
    """Disable graph construction inside the block (forward values only)."""
    global _GRAD_DISABLED
    prev = _GRAD_DISABLED
    _GRAD_DISABLED = True
    try:
        yield
    finally:
        _GRAD_DISABLED = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced a non-finite value")


class Tensor:
    """A node in the computation graph: a value plus how it was produced."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None,
    ):
        self.data = data
        self.requires_grad = requires_grad and not _GRAD_DISABLED
        self.grad: np.ndarray | None = None
        self._parents = parents if self.requires_grad else ()
        self._vjp = vjp if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar; accumulates into leaf .grad."""
        if self.data.size != 1:
            raise UsageError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                # Leaf: accumulate into .grad
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad = node.grad + g
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg


def tensor(values, requires_grad: bool = False, dtype=np.float64) -> Tensor:
    """Wrap array-like values as a leaf tensor."""
    arr = np.asarray(values, dtype=dtype)
    _check_finite(arr, "tensor")
    return Tensor(arr, requires_grad=requires_grad)


def _make(
    data: np.ndarray,
    parents: tuple[Tensor, ...],
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]],
    op: str,
) -> Tensor:
    _check_finite(data, op)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=parents, vjp=vjp)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor | float) -> Tensor:
    """a + b for same-shape tensors, a 1-D bias row, or a python scalar."""
    if isinstance(b, (int, float)):
        return _make(a.data + b, (a,), lambda g: (g,), "add")
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _make(
            a.data + b.data[None, :],
            (a, b),
            lambda g: (g, g.sum(axis=0)),
            "add_bias",
        )
    raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"cannot subtract shapes {a.shape} and {b.shape}")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; one side may be a 0-D scalar tensor."""
    if a.shape == b.shape:
        return _make(
            a.data * b.data,
            (a, b),
            lambda g: (g * b.data, g * a.data),
            "mul",
        )
    if b.data.ndim == 0:
        return _make(
            a.data * b.data,
            (a, b),
            lambda g: (g * b.data, np.sum(g * a.data)),
            "mul_scalar",
        )
    if a.data.ndim == 0:
        return mul(b, a)
    raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")


def scale(a: Tensor, s: float) -> Tensor:
    return _make(a.data * s, (a,), lambda g: (g * s,), "scale")


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a 0-D tensor."""
    return _make(
        np.asarray(a.data.sum()),
        (a,),
        lambda g: (np.broadcast_to(g, a.shape).copy() if a.shape else g,),
        "sum",
    )


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(
        np.asarray(a.data.mean()),
        (a,),
        lambda g: (np.broadcast_to(g / n, a.shape).copy() if a.shape else g,),
        "mean",
    )


# ---------------------------------------------------------------------------
# structure: gather, slice, concat, broadcast
# ---------------------------------------------------------------------------


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Rows table[i] stacked in order; backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"gather_rows needs a 2-D table, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise UsageError(
            f"row index out of range for table with {table.shape[0]} rows"
        )

    def vjp(g: np.ndarray):
        out = np.zeros_like(table.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(table.data[idx].copy(), (table,), vjp, "gather_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-D tensor, got {a.shape}")

    def vjp(g: np.ndarray):
        out = np.zeros_like(a.data)
        out[:, start:stop] = g
        return (out,)

    return _make(a.data[:, start:stop].copy(), (a,), vjp, "slice_cols")


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_rows needs a 2-D tensor, got {a.shape}")

    def vjp(g: np.ndarray):
        out = np.zeros_like(a.data)
        out[start:stop, :] = g
        return (out,)

    return _make(a.data[start:stop, :].copy(), (a,), vjp, "slice_rows")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise UsageError("concat_cols needs at least one tensor")
    widths = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def vjp(g: np.ndarray):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _make(
        np.concatenate([p.data for p in parts], axis=1),
        tuple(parts),
        vjp,
        "concat_cols",
    )


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise UsageError("concat_rows needs at least one tensor")
    heights = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + heights)

    def vjp(g: np.ndarray):
        return tuple(g[bounds[i] : bounds[i + 1], :] for i in range(len(parts)))

    return _make(
        np.concatenate([p.data for p in parts], axis=0),
        tuple(parts),
        vjp,
        "concat_rows",
    )


def broadcast_row(row: Tensor, n: int) -> Tensor:
    """Tile a 1 x d row to n x d (memory context spread over token positions)."""
    if row.data.ndim != 2 or row.shape[0] != 1:
        raise ShapeError(f"broadcast_row needs a 1 x d tensor, got {row.shape}")
    return _make(
        np.repeat(row.data, n, axis=0),
        (row,),
        lambda g: (g.sum(axis=0, keepdims=True),),
        "broadcast_row",
    )


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def gelu(a: Tensor) -> Tensor:
    """tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    x = a.data
    inner = _SQRT_2_OVER_PI * (x + GELU_CUBIC_COEFF * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g: np.ndarray):
        sech2 = 1.0 - t * t
        d_inner = _SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC_COEFF * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner),)

    return _make(out, (a,), vjp, "gelu")


ELEMENTWISE = {"gelu": gelu, "sigmoid": sigmoid, "tanh": tanh}


def elementwise(name: str, a: Tensor) -> Tensor:
    try:
        fn = ELEMENTWISE[name]
    except KeyError:
        raise UsageError(f"unknown elementwise function {name!r}") from None
    return fn(a)


# ---------------------------------------------------------------------------
# normalization and losses
# ---------------------------------------------------------------------------


def softmax(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row softmax over the last axis of a 2-D tensor, max-stabilized.

    mask is a boolean array of a's shape; False entries get probability
    exactly zero and pass no gradient. Each row must keep at least one
    True entry.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"softmax expects a 2-D tensor, got {a.shape}")
    x = a.data
    if mask is not None:
        if mask.shape != x.shape:
            raise ShapeError(
                f"softmax mask shape {mask.shape} does not match {x.shape}"
            )
        if not mask.any(axis=1).all():
            raise UsageError("softmax mask removes an entire row")
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    out = e / e.sum(axis=1, keepdims=True)
    _check_finite(out, "softmax")

    def vjp(g: np.ndarray):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    needs = a.requires_grad
    return Tensor(out, requires_grad=needs, parents=(a,), vjp=vjp)


def log_softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"log_softmax expects a 2-D tensor, got {a.shape}")
    m = a.data.max(axis=1, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def vjp(g: np.ndarray):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return _make(out, (a,), vjp, "log_softmax")


def pick(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Per-row column selection: out[i] = a[i, indices[i]], shape (n, 1)."""
    idx = np.asarray(indices, dtype=np.int64)
    if a.data.ndim != 2 or idx.shape != (a.shape[0],):
        raise ShapeError(
            f"pick needs one index per row: tensor {a.shape}, indices {idx.shape}"
        )
    rows = np.arange(a.shape[0])

    def vjp(g: np.ndarray):
        out = np.zeros_like(a.data)
        out[rows, idx] = g[:, 0]
        return (out,)

    return _make(a.data[rows, idx][:, None].copy(), (a,), vjp, "pick")


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row layer normalization with affine gain/bias (1-D, width d)."""
    if eps <= 0:
        raise UsageError("layernorm eps must be positive")
    if x.data.ndim != 2:
        raise ShapeError(f"layernorm expects a 2-D tensor, got {x.shape}")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layernorm gain/bias must have shape ({d},), "
            f"got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data[None, :] + bias.data[None, :]

    def vjp(g: np.ndarray):
        dxhat = g * gain.data[None, :]
        dgain = (g * xhat).sum(axis=0)
        dbias = g.sum(axis=0)
        mean_dxhat = dxhat.mean(axis=1, keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=1, keepdims=True)
        dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
        return (dx, dgain, dbias)

    return _make(out, (x, gain, bias), vjp, "layernorm")


def normalize_rows(a: Tensor, eps: float = 0.0) -> Tensor:
    """L2-normalize each row; zero rows raise unless eps > 0."""
    if a.data.ndim != 2:
        raise ShapeError(f"normalize_rows expects a 2-D tensor, got {a.shape}")
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True) + eps)
    if np.any(norms == 0.0):
        raise NumericError("cannot L2-normalize a zero row")
    out = a.data / norms

    def vjp(g: np.ndarray):
        dot = (g * out).sum(axis=1, keepdims=True)
        return ((g - out * dot) / norms,)

    return _make(out, (a,), vjp, "normalize_rows")


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class Parameter:
    """A named, trainable leaf tensor (names are unique per checkpoint)."""

    name: str
    tensor: Tensor
    trainable: bool = True

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data


@dataclass
class ParameterSet:
    """Ordered registry of parameters with unique names."""

    _params: dict[str, Parameter] = field(default_factory=dict)

    def register(self, name: str, values: np.ndarray, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise UsageError(f"duplicate parameter name {name!r}")
        p = Parameter(name, tensor(values, requires_grad=trainable), trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params.keys())

    def count(self) -> int:
        return sum(p.data.size for p in self)

    def zero_grad(self) -> None:
        for p in self:
            p.tensor.grad = None


def backward(loss: Tensor, params: Iterable[Parameter]) -> dict[str, np.ndarray]:
    """Run reverse mode from a scalar loss; return {name: gradient}.

    Parameters unreachable from the loss get zero gradients.
    """
    loss.backward()
    grads: dict[str, np.ndarray] = {}
    for p in params:
        if not p.trainable:
            continue
        grads[p.name] = (
            p.tensor.grad if p.tensor.grad is not None else np.zeros_like(p.data)
        )
    return grads
