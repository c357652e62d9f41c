"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Graph` is active (``with Graph() as g:``)
are appended to that graph's node list.  Outside an active graph the same
functions run as plain numpy code, which is what inference and finite
difference evaluation use.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "DimensionError",
    "ContractError",
    "NumericalError",
    "Tensor",
    "Graph",
    "no_grad",
    "backward",
    "add",
    "sub",
    "hadamard",
    "scale",
    "bias_add",
    "matmul",
    "concat",
    "stack_rows",
    "reshape",
    "index",
    "pad_rows",
    "activation",
    "sigmoid",
    "tanh",
    "relu",
    "tensor_sum",
    "tensor_mean",
    "conv1d",
    "maxpool1d",
    "scale_rows",
    "weighted_mean",
    "dropout",
    "batch_norm",
    "BatchNormState",
    "bce_loss",
    "BCE_EPS",
]

BCE_EPS = 1e-7


class DimensionError(ValueError):
    """Raised when operand shapes are not conformable."""


class ContractError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values."""


_local = threading.local()


def _stack():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_graph() -> Optional["Graph"]:
    stack = _stack()
    return stack[-1] if stack else None


@dataclass
class Node:
    tag: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Graph:
    """Append-only record of the operations of one forward pass.

    Inputs of a node always precede it, so reverse list order is a valid
    reverse topological order.  A graph belongs to the thread that entered it.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, tag, inputs, output, vjp):
        output.node_id = len(self.nodes)
        output.graph = self
        output.requires_grad = True
        self.nodes.append(Node(tag, tuple(inputs), output, vjp))
        return output


class no_grad:
    """Suspend recording inside an active graph."""

    def __enter__(self):
        _stack().append(None)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False


class Tensor:
    """A dense row-major float64 array that can take part in a graph."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, order="C")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.node_id: Optional[int] = None
        self.graph: Optional[Graph] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.graph is None:
            raise ContractError("tensor was not produced inside a graph")
        backward(self.graph, self)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(tag, data, inputs, vjp) -> Tensor:
    out = Tensor(data)
    graph = active_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(tag, inputs, out, vjp)
    return out


def backward(graph: Graph, loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor in ``graph``.

    Tensors the loss does not depend on receive a zero gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {}
    if loss.graph is graph:
        grads[id(loss)] = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64)

    seen = set()
    for node in graph.nodes:
        for t in node.inputs + (node.output,):
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            g = grads.get(id(t))
            if g is None:
                g = np.zeros_like(t.data)
            t.grad = g.copy() if t.grad is None else t.grad + g


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        axis = next(
            (i for i, (x, y) in enumerate(zip(a.shape, b.shape)) if x != y),
            min(a.ndim, b.ndim),
        )
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ on axis {axis}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "add")
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "sub")
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def hadamard(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "hadamard")
    ad, bd = a.data, b.data
    return _make("hadamard", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add ``b`` along the last axis of ``x``; ``b`` has shape (C,) or (1,)."""
    x, b = _as_tensor(x), _as_tensor(b)
    if x.ndim == 0 or b.ndim != 1 or b.shape[0] not in (1, x.shape[-1]):
        raise DimensionError(
            f"bias_add: bias shape {b.shape} does not match last axis of {x.shape}"
        )
    lead = tuple(range(x.ndim - 1))

    def vjp(g):
        gb = g.sum(axis=lead) if lead else g
        if b.shape[0] == 1:
            gb = np.atleast_1d(gb.sum())
        return g, gb

    return _make("bias_add", x.data + b.data, (x, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul: only 1-D and 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner axis mismatch, axis {a.ndim - 1} of {a.shape} vs axis 0 of {b.shape}"
        )
    ad, bd = a.data, b.data

    def vjp(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2:
            return np.outer(g, bd), ad.T @ g
        if bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad

    return _make("matmul", ad @ bd, (a, b), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: no inputs")
    ref = tensors[0]
    ax = axis % max(ref.ndim, 1)
    for t in tensors[1:]:
        if t.ndim != ref.ndim:
            raise DimensionError(f"concat: rank {t.ndim} vs {ref.ndim}")
        for i, (x, y) in enumerate(zip(t.shape, ref.shape)):
            if i != ax and x != y:
                raise DimensionError(f"concat: shapes {ref.shape} and {t.shape} differ on axis {i}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return np.split(g, splits, axis=ax)

    return _make("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, vjp)


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape 1-D tensors into a matrix, one per row."""
    tensors = [_as_tensor(t) for t in tensors]
    return concat([reshape(t, (1,) + t.shape) for t in tensors], axis=0)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as err:
        raise DimensionError(f"reshape: cannot view {src} as {shape}") from err
    return _make("reshape", out, (x,), lambda g: (g.reshape(src),))


def index(x: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    x = _as_tensor(x)
    if isinstance(key, (list, tuple)) and all(isinstance(k, (int, np.integer)) for k in key):
        key = np.asarray(key, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(x.data)
        np.add.at(out, key, g)
        return (out,)

    return _make("index", x.data[key], (x,), vjp)


def pad_rows(x: Tensor, before: int, after: int) -> Tensor:
    """Zero-pad a 2-D tensor along axis 0."""
    x = _as_tensor(x)
    n = x.shape[0]
    out = np.pad(x.data, [(before, after)] + [(0, 0)] * (x.ndim - 1))
    return _make("pad_rows", out, (x,), lambda g: (g[before:before + n],))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activation(x: Tensor, kind: str) -> Tensor:
    x = _as_tensor(x)
    if kind == "sigmoid":
        y = _sigmoid(x.data)
        return _make("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))
    if kind == "tanh":
        y = np.tanh(x.data)
        return _make("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))
    if kind == "relu":
        mask = x.data > 0
        return _make("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))
    raise ContractError(f"unknown activation {kind!r}")


def sigmoid(x):
    return activation(x, "sigmoid")


def tanh(x):
    return activation(x, "tanh")


def relu(x):
    return activation(x, "relu")


def tensor_sum(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return _make("sum", np.array(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),))


def tensor_mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.size
    return _make(
        "mean", np.array(x.data.mean()), (x,), lambda g: (np.full_like(x.data, g / n),)
    )


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid 1-D convolution (cross-correlation).

    Args:
        x: input of shape (len, channels).
        kernels: shape (k, channels, filters).
        bias: shape (filters,).
        stride: step between windows.

    Returns:
        Tensor of shape ((len - k) // stride + 1, filters).
    """
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    if x.ndim != 2:
        raise DimensionError(f"conv1d: input must be (len, channels), got {x.shape}")
    if kernels.ndim != 3:
        raise DimensionError(f"conv1d: kernels must be (k, channels, filters), got {kernels.shape}")
    k, cin, nf = kernels.shape
    length = x.shape[0]
    if x.shape[1] != cin:
        raise DimensionError(f"conv1d: channel axis (1) is {x.shape[1]}, kernels expect {cin}")
    if bias.shape != (nf,):
        raise DimensionError(f"conv1d: bias axis 0 is {bias.shape}, expected ({nf},)")
    if stride < 1:
        raise ContractError("conv1d: stride must be >= 1")
    if length < k:
        raise DimensionError(f"conv1d: length axis (0) is {length}, shorter than kernel {k}")
    out_len = (length - k) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=0)[::stride]
    # windows: (out_len, channels, k)
    kd = kernels.data
    out = np.einsum("tck,kcf->tf", windows, kd) + bias.data

    def vjp(g):
        gk = np.einsum("tck,tf->kcf", windows, g)
        gx = np.zeros_like(x.data)
        stop = stride * (out_len - 1) + 1
        for j in range(k):
            gx[j:j + stop:stride] += g @ kd[j].T
        return gx, gk, g.sum(axis=0)

    return _make("conv1d", out, (x, kernels, bias), vjp)


def maxpool1d(x: Tensor, window: int, stride: int) -> Tensor:
    """Max over windows along axis 0; ties resolve to the lowest index."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"maxpool1d: input must be (len, channels), got {x.shape}")
    if window < 1 or stride < 1:
        raise ContractError("maxpool1d: window and stride must be >= 1")
    length, ch = x.shape
    if window > length:
        raise DimensionError(f"maxpool1d: window {window} exceeds length axis (0) of {length}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, window, axis=0)[::stride]
    arg = windows.argmax(axis=2)  # (out_len, channels)
    out_len = arg.shape[0]
    rows = arg + stride * np.arange(out_len)[:, None]
    cols = np.broadcast_to(np.arange(ch), rows.shape)
    out = x.data[rows, cols]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, cols), g)
        return (gx,)

    return _make("maxpool1d", out, (x,), vjp)


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """out[i] = s[i] * x[i] for a (L, C) matrix and (L,) weights."""
    x, s = _as_tensor(x), _as_tensor(s)
    if x.ndim != 2 or s.shape != (x.shape[0],):
        raise DimensionError(f"scale_rows: weights {s.shape} do not match rows of {x.shape}")
    xd, sd = x.data, s.data
    return _make(
        "scale_rows",
        xd * sd[:, None],
        (x, s),
        lambda g: (g * sd[:, None], (g * xd).sum(axis=1)),
    )


def weighted_mean(x: Tensor, s: Tensor) -> Tensor:
    """Score-weighted mean of the rows of ``x``: sum_i s_i x_i / sum_i s_i."""
    x, s = _as_tensor(x), _as_tensor(s)
    if x.ndim != 2 or s.shape != (x.shape[0],):
        raise DimensionError(f"weighted_mean: weights {s.shape} do not match rows of {x.shape}")
    xd, sd = x.data, s.data
    total = sd.sum()
    out = sd @ xd / total

    def vjp(g):
        return np.outer(sd, g) / total, (xd @ g - out @ g) / total

    return _make("weighted_mean", out, (x, s), vjp)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], train: bool) -> Tensor:
    """Inverted dropout: keep with prob 1-rate and rescale by 1/(1-rate)."""
    if not train or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ContractError("dropout rate must be < 1")
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return _make("dropout", x.data * mask, (x,), lambda g: (g * mask,))


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def create(cls, width: int, momentum: float = 0.9, eps: float = 1e-5):
        return cls(np.zeros(width), np.ones(width), momentum, eps)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, train: bool,
               update_stats: bool = True) -> Tensor:
    """Per-feature normalization of a (batch, features) matrix.

    Train mode normalizes by batch statistics and, when ``update_stats`` is set,
    folds them into the running estimates; infer mode uses the running estimates.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm: feature axis (1) of {x.shape} vs scale {gamma.shape}")
    xd, gd = x.data, gamma.data
    if train:
        mu = xd.mean(axis=0)
        var = xd.var(axis=0)
        if update_stats:
            m = state.momentum
            state.running_mean = m * state.running_mean + (1 - m) * mu
            state.running_var = m * state.running_var + (1 - m) * var
    else:
        mu, var = state.running_mean, state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (xd - mu) * inv
    out = xhat * gd + beta.data

    def vjp(g):
        gg = (g * xhat).sum(axis=0)
        gb = g.sum(axis=0)
        gxhat = g * gd
        if train:
            n = xd.shape[0]
            gx = inv / n * (n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
        else:
            gx = gxhat * inv
        return gx, gg, gb

    return _make("batch_norm", out, (x, gamma, beta), vjp)


def bce_loss(prediction: Tensor, target) -> Tensor:
    """Mean binary cross-entropy with predictions clipped to [eps, 1-eps]."""
    prediction = _as_tensor(prediction)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), prediction.shape)
    raw = prediction.data
    p = np.clip(raw, BCE_EPS, 1.0 - BCE_EPS)
    n = max(p.size, 1)
    loss = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).sum() / n
    inside = (raw >= BCE_EPS) & (raw <= 1.0 - BCE_EPS)

    def vjp(g):
        return (g * inside * (-(t / p) + (1.0 - t) / (1.0 - p)) / n,)

    return _make("bce", np.array(loss), (prediction,), vjp)
