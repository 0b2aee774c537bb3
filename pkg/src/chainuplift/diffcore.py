"""Small reverse-mode autodiff kernel over float64 numpy arrays.

Only the operations the uplift network needs are provided. Every op
returns a new :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients; :func:`backward` walks
the graph in reverse topological order.

Arrays may carry any number of leading batch axes. Binary ops broadcast
like numpy, and the backward pass sums gradients back to the input shape.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from .errors import CodeOutOfRange, NonFinite, ShapeMismatch

DTYPE = np.float64
PROB_CLAMP = 1e-12

_grad_enabled = True


@contextmanager
def no_grad():
    """Evaluate forward values without recording the graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("value", "parents", "backward_fn", "requires_grad", "name", "op")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False,
                 name=None, op="leaf"):
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or self.op
        return f"Tensor({label}, shape={self.value.shape})"

    # operator sugar, used sparingly by the model code
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=DTYPE))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _check_finite(value, op):
    # a finite sum implies finite entries; only scan when it is not
    if not math.isfinite(np.add.reduce(value, axis=None)) and not np.isfinite(value).all():
        raise NonFinite(f"non-finite value produced by {op}")


def _result(value, parents, backward_fn, op):
    _check_finite(value, op)
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    return Tensor(value, parents if needs else (), backward_fn if needs else None,
                  requires_grad=needs, op=op)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# forward primitives

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.value + b.value, (a, b), back, "add")


def mul(a, b) -> Tensor:
    """Element-wise product with broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def back(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _result(a.value * b.value, (a, b), back, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.value * c, (a,), lambda g: (g * c,), "scale")


def one_minus(a: Tensor) -> Tensor:
    return _result(1.0 - a.value, (a,), lambda g: (-g,), "one_minus")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    if bv.ndim == 2:
        # activations against a weight matrix: one gemm over folded batch axes
        flat = av.reshape(-1, av.shape[-1])
        out = (flat @ bv).reshape(av.shape[:-1] + (bv.shape[1],))

        def back(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bv.T).reshape(av.shape), flat.T @ g2
    else:
        out = av @ bv

        def back(g):
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
            return ga, gb

    return _result(out, (a, b), back, "matmul")


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` for a weight of shape (n_in, n_out) and bias (n_out,)."""
    if w.value.ndim != 2 or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"affine: weight {w.shape}, bias {b.shape}")
    return add(matmul(x, w), b)


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _result(np.maximum(a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x):
    # tanh form is overflow-free for any finite x
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (a,), back, "softmax")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ndim = tensors[0].value.ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.value.ndim != ndim or any(
                t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeMismatch(f"concat: {[t.shape for t in tensors]} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax)
                     for i in range(len(tensors)))

    return _result(np.concatenate([t.value for t in tensors], axis=ax),
                   tuple(tensors), back, "concat")


def lookup(table: Tensor, codes) -> Tensor:
    """Gather rows of an embedding table. Output shape is codes.shape + (d,)."""
    codes = np.asarray(codes, dtype=np.int64)
    n = table.shape[0]
    if codes.size and (codes.min() < 0 or codes.max() >= n):
        raise CodeOutOfRange(f"lookup: code outside [0, {n})")

    def back(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, codes.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(table.value[codes], (table,), back, "lookup")


def stop_gradient(a: Tensor) -> Tensor:
    """Identity in the forward pass; no gradient flows back through it."""
    return Tensor(a.value, op="stop_gradient")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _result(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def flatten(a: Tensor, start: int = 1) -> Tensor:
    """Collapse axes ``start..end`` into one."""
    return reshape(a, a.shape[:start] + (-1,))


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _result(np.swapaxes(a.value, -1, -2), (a,),
                   lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def take(a: Tensor, index: int, axis: int = -1) -> Tensor:
    """Select a single index along ``axis`` (axis is dropped)."""
    ax = axis % a.value.ndim

    def back(g):
        out = np.zeros_like(a.value)
        sl = [slice(None)] * a.value.ndim
        sl[ax] = index
        out[tuple(sl)] = g
        return (out,)

    return _result(np.take(a.value, index, axis=ax), (a,), back, "take")


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _result(np.asarray(a.value.sum()), (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size
    return scale(sum_all(a), 1.0 / n)


def square_sum(a: Tensor) -> Tensor:
    return _result(np.asarray(np.sum(a.value * a.value)), (a,),
                   lambda g: (2.0 * g * a.value,), "square_sum")


def square_sum_all(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of squared entries over several tensors, as one graph node."""
    tensors = tuple(tensors)
    total = sum(float(np.vdot(t.value, t.value)) for t in tensors)
    return _result(np.asarray(total), tensors,
                   lambda g: tuple(2.0 * g * t.value for t in tensors), "square_sum_all")


def bce_logits(logit: Tensor, label) -> Tensor:
    """Element-wise binary cross-entropy computed from logits (stable)."""
    y = np.asarray(label, dtype=DTYPE)
    x = logit.value
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))

    def back(g):
        return (g * (_sigmoid(x) - y),)

    return _result(loss, (logit,), back, "bce_logits")


def bce_prob(p: Tensor, label) -> Tensor:
    """Element-wise binary cross-entropy of a probability, clamped to
    [1e-12, 1 - 1e-12]. Gradient is zero where the clamp is active."""
    y = np.asarray(label, dtype=DTYPE)
    raw = p.value
    q = np.clip(raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (raw >= PROB_CLAMP) & (raw <= 1.0 - PROB_CLAMP)
    loss = -(y * np.log(q) + (1.0 - y) * np.log1p(-q))

    def back(g):
        return (g * inside * (-(y / q) + (1.0 - y) / (1.0 - q)),)

    return _result(loss, (p,), back, "bce_prob")


# ---------------------------------------------------------------------------
# backward pass

def backward(root: Tensor) -> Dict[int, np.ndarray]:
    """Gradients of scalar ``root`` w.r.t. every reachable grad-requiring
    tensor, keyed by ``id(tensor)``."""
    if root.value.size != 1:
        raise ShapeMismatch(f"backward needs a scalar, got {root.shape}")
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return grads


# ---------------------------------------------------------------------------
# parameters

class ParamStore:
    """Ordered map from parameter path to a leaf :class:`Tensor`.

    Shapes are fixed once added; ``set`` refuses a different shape.
    """

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=DTYPE)
        t = Tensor(arr, requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, trainable_only=False):
        return [n for n, t in self._params.items() if t.requires_grad or not trainable_only]

    def is_trainable(self, name) -> bool:
        return self._params[name].requires_grad

    def set_trainable(self, name, flag: bool):
        self._params[name].requires_grad = bool(flag)

    def set(self, name, value):
        arr = np.asarray(value, dtype=DTYPE)
        t = self._params[name]
        if arr.shape != t.value.shape:
            raise ShapeMismatch(f"{name}: expected {t.value.shape}, got {arr.shape}")
        t.value = arr.copy()

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {n: t.value.copy() for n, t in self._params.items()}

    def restore(self, snap: Dict[str, np.ndarray]):
        for n, v in snap.items():
            self.set(n, v)

    def num_values(self) -> int:
        return sum(t.value.size for t in self._params.values())


def gradients(loss: Tensor, store: ParamStore) -> Dict[str, np.ndarray]:
    """d loss / d theta for every trainable parameter in ``store``.

    Trainable parameters not reached by the graph (or reached only through
    :func:`stop_gradient`) get an all-zero gradient. Frozen parameters are
    omitted.
    """
    grads = backward(loss)
    out = {}
    for name, t in store.items():
        if not t.requires_grad:
            continue
        g = grads.get(id(t))
        if g is None:
            g = np.zeros_like(t.value)
        else:
            _check_finite(g, f"gradient of {name}")
        out[name] = g
    return out


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class Adam:
    """Adam with bias correction. State is per parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, store: ParamStore, grads: Dict[str, np.ndarray]):
        for name, g in grads.items():
            if name not in store or not store.is_trainable(name):
                raise KeyError(f"gradient for unknown or frozen parameter {name!r}")
            if g.shape != store[name].shape:
                raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {store[name].shape}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            param = store[name]
            param.value = param.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# finite differences

def check_gradients(loss_fn: Callable[[], Tensor], store: ParamStore,
                    names: Optional[Iterable[str]] = None, step: float = 1e-5,
                    max_entries: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """Compare analytic gradients to central finite differences.

    ``loss_fn`` must rebuild the graph from the current store values each
    call. Returns, per parameter, the relative error
    ``||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-10)``
    over the checked entries. ``max_entries`` samples that many entries
    per parameter instead of checking all of them.
    """
    analytic = gradients(loss_fn(), store)
    names = list(analytic) if names is None else list(names)
    rng = rng or np.random.default_rng(0)
    errors = {}
    for name in names:
        param = store[name]
        flat_size = param.value.size
        idx = np.arange(flat_size)
        if max_entries is not None and flat_size > max_entries:
            idx = np.sort(rng.choice(flat_size, size=max_entries, replace=False))
        numeric = np.empty(len(idx))
        base = param.value.copy()
        with no_grad():
            for j, i in enumerate(idx):
                bumped = base.copy().reshape(-1)
                bumped[i] += step
                param.value = bumped.reshape(base.shape)
                up = float(loss_fn().value)
                bumped[i] -= 2 * step
                param.value = bumped.reshape(base.shape)
                down = float(loss_fn().value)
                numeric[j] = (up - down) / (2 * step)
        param.value = base
        a = analytic[name].reshape(-1)[idx]
        denom = max(np.linalg.norm(a), np.linalg.norm(numeric), 1e-10)
        errors[name] = float(np.linalg.norm(a - numeric) / denom)
    return errors


# ---------------------------------------------------------------------------
# checkpoints

def store_to_json(store: ParamStore) -> dict:
    # float repr is the shortest string that round-trips to the same double
    return {name: {"shape": list(t.shape), "values": t.value.reshape(-1).tolist(),
                   "trainable": bool(t.requires_grad)}
            for name, t in store.items()}


def store_from_json(doc: dict) -> ParamStore:
    store = ParamStore()
    for name, entry in doc.items():
        values = np.array(entry["values"], dtype=DTYPE).reshape(entry["shape"])
        store.add(name, values, trainable=entry.get("trainable", True))
    return store


def save_checkpoint(path, store: ParamStore, config: dict, fingerprint: str):
    doc = {"config": config, "schema_fingerprint": fingerprint,
           "params": store_to_json(store)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return store_from_json(doc["params"]), doc["config"], doc["schema_fingerprint"]


def glorot(rng: np.random.Generator, shape, fan_in=None, fan_out=None) -> np.ndarray:
    fan_in = shape[0] if fan_in is None else fan_in
    fan_out = shape[-1] if fan_out is None else fan_out
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
