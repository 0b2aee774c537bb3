"""Initial embeddings and the treatment-enhanced feature network.

Shapes below use B for the batch axis, f for feature fields and d for the
embedding width. Every function takes already-built :class:`Tensor`
parameters from a :class:`ParamStore` addressed by a name prefix, so the
same code serves both treatment-aware units.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from . import diffcore as dc
from .data import FeatureSchema
from .errors import ShapeMismatch

# ---------------------------------------------------------------------------
# embeddings


def init_embeddings(store: dc.ParamStore, schema: FeatureSchema, d: int,
                    rng: np.random.Generator, prefix: str = "embed"):
    for fld in schema.feature_fields:
        if fld.role == "dense":
            store.add(f"{prefix}.dense.{fld.name}.w", dc.glorot(rng, (d,), 1, d))
            store.add(f"{prefix}.dense.{fld.name}.b", np.zeros(d))
        else:
            store.add(f"{prefix}.sparse.{fld.name}",
                      dc.glorot(rng, (fld.cardinality, d), fld.cardinality, d))
    store.add(f"{prefix}.treatment", dc.glorot(rng, (schema.K + 1, d), schema.K + 1, d))


def embed_inputs(store: dc.ParamStore, schema: FeatureSchema, dense, sparse, t,
                 prefix: str = "embed") -> Tuple[dc.Tensor, dc.Tensor]:
    """Return E^x (B, f, d) in schema field order and E^tr (B, 1, d)."""
    dense = np.asarray(dense, dtype=np.float64)
    sparse = np.asarray(sparse, dtype=np.int64)
    n = len(t)
    dense_col = {f.name: j for j, f in enumerate(schema.dense_fields)}
    sparse_col = {f.name: j for j, f in enumerate(schema.sparse_fields)}
    rows = []
    for fld in schema.feature_fields:
        if fld.role == "dense":
            x = dc.constant(dense[:, dense_col[fld.name]].reshape(n, 1))
            e = dc.add(dc.mul(x, store[f"{prefix}.dense.{fld.name}.w"]),
                       store[f"{prefix}.dense.{fld.name}.b"])
            rows.append(dc.reshape(e, (n, 1, -1)))
        else:
            codes = sparse[:, sparse_col[fld.name]].reshape(n, 1)
            rows.append(dc.lookup(store[f"{prefix}.sparse.{fld.name}"], codes))
    ex = dc.concat(rows, axis=1)
    etr = dc.lookup(store[f"{prefix}.treatment"], np.asarray(t, dtype=np.int64).reshape(n, 1))
    return ex, etr


# ---------------------------------------------------------------------------
# treatment-aware unit


def init_tau(store: dc.ParamStore, prefix: str, d: int, d_k: int,
             tie_hidden: Sequence[int], rng: np.random.Generator):
    for name in ("wq", "wk", "wv"):
        store.add(f"{prefix}.{name}", dc.glorot(rng, (d, d_k)))
    store.add(f"{prefix}.wp", dc.glorot(rng, (d_k, d)))
    sizes = [d, *tie_hidden, d]
    for i in range(len(sizes) - 1):
        store.add(f"{prefix}.tie.{i}.w", dc.glorot(rng, (sizes[i], sizes[i + 1])))
        store.add(f"{prefix}.tie.{i}.b", np.zeros(sizes[i + 1]))


def _tie_depth(store, prefix):
    i = 0
    while f"{prefix}.tie.{i}.w" in store:
        i += 1
    return i


def self_attention(ex: dc.Tensor, store: dc.ParamStore, prefix: str,
                   return_weights: bool = False):
    """Scaled dot-product self-attention over feature rows, then the
    restore projection back to width d."""
    wq, wk, wv = store[f"{prefix}.wq"], store[f"{prefix}.wk"], store[f"{prefix}.wv"]
    d_k = wq.shape[1]
    q, k, v = dc.matmul(ex, wq), dc.matmul(ex, wk), dc.matmul(ex, wv)
    scores = dc.scale(dc.matmul(q, dc.transpose(k)), 1.0 / math.sqrt(d_k))
    weights = dc.softmax(scores)
    att = dc.matmul(dc.matmul(weights, v), store[f"{prefix}.wp"])
    return (att, weights) if return_weights else att


def tie_forward(etr: dc.Tensor, store: dc.ParamStore, prefix: str) -> dc.Tensor:
    """Treatment MLP: relu on hidden layers, linear output of width d."""
    depth = _tie_depth(store, prefix)
    h = etr
    for i in range(depth):
        h = dc.affine(h, store[f"{prefix}.tie.{i}.w"], store[f"{prefix}.tie.{i}.b"])
        if i < depth - 1:
            h = dc.relu(h)
    return h


def tau_forward(ex: dc.Tensor, etr: dc.Tensor, store: dc.ParamStore, prefix: str) -> dc.Tensor:
    """Cross features modulated bit-wise by the treatment code: (B, f, d)."""
    return dc.mul(self_attention(ex, store, prefix), tie_forward(etr, store, prefix))


def tegate(ex: dc.Tensor, e_tau: dc.Tensor, w_b: dc.Tensor, etr: dc.Tensor) -> dc.Tensor:
    """Blend initial and treatment-aware features with weights sigmoid(w_b),
    then append the treatment row: (B, f+1, d)."""
    if not (ex.shape == e_tau.shape == w_b.shape):
        raise ShapeMismatch(f"tegate: {ex.shape}, {e_tau.shape}, {w_b.shape}")
    gate = dc.sigmoid(w_b)
    gated = dc.add(dc.mul(ex, gate), dc.mul(e_tau, dc.one_minus(gate)))
    return dc.concat([gated, etr], axis=-2)


def init_tenet(store, d, d_k, tie_hidden, rng, prefix="tenet"):
    init_tau(store, f"{prefix}.tau_g", d, d_k, tie_hidden, rng)
    init_tau(store, f"{prefix}.tau_w", d, d_k, tie_hidden, rng)


def tenet_forward(ex, etr, store, prefix="tenet") -> dc.Tensor:
    e_tau = tau_forward(ex, etr, store, f"{prefix}.tau_g")
    w_b = tau_forward(ex, etr, store, f"{prefix}.tau_w")
    return tegate(ex, e_tau, w_b, etr)


# ---------------------------------------------------------------------------
# multi-head attention (shared by the task-prior path and the attention ablation)


def init_mha(store, prefix, d, heads, rng):
    if d % heads:
        raise ShapeMismatch(f"embedding width {d} not divisible by {heads} heads")
    dh = d // heads
    for i in range(heads):
        for name in ("wq", "wk", "wv"):
            store.add(f"{prefix}.head{i}.{name}", dc.glorot(rng, (d, dh)))
    store.add(f"{prefix}.wo", dc.glorot(rng, (d, d)))


def multi_head_attention(query: dc.Tensor, keys: dc.Tensor, store, prefix) -> dc.Tensor:
    """Concat of per-head scaled dot-product attention, projected by W^O.

    ``query`` is (..., q, d) and ``keys`` (B, n, d); keys double as values.
    """
    heads = []
    i = 0
    while f"{prefix}.head{i}.wq" in store:
        wq = store[f"{prefix}.head{i}.wq"]
        dh = wq.shape[1]
        q = dc.matmul(query, wq)
        k = dc.matmul(keys, store[f"{prefix}.head{i}.wk"])
        v = dc.matmul(keys, store[f"{prefix}.head{i}.wv"])
        w = dc.softmax(dc.scale(dc.matmul(q, dc.transpose(k)), 1.0 / math.sqrt(dh)))
        heads.append(dc.matmul(w, v))
        i += 1
    return dc.matmul(dc.concat(heads, axis=-1), store[f"{prefix}.wo"])
