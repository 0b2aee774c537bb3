"""Entire-chain network: task-prior gating, shared towers, training and
counterfactual (S-learner) inference.

The model predicts pCTR and pCVR from one set of towers; pCTCVR is their
product. Treatment effects are differences of predictions with the
treatment code overridden to k and to 0.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import diffcore as dc
from . import tenet
from .data import Dataset, FeatureSchema, Instance
from .errors import (CodeOutOfRange, DegenerateGain, Divergence, EmptyGroup,
                     FingerprintMismatch, NonFinite)
from .metrics import per_treatment_eval

logger = logging.getLogger(__name__)

VARIANTS = ("full", "no_tenet", "attention_tenet", "no_taegate", "no_ecenet")
TASKS = ("ctr", "cvr")  # task index 0 = click, 1 = conversion

# hyper-parameter ranges searched in the original experiments
GRID = {
    "d": (8, 16, 32),
    "lr": (1e-4, 1e-3, 1e-2),
    "h": (128, 256, 512),
    "h_gate": (64, 128, 256, 512),
}


@dataclass
class EcupConfig:
    variant: str = "full"
    d: int = 8
    d_k: Optional[int] = None  # defaults to d
    h: int = 128
    h_gate: int = 64
    heads: int = 2
    tower_layers: int = 3
    tie_hidden: Tuple[int, ...] = ()  # empty: a single affine TIE layer
    gamma: float = 2.0
    lam: float = 1e-5
    lr: float = 1e-3
    batch_size: int = 2048
    epochs: int = 10
    seed: int = 0
    freeze_prior_proj: bool = False

    def __post_init__(self):
        self.variant = self.variant.replace("-", "_")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.tie_hidden = tuple(self.tie_hidden)
        for name in ("d", "h", "h_gate", "heads", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.tower_layers < 2:
            raise ValueError("tower_layers must be >= 2 (hidden layers plus the head)")
        if self.epochs < 0 or self.lr <= 0 or self.gamma <= 0 or self.lam < 0:
            raise ValueError("epochs >= 0, lr > 0, gamma > 0, lam >= 0 required")

    @property
    def key_dim(self) -> int:
        return self.d if self.d_k is None else self.d_k

    @property
    def widths(self) -> List[int]:
        """Hidden widths of the gated tower layers: h, h/2, h/4, ..."""
        return [max(1, self.h // 2 ** i) for i in range(self.tower_layers - 1)]

    @property
    def gated(self) -> bool:
        return self.variant in ("full", "no_tenet", "attention_tenet")

    @property
    def uses_tenet(self) -> bool:
        return self.variant in ("full", "no_taegate", "no_ecenet")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["tie_hidden"] = list(self.tie_hidden)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "EcupConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in known})

    def off_grid(self) -> List[str]:
        return [f"{k}={getattr(self, k)}" for k, vals in GRID.items()
                if getattr(self, k) not in vals]


@dataclass(frozen=True)
class ChainPrediction:
    pctr: np.ndarray
    pcvr: np.ndarray

    @property
    def pctcvr(self):
        return self.pctr * self.pcvr


@dataclass(frozen=True)
class IteEstimate:
    """Counterfactual predictions for every arm, (N, K+1) each.

    Effects are (N, K) with column k-1 holding treatment k.
    """

    pctr: np.ndarray
    pcvr: np.ndarray

    @property
    def pctcvr(self):
        return self.pctr * self.pcvr

    @property
    def tau_y(self):
        return self.pctr[:, 1:] - self.pctr[:, :1]

    @property
    def tau_z(self):
        p = self.pctcvr
        return p[:, 1:] - p[:, :1]

    @property
    def tau_cvr(self):
        return self.pcvr[:, 1:] - self.pcvr[:, :1]


@dataclass
class Forward:
    ctr_logit: dc.Tensor
    cvr_logit: dc.Tensor
    representation: dc.Tensor
    deltas: List[dc.Tensor] = field(default_factory=list)
    priors: List[dc.Tensor] = field(default_factory=list)

    @property
    def pctr(self):
        return dc.sigmoid(self.ctr_logit)

    @property
    def pcvr(self):
        return dc.sigmoid(self.cvr_logit)


class EcupModel:
    """Parameters plus the variant-specific forward pass."""

    def __init__(self, schema: FeatureSchema, config: EcupConfig,
                 store: Optional[dc.ParamStore] = None):
        self.schema = schema
        self.config = config
        if store is None:
            store = dc.ParamStore()
            self._init_params(store, np.random.default_rng([config.seed, 0]))
        self.store = store
        if config.freeze_prior_proj:
            for name in store.names():
                if name.startswith("prior."):
                    store.set_trainable(name, False)

    # -- parameters -------------------------------------------------------

    def _init_params(self, store, rng):
        c, s = self.config, self.schema
        d = c.d
        tenet.init_embeddings(store, s, d, rng)
        if c.uses_tenet:
            tenet.init_tenet(store, d, c.key_dim, c.tie_hidden, rng)
        elif c.variant == "attention_tenet":
            tenet.init_mha(store, "attn_tenet", d, c.heads, rng)
        if c.gated:
            store.add("task_embed", dc.glorot(rng, (len(TASKS), d)))
            tenet.init_mha(store, "prior", d, c.heads, rng)
            for ell, width in enumerate(c.widths):
                p = f"taegate.l{ell}"
                store.add(f"{p}.w1", dc.glorot(rng, (len(TASKS) * d, c.h_gate)))
                store.add(f"{p}.b1", np.zeros(c.h_gate))
                # zero output layer: sigmoid(0) * gamma = gamma / 2 everywhere
                store.add(f"{p}.w2", np.zeros((c.h_gate, width * len(TASKS))))
                store.add(f"{p}.b2", np.zeros(width * len(TASKS)))
        n_in = (s.f + 1) * d
        stacks = ["tower.ctr", "tower.cvr"] if c.variant == "no_ecenet" else ["tower"]
        for stack in stacks:
            prev = n_in
            for ell, width in enumerate(c.widths):
                store.add(f"{stack}.l{ell}.w", dc.glorot(rng, (prev, width)))
                store.add(f"{stack}.l{ell}.b", np.zeros(width))
                prev = width
        for task in TASKS:
            store.add(f"head.{task}.w", dc.glorot(rng, (c.widths[-1], 1)))
            store.add(f"head.{task}.b", np.zeros(1))

    # -- forward ----------------------------------------------------------

    def representation(self, dense, sparse, t) -> dc.Tensor:
        """Treatment-enhanced feature rows E^r, (B, f+1, d)."""
        ex, etr = tenet.embed_inputs(self.store, self.schema, dense, sparse, t)
        v = self.config.variant
        if self.config.uses_tenet:
            return tenet.tenet_forward(ex, etr, self.store)
        rows = dc.concat([ex, etr], axis=-2)
        if v == "attention_tenet":
            return tenet.multi_head_attention(rows, rows, self.store, "attn_tenet")
        return rows

    def prior_attention(self, task: int, er: dc.Tensor, prior_keys=None) -> dc.Tensor:
        """Task-prior vector (B, d): the task embedding attends over E^r.

        Keys/values are detached from E^r. ``prior_keys`` replaces them
        with a fixed array, which lets a finite-difference check hold that
        path constant.
        """
        kv = dc.stop_gradient(er) if prior_keys is None else dc.constant(prior_keys)
        query = dc.lookup(self.store["task_embed"], np.array([[task]]))  # (1, 1, d)
        out = tenet.multi_head_attention(query, kv, self.store, "prior")  # (B, 1, d)
        return dc.reshape(out, (kv.shape[0], -1))

    def taegate(self, priors: List[dc.Tensor], layer: int) -> dc.Tensor:
        """Per-layer scaling factors delta in [0, gamma], shape (B, h_l, T)."""
        p = f"taegate.l{layer}"
        x = dc.concat(priors, axis=-1)
        hidden = dc.relu(dc.affine(x, self.store[f"{p}.w1"], self.store[f"{p}.b1"]))
        gate = dc.sigmoid(dc.affine(hidden, self.store[f"{p}.w2"], self.store[f"{p}.b2"]))
        gate = dc.scale(gate, self.config.gamma)
        return dc.reshape(gate, (x.shape[0], self.config.widths[layer], len(TASKS)))

    def towers(self, er: dc.Tensor, deltas: Optional[List[dc.Tensor]] = None):
        """Logits (B,) for click and conversion.

        Hidden layers are shared; each task keeps its own activation stream,
        scaled by its column of the layer's delta. Heads are per task and
        ungated.
        """
        x = dc.flatten(er)
        separate = self.config.variant == "no_ecenet"
        streams = [x, x]
        for ell in range(len(self.config.widths)):
            shared_first = None
            new = []
            for task in range(len(TASKS)):
                stack = f"tower.{TASKS[task]}" if separate else "tower"
                w, b = self.store[f"{stack}.l{ell}.w"], self.store[f"{stack}.l{ell}.b"]
                if ell == 0 and not separate:
                    # both tasks see the same input here, so share the product
                    if shared_first is None:
                        shared_first = dc.relu(dc.affine(x, w, b))
                    act = shared_first
                else:
                    act = dc.relu(dc.affine(streams[task], w, b))
                if deltas is not None:
                    act = dc.mul(act, dc.take(deltas[ell], task, axis=-1))
                new.append(act)
            streams = new
        logits = []
        for task, name in enumerate(TASKS):
            out = dc.affine(streams[task], self.store[f"head.{name}.w"],
                            self.store[f"head.{name}.b"])
            logits.append(dc.reshape(out, (x.shape[0],)))
        return logits

    def forward(self, dense, sparse, t, prior_keys=None) -> Forward:
        er = self.representation(dense, sparse, t)
        deltas, priors = [], []
        if self.config.gated:
            priors = [self.prior_attention(task, er, prior_keys) for task in range(len(TASKS))]
            deltas = [self.taegate(priors, ell) for ell in range(len(self.config.widths))]
        ctr, cvr = self.towers(er, deltas if self.config.gated else None)
        return Forward(ctr, cvr, er, deltas, priors)

    # -- objective --------------------------------------------------------

    def loss(self, dense, sparse, t, y, z, prior_keys=None) -> dc.Tensor:
        """Entire-space objective: mean over rows of BCE(y, pCTR) plus
        BCE(y & z, pCTR * pCVR), plus lam * squared L2 of trainable params.

        The ``no_ecenet`` variant instead fits pCVR on clicked rows only.
        """
        y = np.asarray(y, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        n = len(y)
        if n == 0:
            raise EmptyGroup("loss of an empty batch")
        fw = self.forward(dense, sparse, t, prior_keys)
        ctr_term = dc.bce_logits(fw.ctr_logit, y)
        if self.config.variant == "no_ecenet":
            clicked = (y == 1).astype(np.float64)
            cvr_term = dc.mul(dc.bce_logits(fw.cvr_logit, z), clicked)
            total = dc.add(dc.mean_all(ctr_term),
                           dc.scale(dc.sum_all(cvr_term), 1.0 / max(1.0, clicked.sum())))
        else:
            pctcvr = dc.mul(fw.pctr, fw.pcvr)
            ctcvr_term = dc.bce_prob(pctcvr, y * z)
            total = dc.mean_all(dc.add(ctr_term, ctcvr_term))
        trainable = self.store.names(trainable_only=True)
        if self.config.lam > 0 and trainable:
            reg = dc.square_sum_all([self.store[name] for name in trainable])
            total = dc.add(total, dc.scale(reg, self.config.lam))
        return total

    # -- inference --------------------------------------------------------

    def predict_probs(self, dense, sparse, t, t_override=None,
                      chunk: int = 8192) -> ChainPrediction:
        t = np.asarray(t, dtype=np.int64)
        if t_override is not None:
            if not 0 <= int(t_override) <= self.schema.K:
                raise CodeOutOfRange(f"t_override {t_override} outside [0, {self.schema.K}]")
            t = np.full_like(t, int(t_override))
        pctr = np.empty(len(t))
        pcvr = np.empty(len(t))
        with dc.no_grad():
            for lo in range(0, len(t), chunk):
                sl = slice(lo, lo + chunk)
                fw = self.forward(dense[sl], sparse[sl], t[sl])
                pctr[sl] = fw.pctr.value
                pcvr[sl] = fw.pcvr.value
        return ChainPrediction(pctr, pcvr)

    def predict_ite(self, ds: Dataset) -> IteEstimate:
        """Effects for every treatment from K+1 counterfactual passes."""
        K = self.schema.K
        pctr = np.empty((ds.N, K + 1))
        pcvr = np.empty((ds.N, K + 1))
        for k in range(K + 1):
            p = self.predict_probs(ds.dense, ds.sparse, ds.t, t_override=k)
            pctr[:, k], pcvr[:, k] = p.pctr, p.pcvr
        return IteEstimate(pctr, pcvr)

    # -- persistence ------------------------------------------------------

    def save(self, path):
        cfg = self.config.to_dict()
        cfg["schema"] = self.schema.to_json()
        dc.save_checkpoint(path, self.store, cfg, self.schema.fingerprint())

    @classmethod
    def load(cls, path, schema: Optional[FeatureSchema] = None) -> "EcupModel":
        store, cfg, fingerprint = dc.load_checkpoint(path)
        saved = FeatureSchema.from_json(cfg["schema"])
        if saved.fingerprint() != fingerprint:
            raise FingerprintMismatch("checkpoint schema does not match its fingerprint")
        if schema is not None and schema.fingerprint() != fingerprint:
            raise FingerprintMismatch(
                f"checkpoint built for schema {fingerprint}, data has {schema.fingerprint()}")
        return cls(saved, EcupConfig.from_dict(cfg), store)


# ---------------------------------------------------------------------------
# functional entry points


def predict_probs(inst: Instance, model: EcupModel, t_override=None) -> ChainPrediction:
    p = model.predict_probs(inst.dense.reshape(1, -1), inst.sparse.reshape(1, -1),
                            np.array([inst.t]), t_override)
    return ChainPrediction(p.pctr[0], p.pcvr[0])


def predict_ite(inst_or_ds, model: EcupModel) -> IteEstimate:
    if isinstance(inst_or_ds, Instance):
        inst = inst_or_ds
        inst_or_ds = Dataset(model.schema, inst.dense.reshape(1, -1),
                             inst.sparse.reshape(1, -1), [inst.t], [inst.y], [inst.z])
    return model.predict_ite(inst_or_ds)


def loss(batch: Dataset, model: EcupModel) -> dc.Tensor:
    return model.loss(batch.dense, batch.sparse, batch.t, batch.y, batch.z)


def validation_score(model: EcupModel, ds: Dataset) -> Tuple[Optional[float], Optional[float]]:
    """Mean CTCVR-view AUUC and Qini over treatments, or (None, None) when
    the terminal gain is degenerate."""
    try:
        ev = per_treatment_eval(ds, model.predict_ite(ds), "Z")
    except (DegenerateGain, EmptyGroup):
        return None, None
    return ev.auuc, ev.qini


def train(train_ds: Dataset, valid_ds: Optional[Dataset], config: EcupConfig,
          on_epoch: Optional[Callable[[dict], None]] = None):
    """Mini-batch Adam on the entire-space objective.

    After each epoch the validation CTCVR AUUC is recorded; the returned
    model carries the parameters of the best validation epoch (the last
    epoch when no validation set is given). Returns ``(model, history)``.
    """
    if train_ds.N == 0:
        raise EmptyGroup("training set is empty")
    if valid_ds is not None and valid_ds.schema.fingerprint() != train_ds.schema.fingerprint():
        raise FingerprintMismatch("train and validation schemas differ")
    model = EcupModel(train_ds.schema, config)
    opt = dc.Adam(lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])
    history = []
    best = (-math.inf, None)
    step = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(train_ds.N)
        total, batches = 0.0, 0
        for lo in range(0, train_ds.N, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            step += 1
            try:
                value = model.loss(train_ds.dense[idx], train_ds.sparse[idx], train_ds.t[idx],
                                   train_ds.y[idx], train_ds.z[idx])
                grads = dc.gradients(value, model.store)
            except NonFinite as exc:
                raise Divergence(f"non-finite value at epoch {epoch}, step {step}: {exc}",
                                 step=step, epoch=epoch) from exc
            opt.step(model.store, grads)
            total += float(value.value)
            batches += 1
        record = {"epoch": epoch, "step": step, "train_loss": total / batches}
        if valid_ds is not None and valid_ds.N:
            auuc_v, qini_v = validation_score(model, valid_ds)
            record["valid_auuc"], record["valid_qini"] = auuc_v, qini_v
            if auuc_v is not None and auuc_v > best[0]:
                best = (auuc_v, model.store.snapshot())
                record["best"] = True
        history.append(record)
        logger.info("epoch %d loss %.5f valid_auuc %s", epoch, record["train_loss"],
                    record.get("valid_auuc"))
        if on_epoch is not None:
            on_epoch(record)
    if best[1] is not None:
        model.store.restore(best[1])
    return model, history
