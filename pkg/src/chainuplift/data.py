"""Feature schema, datasets, synthetic randomized trials and descriptive stats.

A :class:`Dataset` is stored column-wise as numpy arrays. Rows are only
materialized on request (:meth:`Dataset.row`), which keeps the training
loop vectorized.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (ChainViolation, CodeOutOfRange, EmptyGroup, InvalidSpec,
                     MissingColumn, ParseError, SchemaError)

logger = logging.getLogger(__name__)

ROLES = ("dense", "sparse", "treatment", "label_click", "label_conversion")


@dataclass(frozen=True)
class Field:
    name: str
    role: str
    cardinality: Optional[int] = None


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column declaration.

    ``treatment_count`` is K, the number of non-control treatments; the
    treatment column takes codes 0..K with 0 meaning control.
    """

    fields: Tuple[Field, ...]
    treatment_count: int

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError("field names must be unique")
        for f in self.fields:
            if f.role not in ROLES:
                raise SchemaError(f"{f.name}: unknown role {f.role!r}")
            if f.role == "sparse" and (f.cardinality is None or f.cardinality < 1):
                raise SchemaError(f"{f.name}: sparse field needs cardinality >= 1")
        for role in ("treatment", "label_click", "label_conversion"):
            n = sum(f.role == role for f in self.fields)
            if n != 1:
                raise SchemaError(f"exactly one {role} field required, found {n}")
        if self.treatment_count < 1:
            raise SchemaError("treatment_count must be >= 1")
        tr = self.treatment_field
        if tr.cardinality is not None and tr.cardinality != self.treatment_count + 1:
            raise SchemaError(f"treatment cardinality {tr.cardinality} != K+1 = "
                              f"{self.treatment_count + 1}")
        if self.f < 1:
            raise SchemaError("at least one dense or sparse feature field required")

    def _one(self, role) -> Field:
        return next(f for f in self.fields if f.role == role)

    @property
    def treatment_field(self) -> Field:
        return self._one("treatment")

    @property
    def click_field(self) -> Field:
        return self._one("label_click")

    @property
    def conversion_field(self) -> Field:
        return self._one("label_conversion")

    @property
    def feature_fields(self) -> List[Field]:
        """Dense and sparse fields in schema order."""
        return [f for f in self.fields if f.role in ("dense", "sparse")]

    @property
    def dense_fields(self) -> List[Field]:
        return [f for f in self.fields if f.role == "dense"]

    @property
    def sparse_fields(self) -> List[Field]:
        return [f for f in self.fields if f.role == "sparse"]

    @property
    def f(self) -> int:
        return len(self.feature_fields)

    @property
    def K(self) -> int:
        return self.treatment_count

    def to_json(self) -> dict:
        out = []
        for f in self.fields:
            entry = {"name": f.name, "role": f.role}
            card = f.cardinality
            if f.role == "treatment":
                card = self.treatment_count + 1
            if card is not None:
                entry["cardinality"] = card
            out.append(entry)
        return {"fields": out, "treatment_count": self.treatment_count}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureSchema":
        fields = [Field(e["name"], e["role"], e.get("cardinality")) for e in doc["fields"]]
        k = doc.get("treatment_count")
        if k is None:
            tr = [f for f in fields if f.role == "treatment"]
            if len(tr) != 1 or tr[0].cardinality is None:
                raise SchemaError("treatment_count missing and not derivable")
            k = tr[0].cardinality - 1
        return cls(tuple(fields), int(k))

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Instance:
    dense: np.ndarray
    sparse: np.ndarray
    t: int
    y: int
    z: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated, immutable column store.

    ``dense`` is (N, n_dense) in the order of ``schema.dense_fields``;
    ``sparse`` is (N, n_sparse) in the order of ``schema.sparse_fields``.
    """

    schema: FeatureSchema
    dense: np.ndarray
    sparse: np.ndarray
    t: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        s = self.schema
        dense = np.asarray(self.dense, dtype=np.float64).reshape(n, len(s.dense_fields))
        sparse = np.asarray(self.sparse, dtype=np.int64).reshape(n, len(s.sparse_fields))
        t = np.asarray(self.t, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        z = np.asarray(self.z, dtype=np.int64)
        for name, col in (("y", y), ("z", z)):
            if col.shape != (n,) or np.any((col != 0) & (col != 1)):
                raise ParseError(f"label {name} must be binary")
        bad = np.flatnonzero((z == 1) & (y == 0))
        if bad.size:
            raise ChainViolation(f"row {int(bad[0])}: conversion without click")
        if n and (t.min() < 0 or t.max() > s.K):
            raise CodeOutOfRange(f"treatment code outside [0, {s.K}]")
        for j, fld in enumerate(s.sparse_fields):
            col = sparse[:, j]
            if n and (col.min() < 0 or col.max() >= fld.cardinality):
                raise CodeOutOfRange(f"{fld.name}: code outside [0, {fld.cardinality})")
        if not np.all(np.isfinite(dense)):
            raise ParseError("dense features must be finite")
        for name, arr in (("dense", dense), ("sparse", sparse), ("t", t), ("y", y), ("z", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return len(self.t)

    def __len__(self):
        return self.N

    def row(self, i: int) -> Instance:
        return Instance(self.dense[i].copy(), self.sparse[i].copy(), int(self.t[i]),
                        int(self.y[i]), int(self.z[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.schema, self.dense[idx], self.sparse[idx], self.t[idx],
                       self.y[idx], self.z[idx])

    @classmethod
    def from_rows(cls, schema: FeatureSchema, rows: Sequence[Instance]) -> "Dataset":
        nd, ns = len(schema.dense_fields), len(schema.sparse_fields)
        if not rows:
            return cls(schema, np.zeros((0, nd)), np.zeros((0, ns), dtype=np.int64),
                       np.zeros(0), np.zeros(0), np.zeros(0))
        return cls(schema,
                   np.array([r.dense for r in rows], dtype=np.float64).reshape(len(rows), nd),
                   np.array([r.sparse for r in rows], dtype=np.int64).reshape(len(rows), ns),
                   [r.t for r in rows], [r.y for r in rows], [r.z for r in rows])


# ---------------------------------------------------------------------------
# CSV I/O

def _parse_int(cell, name, lineno):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"line {lineno}, column {name}: not numeric: {cell!r}") from None
    if not math.isfinite(v) or v != int(v):
        raise ParseError(f"line {lineno}, column {name}: not an integer code: {cell!r}")
    return int(v)


def load_csv(path, schema: FeatureSchema) -> Dataset:
    """Read a header-row CSV; columns are matched to the schema by name.

    Columns not named in the schema are ignored.
    """
    dense_rows, sparse_rows, t, y, z = [], [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn("file has no header row")
        header = [h.strip() for h in header]
        pos = {}
        for f in schema.fields:
            if f.name not in header:
                raise MissingColumn(f"column {f.name!r} not found in header")
            pos[f.name] = header.index(f.name)
        dense_idx = [pos[f.name] for f in schema.dense_fields]
        sparse_f = schema.sparse_fields
        tr, ck, cv = schema.treatment_field, schema.click_field, schema.conversion_field
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) < len(header):
                raise ParseError(f"line {lineno}: expected {len(header)} cells, got {len(rec)}")
            drow = []
            for f, i in zip(schema.dense_fields, dense_idx):
                try:
                    v = float(rec[i])
                except ValueError:
                    raise ParseError(f"line {lineno}, column {f.name}: "
                                     f"not numeric: {rec[i]!r}") from None
                drow.append(v)
            srow = []
            for f in sparse_f:
                c = _parse_int(rec[pos[f.name]], f.name, lineno)
                if not 0 <= c < f.cardinality:
                    raise CodeOutOfRange(f"line {lineno}, column {f.name}: code {c} "
                                         f"outside [0, {f.cardinality})")
                srow.append(c)
            tv = _parse_int(rec[pos[tr.name]], tr.name, lineno)
            if not 0 <= tv <= schema.K:
                raise CodeOutOfRange(f"line {lineno}: treatment {tv} outside [0, {schema.K}]")
            yv = _parse_int(rec[pos[ck.name]], ck.name, lineno)
            zv = _parse_int(rec[pos[cv.name]], cv.name, lineno)
            if yv not in (0, 1) or zv not in (0, 1):
                raise ParseError(f"line {lineno}: labels must be 0 or 1")
            if zv == 1 and yv == 0:
                raise ChainViolation(f"line {lineno}: conversion without click")
            dense_rows.append(drow)
            sparse_rows.append(srow)
            t.append(tv)
            y.append(yv)
            z.append(zv)
    n = len(t)
    return Dataset(schema,
                   np.array(dense_rows, dtype=np.float64).reshape(n, len(schema.dense_fields)),
                   np.array(sparse_rows, dtype=np.int64).reshape(n, len(sparse_f)),
                   t, y, z)


def save_csv(ds: Dataset, path):
    s = ds.schema
    dense_col = {f.name: j for j, f in enumerate(s.dense_fields)}
    sparse_col = {f.name: j for j, f in enumerate(s.sparse_fields)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in s.fields])
        for i in range(ds.N):
            out = []
            for f in s.fields:
                if f.role == "dense":
                    out.append(repr(float(ds.dense[i, dense_col[f.name]])))
                elif f.role == "sparse":
                    out.append(int(ds.sparse[i, sparse_col[f.name]]))
                elif f.role == "treatment":
                    out.append(int(ds.t[i]))
                elif f.role == "label_click":
                    out.append(int(ds.y[i]))
                else:
                    out.append(int(ds.z[i]))
            w.writerow(out)


# ---------------------------------------------------------------------------
# synthetic randomized trials

def _logit(p):
    return math.log(p / (1.0 - p))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class SyntheticSpec:
    """Logistic-linear outcome model per treatment arm.

    The linear predictor of arm t is ``intercept[t] + coeffs[t] @ u`` where
    ``u`` stacks the dense features and the sparse codes rescaled to
    [-1, 1] (code c of a cardinality-C field maps to 2c/(C-1) - 1).
    Coefficient arrays have shape (K+1, p_dense + p_sparse).
    """

    n: int
    p_dense: int
    p_sparse: int
    K: int
    seed: int
    ctr_coeffs: np.ndarray
    ctr_intercepts: np.ndarray
    cvr_coeffs: np.ndarray
    cvr_intercepts: np.ndarray
    sparse_cardinality: int = 5
    preset: Optional[str] = None

    def __post_init__(self):
        self.ctr_coeffs = np.asarray(self.ctr_coeffs, dtype=np.float64)
        self.cvr_coeffs = np.asarray(self.cvr_coeffs, dtype=np.float64)
        self.ctr_intercepts = np.asarray(self.ctr_intercepts, dtype=np.float64)
        self.cvr_intercepts = np.asarray(self.cvr_intercepts, dtype=np.float64)
        self.validate()

    def validate(self):
        if self.n < 0 or self.K < 1 or self.p_dense < 0 or self.p_sparse < 0:
            raise InvalidSpec("n >= 0, K >= 1 and non-negative feature counts required")
        if self.p_dense + self.p_sparse < 1:
            raise InvalidSpec("at least one feature required")
        if self.p_sparse and self.sparse_cardinality < 2:
            raise InvalidSpec("sparse_cardinality must be >= 2")
        p = self.p_dense + self.p_sparse
        for name in ("ctr_coeffs", "cvr_coeffs"):
            if getattr(self, name).shape != (self.K + 1, p):
                raise InvalidSpec(f"{name} must have shape {(self.K + 1, p)}, "
                                  f"got {getattr(self, name).shape}")
        for name in ("ctr_intercepts", "cvr_intercepts"):
            if getattr(self, name).shape != (self.K + 1,):
                raise InvalidSpec(f"{name} must have shape {(self.K + 1,)}")

    def schema(self) -> FeatureSchema:
        fields = [Field(f"d{j}", "dense") for j in range(self.p_dense)]
        fields += [Field(f"s{j}", "sparse", self.sparse_cardinality)
                   for j in range(self.p_sparse)]
        fields += [Field("treatment", "treatment", self.K + 1),
                   Field("click", "label_click"), Field("conversion", "label_conversion")]
        return FeatureSchema(tuple(fields), self.K)

    def design(self, dense, sparse) -> np.ndarray:
        if self.p_sparse:
            mapped = 2.0 * np.asarray(sparse, dtype=np.float64) / (self.sparse_cardinality - 1) - 1.0
        else:
            mapped = np.zeros((len(dense), 0))
        return np.hstack([np.asarray(dense, dtype=np.float64), mapped])

    def probabilities(self, dense, sparse, t):
        """True (pCTR, pCVR) for each row under treatment code(s) ``t``."""
        u = self.design(dense, sparse)
        t = np.broadcast_to(np.asarray(t), (len(u),))
        ctr = _sigmoid(self.ctr_intercepts[t] + np.einsum("ij,ij->i", u, self.ctr_coeffs[t]))
        cvr = _sigmoid(self.cvr_intercepts[t] + np.einsum("ij,ij->i", u, self.cvr_coeffs[t]))
        return ctr, cvr

    @classmethod
    def from_preset(cls, name: str, n: int, seed: int, K: int = 2) -> "SyntheticSpec":
        if name == "chainbias":
            return chainbias_spec(n, seed, K)
        if name == "neutral":
            return neutral_spec(n, seed, K)
        raise InvalidSpec(f"unknown preset {name!r}")


# Arm-level anchors at u = 0: control (pCTR, pCVR) = (0.1, 0.5); treatment 1
# (0.3, 0.4) so CVR uplift is -0.1 while CTCVR uplift is +0.07.
_CHAIN_ANCHORS = [(0.10, 0.50), (0.30, 0.40), (0.22, 0.44), (0.18, 0.46),
                  (0.26, 0.42), (0.15, 0.47)]

_CHAIN_CTR = np.array([
    [0.5, 0.3, 0.0, 0.0, 0.3, 0.0],
    [1.2, 0.3, 0.0, -0.6, 0.3, 0.5],
    [0.5, 1.0, 0.0, 0.5, -0.4, 0.0],
])
_CHAIN_CVR = np.array([
    [0.3, 0.0, 0.4, 0.0, 0.0, 0.3],
    [0.3, -0.5, 0.4, 0.0, 0.0, 0.3],
    [0.3, 0.0, 1.0, 0.0, 0.5, 0.3],
])


def chainbias_spec(n: int, seed: int, K: int = 2) -> SyntheticSpec:
    """Heterogeneous trial where treatment lifts clicks but lowers post-click
    conversion, so CVR-view and CTCVR-view uplifts disagree in sign."""
    if not 1 <= K <= len(_CHAIN_ANCHORS) - 1:
        raise InvalidSpec(f"chainbias preset supports 1 <= K <= {len(_CHAIN_ANCHORS) - 1}")
    ctr = np.empty((K + 1, 6))
    cvr = np.empty((K + 1, 6))
    for k in range(K + 1):
        # arms beyond the tabulated ones reuse the pattern of arm 1 or 2
        src = k if k < 3 else 1 + (k % 2)
        ctr[k], cvr[k] = _CHAIN_CTR[src], _CHAIN_CVR[src]
    anchors = _CHAIN_ANCHORS[:K + 1]
    return SyntheticSpec(n=n, p_dense=4, p_sparse=2, K=K, seed=seed,
                         ctr_coeffs=ctr, ctr_intercepts=[_logit(a[0]) for a in anchors],
                         cvr_coeffs=cvr, cvr_intercepts=[_logit(a[1]) for a in anchors],
                         sparse_cardinality=5, preset="chainbias")


def neutral_spec(n: int, seed: int, K: int = 2) -> SyntheticSpec:
    """Every arm shares the control arm's outcome model: all effects are 0."""
    ctr = np.tile(_CHAIN_CTR[0], (K + 1, 1))
    cvr = np.tile(_CHAIN_CVR[0], (K + 1, 1))
    return SyntheticSpec(n=n, p_dense=4, p_sparse=2, K=K, seed=seed,
                         ctr_coeffs=ctr, ctr_intercepts=[_logit(0.1)] * (K + 1),
                         cvr_coeffs=cvr, cvr_intercepts=[0.0] * (K + 1),
                         sparse_cardinality=5, preset="neutral")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Exact potential-outcome probabilities for every row and arm.

    ``pctr``/``pcvr`` are (N, K+1); ``tau_y``, ``tau_z`` and ``tau_cvr``
    are (N, K) with column k-1 holding treatment k.
    """

    pctr: np.ndarray
    pcvr: np.ndarray

    @property
    def tau_y(self):
        return self.pctr[:, 1:] - self.pctr[:, :1]

    @property
    def tau_z(self):
        p = self.pctr * self.pcvr
        return p[:, 1:] - p[:, :1]

    @property
    def tau_cvr(self):
        return self.pcvr[:, 1:] - self.pcvr[:, :1]

    def subset(self, idx) -> "GroundTruth":
        return GroundTruth(self.pctr[idx], self.pcvr[idx])

    def save_csv(self, path):
        ty, tz = self.tau_y, self.tau_z
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_index", "k", "tau_y", "tau_z"])
            for i in range(len(ty)):
                for k in range(ty.shape[1]):
                    w.writerow([i, k + 1, repr(float(ty[i, k])), repr(float(tz[i, k]))])


def generate_synthetic(spec: SyntheticSpec) -> Tuple[Dataset, GroundTruth]:
    """Draw a randomized trial: uniform treatment over {0..K}, click from
    pCTR(x, t), conversion from pCVR(x, t) given a click."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    dense = rng.standard_normal((n, spec.p_dense))
    sparse = rng.integers(0, spec.sparse_cardinality, size=(n, spec.p_sparse))
    t = rng.integers(0, spec.K + 1, size=n)
    u_click = rng.random(n)
    u_conv = rng.random(n)

    pctr = np.empty((n, spec.K + 1))
    pcvr = np.empty((n, spec.K + 1))
    for k in range(spec.K + 1):
        pctr[:, k], pcvr[:, k] = spec.probabilities(dense, sparse, k)
    rows = np.arange(n)
    y = (u_click < pctr[rows, t]).astype(np.int64)
    z = ((u_conv < pcvr[rows, t]) & (y == 1)).astype(np.int64)
    ds = Dataset(spec.schema(), dense, sparse, t, y, z)
    return ds, GroundTruth(pctr, pcvr)


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class StatsTable:
    """Dataset-level summary. Relative uplifts are None when the control
    rate is zero."""

    size: int
    features: int
    click_ratio: float
    conversion_ratio: float
    click_uplift: float
    relative_click_uplift: Optional[float]
    conversion_uplift: float
    relative_conversion_uplift: Optional[float]

    def as_dict(self):
        return dict(self.__dict__)


def _ratio(a, b):
    return None if b == 0 else a / b


def dataset_stats(ds: Dataset) -> StatsTable:
    if ds.N == 0:
        raise EmptyGroup("dataset is empty")
    treated = ds.t > 0
    control = ~treated
    if not treated.any() or not control.any():
        raise EmptyGroup("need both treated and control rows for uplift statistics")

    def uplift(col):
        tr = col[treated].mean()
        ct = col[control].mean()
        return float(tr - ct), _ratio(float(tr - ct), float(ct))

    cu, rcu = uplift(ds.y)
    vu, rvu = uplift(ds.z)
    return StatsTable(size=ds.N, features=ds.schema.f,
                      click_ratio=float(ds.y.mean()), conversion_ratio=float(ds.z.mean()),
                      click_uplift=cu, relative_click_uplift=rcu,
                      conversion_uplift=vu, relative_conversion_uplift=rvu)


@dataclass(frozen=True)
class GroupCounts:
    n_t: int
    n_c: int
    r_t: int
    r_c: int

    @property
    def uplift(self) -> Optional[float]:
        """r_t/n_t - r_c/n_c, or None when either group is empty."""
        if self.n_t == 0 or self.n_c == 0:
            return None
        return self.r_t / self.n_t - self.r_c / self.n_c


@dataclass(frozen=True)
class SegmentReport:
    treatment: int
    ctcvr: Tuple[GroupCounts, ...]
    cvr: Tuple[GroupCounts, ...]

    @property
    def segments(self):
        return len(self.ctcvr)

    def totals(self, view="ctcvr") -> GroupCounts:
        groups = getattr(self, view)
        return GroupCounts(*(sum(getattr(g, a) for g in groups)
                             for a in ("n_t", "n_c", "r_t", "r_c")))

    def sign_discordant(self) -> List[int]:
        """Segments with CVR uplift < 0 while CTCVR uplift > 0."""
        out = []
        for i, (a, b) in enumerate(zip(self.ctcvr, self.cvr)):
            if a.uplift is not None and b.uplift is not None and b.uplift < 0 < a.uplift:
                out.append(i)
        return out

    def to_records(self) -> List[dict]:
        recs = []
        for i, (a, b) in enumerate(zip(self.ctcvr, self.cvr)):
            recs.append({"segment": i,
                         "ctcvr_n_t": a.n_t, "ctcvr_n_c": a.n_c, "ctcvr_r_t": a.r_t,
                         "ctcvr_r_c": a.r_c, "ctcvr_uplift": a.uplift,
                         "cvr_n_t": b.n_t, "cvr_n_c": b.n_c, "cvr_r_t": b.r_t,
                         "cvr_r_c": b.r_c, "cvr_uplift": b.uplift})
        return recs


def _counts(t_is_k, z):
    return GroupCounts(int(t_is_k.sum()), int((~t_is_k).sum()),
                       int(z[t_is_k].sum()), int(z[~t_is_k].sum()))


def segment_uplift(ds: Dataset, segments: int = 10, seed: int = 0,
                   treatment_k: int = 1) -> SegmentReport:
    """Randomly partition rows with t in {0, k} and report per-segment
    conversion uplift on all rows (CTCVR view) and on clicked rows (CVR view)."""
    if segments < 1:
        raise ValueError("segments must be >= 1")
    if not 1 <= treatment_k <= ds.schema.K:
        raise CodeOutOfRange(f"treatment_k must be in [1, {ds.schema.K}]")
    idx = np.flatnonzero((ds.t == 0) | (ds.t == treatment_k))
    perm = np.random.default_rng(seed).permutation(idx)
    ctcvr, cvr = [], []
    for part in np.array_split(perm, segments):
        part = np.sort(part)
        is_k = ds.t[part] == treatment_k
        ctcvr.append(_counts(is_k, ds.z[part]))
        clicked = ds.y[part] == 1
        cvr.append(_counts(is_k[clicked], ds.z[part][clicked]))
    return SegmentReport(treatment_k, tuple(ctcvr), tuple(cvr))


def split(ds: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Random disjoint split; the first part holds round(fraction * N) rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(ds.N)
    n_first = int(math.floor(fraction * ds.N + 0.5))
    a, b = np.sort(perm[:n_first]), np.sort(perm[n_first:])
    if len(a) == 0 or len(b) == 0:
        warnings.warn(f"split of {ds.N} rows at {fraction} leaves one side empty")
    return ds.subset(a), ds.subset(b)
