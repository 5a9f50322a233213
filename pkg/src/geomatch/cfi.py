"""Feature interaction between the two views at coarse resolution.

Structure: one self+cross attention set, decoding of a per-view context
vector from a learned query, a query-guided cross attention, and a final
self+cross set. Blocks are pre-norm transformer layers with residual
connections, so zeroed weights reduce the whole stack to the identity.
Both plain softmax attention and linear attention (elu feature map) are
supported; the same weights process both views, which makes the forward
pass exactly symmetric under swapping the inputs.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import container
from .numerics import softmax

ATTENTION_KINDS = ("softmax", "linear")

# parameter names of one attention block, relative to its prefix
_BLOCK_FIELDS = (
    "wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo",
    "ln1_g", "ln1_b", "ln2_g", "ln2_b",
    "ff1", "ff1_b", "ff2", "ff2_b",
)
CFI_BLOCKS = ("enc1_self", "enc1_cross", "qdec", "guided", "enc2_self", "enc2_cross")


def attention(q, k, v, kind: str = "softmax") -> np.ndarray:
    """Scaled dot-product or linear attention over row vectors.

    Every output row of the softmax kind is a convex combination of v
    rows; the linear kind uses the positive feature map elu(x)+1 with the
    usual associativity-reordered normalization, so denominators are
    strictly positive.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention expects 2-D arrays (rows = tokens)")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"key count {k.shape[0]} != value count {v.shape[0]}")
    if kind == "softmax":
        logits = q @ k.T / math.sqrt(q.shape[1])
        w = softmax(logits, axis=1).astype(np.float64)
        return w @ v
    if kind == "linear":
        fq = _elu_plus_one(q)
        fk = _elu_plus_one(k)
        kv = fk.T @ v
        z = fq @ fk.sum(axis=0)
        return (fq @ kv) / z[:, None]
    raise ValueError(f"unknown attention kind {kind!r}")


def _elu_plus_one(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


@functools.lru_cache(maxsize=32)
def positional_encoding(h: int, w: int, d: int) -> np.ndarray:
    """Fixed 2-D sinusoidal encoding, flattened row-major to (h*w, d)."""
    if d % 4:
        raise ValueError("channel dim must be divisible by 4 for 2-D encoding")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    pe = np.zeros((h, w, d))
    n = d // 4
    omega = np.exp(-math.log(100.0) * np.arange(n) / max(n - 1, 1))
    for i in range(n):
        pe[:, :, 4 * i + 0] = np.sin(xs * omega[i])
        pe[:, :, 4 * i + 1] = np.cos(xs * omega[i])
        pe[:, :, 4 * i + 2] = np.sin(ys * omega[i])
        pe[:, :, 4 * i + 3] = np.cos(ys * omega[i])
    return pe.reshape(h * w, d)


def block_forward(x, source, params: dict, prefix: str, kind: str,
                  pe_x=None, pe_source=None) -> np.ndarray:
    """One pre-norm attention block: x attends to source, then feed-forward.

    The positional encodings are injected into the query/key paths only,
    so zeroed projection weights leave x unchanged through the residuals.
    """
    p = {f: params[f"{prefix}.{f}"] for f in _BLOCK_FIELDS}
    x = np.asarray(x, dtype=np.float64)
    src = np.asarray(source, dtype=np.float64)

    qin = layer_norm(x, p["ln1_g"], p["ln1_b"])
    kin = layer_norm(src, p["ln1_g"], p["ln1_b"])
    vin = kin
    if pe_x is not None:
        qin = qin + pe_x
    if pe_source is not None:
        kin = kin + pe_source
    m = attention(qin @ p["wq"] + p["bq"], kin @ p["wk"] + p["bk"],
                  vin @ p["wv"] + p["bv"], kind)
    x = x + m @ p["wo"] + p["bo"]

    h = layer_norm(x, p["ln2_g"], p["ln2_b"])
    h = np.maximum(h @ p["ff1"] + p["ff1_b"], 0.0)
    return x + h @ p["ff2"] + p["ff2_b"]


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, _ = np.linalg.qr(a)
    return q if rows >= cols else q.T


def init_block_params(rng: np.random.Generator, d: int, hidden: int | None = None) -> dict:
    """Seeded orthogonal-ish init scaled by 1/sqrt(d); biases zero."""
    hidden = hidden or 2 * d
    s = 1.0 / math.sqrt(d)
    p = {}
    for name in ("wq", "wk", "wv", "wo"):
        p[name] = (_orthogonal(rng, d, d) * s).astype(np.float32)
    for name in ("bq", "bk", "bv", "bo"):
        p[name] = np.zeros(d, dtype=np.float32)
    p["ln1_g"] = np.ones(d, dtype=np.float32)
    p["ln1_b"] = np.zeros(d, dtype=np.float32)
    p["ln2_g"] = np.ones(d, dtype=np.float32)
    p["ln2_b"] = np.zeros(d, dtype=np.float32)
    p["ff1"] = (_orthogonal(rng, d, hidden) * s).astype(np.float32)
    p["ff1_b"] = np.zeros(hidden, dtype=np.float32)
    p["ff2"] = (_orthogonal(rng, hidden, d) * s).astype(np.float32)
    p["ff2_b"] = np.zeros(d, dtype=np.float32)
    return p


def zero_block_params(d: int, hidden: int | None = None) -> dict:
    hidden = hidden or 2 * d
    shapes = {
        "wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
        "bq": (d,), "bk": (d,), "bv": (d,), "bo": (d,),
        "ln1_g": (d,), "ln1_b": (d,), "ln2_g": (d,), "ln2_b": (d,),
        "ff1": (d, hidden), "ff1_b": (hidden,), "ff2": (hidden, d), "ff2_b": (d,),
    }
    return {k: np.zeros(v, dtype=np.float32) for k, v in shapes.items()}


@dataclass
class CfiWeights:
    """Named parameters of the interaction stack plus the learned query."""

    params: dict
    kind: str = "softmax"

    def __post_init__(self):
        if self.kind not in ATTENTION_KINDS:
            raise ValueError(f"attention kind must be one of {ATTENTION_KINDS}")
        self.validate()

    @property
    def d(self) -> int:
        return int(self.params["query"].shape[1])

    def validate(self) -> None:
        if "query" not in self.params or self.params["query"].ndim != 2 \
                or self.params["query"].shape[0] != 1:
            raise ValueError("weights must contain a 1xd 'query' entry")
        d = self.d
        for blk in CFI_BLOCKS:
            for f in _BLOCK_FIELDS:
                name = f"{blk}.{f}"
                if name not in self.params:
                    raise ValueError(f"missing parameter {name}")
            if self.params[f"{blk}.wq"].shape != (d, d):
                raise ValueError(f"{blk}.wq shape inconsistent with d={d}")

    @classmethod
    def init(cls, seed: int, d: int = 256, kind: str = "softmax") -> "CfiWeights":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xCF1])))
        params = {}
        for blk in CFI_BLOCKS:
            for name, arr in init_block_params(rng, d).items():
                params[f"{blk}.{name}"] = arr
        params["query"] = (rng.normal(size=(1, d)) / math.sqrt(d)).astype(np.float32)
        return cls(params=params, kind=kind)

    @classmethod
    def zeros(cls, d: int = 256, kind: str = "softmax") -> "CfiWeights":
        params = {}
        for blk in CFI_BLOCKS:
            for name, arr in zero_block_params(d).items():
                params[f"{blk}.{name}"] = arr
        params["query"] = np.zeros((1, d), dtype=np.float32)
        return cls(params=params, kind=kind)

    def save(self, path) -> None:
        entries = {"attention_kind": np.array([float(ATTENTION_KINDS.index(self.kind))])}
        entries.update(self.params)
        container.write_tensors(path, entries)

    @classmethod
    def load(cls, path) -> "CfiWeights":
        entries = container.read_tensors(path)
        kind = ATTENTION_KINDS[int(entries.pop("attention_kind")[0])]
        return cls(params=entries, kind=kind)


@dataclass
class CfiOutput:
    feat_a3: np.ndarray
    feat_b3: np.ndarray
    feat_a2: np.ndarray
    feat_b2: np.ndarray
    query_a: np.ndarray
    query_b: np.ndarray


def cfi_forward(feat_a, feat_b, weights: CfiWeights) -> CfiOutput:
    """Run the interaction stack on two (h, w, d) coarse feature grids.

    Order: (1) self+cross encoder set, (2) context decode from the learned
    query against each view, (3) cross attention where each view's
    keys/values are shifted by the other view's decoded context vector,
    (4) final self+cross set. Deterministic given weights.
    """
    feat_a = np.asarray(feat_a)
    feat_b = np.asarray(feat_b)
    if feat_a.ndim != 3 or feat_b.ndim != 3:
        raise ValueError("feature grids must be (h, w, d)")
    if feat_a.shape != feat_b.shape:
        raise ValueError(f"grid shapes differ: {feat_a.shape} vs {feat_b.shape}")
    d = weights.d
    if feat_a.shape[2] != d:
        raise ValueError(f"channel dim {feat_a.shape[2]} != weights d={d}")
    h, w = feat_a.shape[:2]
    pe = positional_encoding(h, w, d)
    P, kind = weights.params, weights.kind

    xa = feat_a.reshape(-1, d).astype(np.float64)
    xb = feat_b.reshape(-1, d).astype(np.float64)

    # (1) encoder set
    xa = block_forward(xa, xa, P, "enc1_self", kind, pe, pe)
    xb = block_forward(xb, xb, P, "enc1_self", kind, pe, pe)
    a1 = block_forward(xa, xb, P, "enc1_cross", kind, pe, pe)
    b1 = block_forward(xb, xa, P, "enc1_cross", kind, pe, pe)

    # (2) context decode
    q0 = P["query"].astype(np.float64)
    qa = block_forward(q0, a1, P, "qdec", kind, None, pe)
    qb = block_forward(q0, b1, P, "qdec", kind, None, pe)

    # (3) context-guided cross attention
    a2 = block_forward(a1, b1 + qb, P, "guided", kind, pe, pe)
    b2 = block_forward(b1, a1 + qa, P, "guided", kind, pe, pe)

    # (4) final set
    sa = block_forward(a2, a2, P, "enc2_self", kind, pe, pe)
    sb = block_forward(b2, b2, P, "enc2_self", kind, pe, pe)
    a3 = block_forward(sa, sb, P, "enc2_cross", kind, pe, pe)
    b3 = block_forward(sb, sa, P, "enc2_cross", kind, pe, pe)

    return CfiOutput(
        feat_a3=a3.reshape(h, w, d).astype(np.float32),
        feat_b3=b3.reshape(h, w, d).astype(np.float32),
        feat_a2=a2.reshape(h, w, d).astype(np.float32),
        feat_b2=b2.reshape(h, w, d).astype(np.float32),
        query_a=qa.astype(np.float32),
        query_b=qb.astype(np.float32),
    )
