"""Differentiable quality-prediction network over splat regions.

Pipeline: a shared two-layer MLP lifts each 59-attribute splat to d dims and
a symmetric max-aggregation turns every region into one token (a trainable
stand-in for an externally pretrained region encoder; precomputed tokens can
be fed through ``forward_tokens_external``). Three graph-attention blocks
with a dual-residual layout refine the tokens over a kNN graph of region
centers, an attribute-aware attention pooling collapses them into a single
feature, and an affine head emits the scalar quality score.

All parameters live in float64 for bit-deterministic training; a float32
inference path is available through ``QualityModel.predict``.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, attend, layer_norm, softmax
from .errors import ContractError, DataError
from .regions import RegionBatch, knn_regions
from .rng import make_rng
from .splats import ATTR_COUNT


@dataclass(frozen=True)
class ModelHyper:
    d: int = 128          # token width
    heads: int = 4        # attention heads per GAT layer
    k_g: int = 8          # neighbors in the region-center graph
    ffn_mult: int = 4     # FFN expansion factor
    enc_hidden: int = 128 # hidden width of the per-splat encoder MLP
    blocks: int = 3       # GAT blocks

    def __post_init__(self) -> None:
        if self.d % self.heads != 0:
            raise ContractError(f"token width {self.d} not divisible by {self.heads} heads")


def _param_specs(hyper: ModelHyper) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init) triples in fixed draw order; init is
    'uniform:<fan_in>', 'ones', or 'zeros'."""
    d, h = hyper.d, hyper.heads
    dh = d // h
    f = hyper.ffn_mult * d
    specs: list[tuple[str, tuple[int, ...], str]] = [
        ("enc.w1", (ATTR_COUNT, hyper.enc_hidden), f"uniform:{ATTR_COUNT}"),
        ("enc.b1", (hyper.enc_hidden,), f"uniform:{ATTR_COUNT}"),
        ("enc.w2", (hyper.enc_hidden, d), f"uniform:{hyper.enc_hidden}"),
        ("enc.b2", (d,), f"uniform:{hyper.enc_hidden}"),
    ]
    for i in range(hyper.blocks):
        specs += [
            (f"blk{i}.ln1.g", (d,), "ones"),
            (f"blk{i}.ln1.b", (d,), "zeros"),
            (f"blk{i}.att.w", (d, d), f"uniform:{d}"),
            (f"blk{i}.att.a_src", (h, dh), f"uniform:{dh}"),
            (f"blk{i}.att.a_dst", (h, dh), f"uniform:{dh}"),
            (f"blk{i}.att.wo", (d, d), f"uniform:{d}"),
            (f"blk{i}.att.bo", (d,), f"uniform:{d}"),
            (f"blk{i}.ln2.g", (d,), "ones"),
            (f"blk{i}.ln2.b", (d,), "zeros"),
            (f"blk{i}.ffn.w1", (d, f), f"uniform:{d}"),
            (f"blk{i}.ffn.b1", (f,), f"uniform:{d}"),
            (f"blk{i}.ffn.w2", (f, d), f"uniform:{f}"),
            (f"blk{i}.ffn.b2", (d,), f"uniform:{f}"),
        ]
    specs += [
        ("pool.we", (d, 2 * d), f"uniform:{d}"),
        ("pool.wq", (2 * d, 1), "zeros"),  # zero query -> uniform pooling at start
        ("head.w", (d, 1), f"uniform:{d}"),
        ("head.b", (1,), f"uniform:{d}"),
    ]
    return specs


class ModelParams:
    """Named parameter tensors plus the hyperparameters they were built for."""

    def __init__(self, hyper: ModelHyper, tensors: dict[str, Tensor]):
        self.hyper = hyper
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        return ModelParams(self.hyper, {
            name: Tensor(t.data.copy(), requires_grad=True) for name, t in self.tensors.items()
        })


def init_params(hyper: ModelHyper, seed: int) -> ModelParams:
    """Uniform fan-in initialization; layer norms at identity, pooling query zero."""
    rng = make_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape, init in _param_specs(hyper):
        if init == "ones":
            data = np.ones(shape)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            fan_in = int(init.split(":")[1])
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(hyper, tensors)


def parameter_count(hyper: ModelHyper) -> int:
    return int(sum(np.prod(shape) for _, shape, _ in _param_specs(hyper)))


def describe(params: ModelParams) -> str:
    lines = [f"{name}: {tuple(t.data.shape)} ({t.data.size})"
             for name, t in params.tensors.items()]
    lines.append(f"total parameters: {parameter_count(params.hyper)}")
    return "\n".join(lines)


def build_adjacency(batch: RegionBatch, k_g: int) -> tuple[np.ndarray, np.ndarray]:
    """kNN graph over region centers in grouping space.

    Returns the (n, k_g) neighbor table (self in column 0) and an additive
    attention bias (n, n, 1): 0 on edges of the union-symmetrized graph,
    -inf elsewhere. The result is memoized on the batch (it is a pure
    function of the batch geometry and k_g).
    """
    cached = getattr(batch, "_adjacency_cache", None)
    if cached is not None and cached[0] == k_g:
        return cached[1], cached[2]
    centers = batch.center_grouping()
    n = len(centers)
    kg = min(k_g, n)
    table = knn_regions(centers, np.arange(n), kg)
    edges = np.zeros((n, n), dtype=bool)
    edges[np.arange(n)[:, None], table] = True
    edges |= edges.T
    bias = np.where(edges, 0.0, -np.inf)[:, :, None]
    table = table.astype(np.int32)
    batch._adjacency_cache = (k_g, table, bias)
    return table, bias


def encode_regions(embeddings: np.ndarray, params: ModelParams) -> Tensor:
    """Per-splat MLP then max-aggregation: (n, k, 59) -> (n, d) tokens."""
    n, k, a = embeddings.shape
    if a != ATTR_COUNT:
        raise ContractError(f"embeddings last axis must be {ATTR_COUNT}, got {a}")
    p = params.tensors
    x = Tensor(np.asarray(embeddings, dtype=p["enc.w1"].data.dtype))
    flat = x.reshape(n * k, a)
    z = (flat @ p["enc.w1"] + p["enc.b1"]).gelu() @ p["enc.w2"] + p["enc.b2"]
    return z.reshape(n, k, params.hyper.d).max(axis=1)


def gat_block(h: Tensor, bias: np.ndarray, params: ModelParams, block_index: int) -> Tensor:
    """Dual-residual block: graph attention over the masked adjacency, then a
    position-wise GELU feedforward, each behind a pre-layer-norm residual."""
    if not (0 <= block_index < params.hyper.blocks):
        raise ContractError(f"block_index {block_index} out of range")
    p = params.tensors
    hyper = params.hyper
    n, d = h.data.shape
    heads, dh = hyper.heads, hyper.d // hyper.heads
    pre = f"blk{block_index}"

    x = layer_norm(h, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
    wh = (x @ p[f"{pre}.att.w"]).reshape(n, heads, dh)
    s_src = (wh * p[f"{pre}.att.a_src"]).sum(axis=-1)  # (n, heads)
    s_dst = (wh * p[f"{pre}.att.a_dst"]).sum(axis=-1)
    logits = s_src.reshape(n, 1, heads) + s_dst.reshape(1, n, heads)
    scores = logits.leaky_relu(0.2) + Tensor(bias.astype(h.data.dtype))
    alpha = softmax(scores, axis=1)                    # rows sum to 1 over neighbors
    msg = attend(alpha, wh)
    attended = msg.reshape(n, d) @ p[f"{pre}.att.wo"] + p[f"{pre}.att.bo"]
    h1 = attended + h

    x2 = layer_norm(h1, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
    f = (x2 @ p[f"{pre}.ffn.w1"] + p[f"{pre}.ffn.b1"]).gelu() @ p[f"{pre}.ffn.w2"] + p[f"{pre}.ffn.b2"]
    return f + h1


def attention_pool(h: Tensor, params: ModelParams) -> tuple[Tensor, Tensor]:
    """Attention-weighted sum of tokens; returns (pooled (d,), weights (n,))."""
    p = params.tensors
    u = (h @ p["pool.we"]).gelu()          # (n, 2d)
    scores = u @ p["pool.wq"]              # (n, 1)
    alpha = softmax(scores, axis=0)
    pooled = (alpha * h).sum(axis=0)
    return pooled, alpha.reshape(len(h.data))


def forward_tokens(h0: Tensor, bias: np.ndarray, params: ModelParams) -> tuple[Tensor, Tensor]:
    h = h0
    for i in range(params.hyper.blocks):
        h = gat_block(h, bias, params, i)
    pooled, alpha = attention_pool(h, params)
    yhat = pooled @ params.tensors["head.w"] + params.tensors["head.b"]
    return yhat.reshape(()), alpha


class QualityModel:
    """Forward/backward wrapper around a ModelParams instance.

    ``forward`` returns (score, cache); ``backward(cache)`` fills and returns
    the parameter gradients. A cache is single-use: reusing it would silently
    double-accumulate, so a second backward raises ContractError.
    """

    def __init__(self, params: ModelParams):
        self.params = params

    @classmethod
    def new(cls, hyper: ModelHyper | None = None, seed: int = 0) -> "QualityModel":
        return cls(init_params(hyper or ModelHyper(), seed))

    def score_tensor(self, batch: RegionBatch) -> tuple[Tensor, dict]:
        """Differentiable score for one stimulus; aux carries pooling weights."""
        bias = build_adjacency(batch, self.params.hyper.k_g)[1]
        h0 = encode_regions(batch.embeddings, self.params)
        yhat, alpha = forward_tokens(h0, bias, self.params)
        return yhat, {"h0": h0, "pool_alpha": alpha}

    def forward(self, batch: RegionBatch) -> tuple[float, dict]:
        yhat, aux = self.score_tensor(batch)
        cache = {"output": yhat, "h0": aux["h0"], "pool_alpha": aux["pool_alpha"],
                 "consumed": False}
        return float(yhat.data), cache

    def backward(self, cache: dict, upstream: float = 1.0,
                 want_h0_grad: bool = False):
        if cache.get("consumed", True):
            raise ContractError("stale cache: backward already consumed this forward pass")
        cache["consumed"] = True
        self.params.zero_grad()
        cache["output"].backward(np.asarray(upstream, dtype=np.float64))
        grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                 for name, t in self.params.tensors.items()}
        if want_h0_grad:
            h0 = cache["h0"]
            return grads, (h0.grad if h0.grad is not None else np.zeros_like(h0.data))
        return grads

    def predict(self, batch: RegionBatch, float32: bool = False) -> float:
        if not float32:
            yhat, _ = self.score_tensor(batch)
            return float(yhat.data)
        p32 = ModelParams(self.params.hyper, {
            name: Tensor(t.data.astype(np.float32)) for name, t in self.params.tensors.items()
        })
        bias = build_adjacency(batch, self.params.hyper.k_g)[1]
        h0 = encode_regions(batch.embeddings.astype(np.float32), p32)
        yhat, _ = forward_tokens(h0, bias, p32)
        return float(yhat.data)

    def describe(self) -> str:
        return describe(self.params)


_MAGIC = b"SQCK"
_VERSION = 1


def save_checkpoint(params: ModelParams, path: str | os.PathLike,
                    sidecar: dict | None = None) -> None:
    """Binary container of named float64 tensors plus a JSON sidecar.

    Container: magic "SQCK", u32 version, u32 header length, JSON header
    {hyper, tensors: [{name, shape}]}, then the tensors' float64
    little-endian bytes in header order. The sidecar (``<path>.json``) holds
    hyperparameters plus whatever metadata the caller supplies (seed,
    preprocessing settings).
    """
    header = {
        "hyper": asdict(params.hyper),
        "tensors": [{"name": name, "shape": list(t.data.shape)}
                    for name, t in params.tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", _VERSION, len(blob)))
    buf.write(blob)
    for t in params.tensors.values():
        buf.write(t.data.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())
    meta = {"hyper": asdict(params.hyper)}
    if sidecar:
        meta.update(sidecar)
    with open(os.fspath(path) + ".json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise DataError(f"{os.fspath(path)}: not a checkpoint (bad magic)")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise DataError(f"{os.fspath(path)}: unsupported checkpoint version {version}")
    header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    hyper = ModelHyper(**header["hyper"])
    offset = 12 + header_len
    tensors: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        tensors[entry["name"]] = Tensor(data.copy(), requires_grad=True)
    sidecar = {}
    sidecar_path = os.fspath(path) + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path, encoding="utf-8") as f:
            sidecar = json.load(f)
    return ModelParams(hyper, tensors), sidecar
