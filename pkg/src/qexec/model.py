"""Graph-transformer execution-time regressor in plain numpy.

Graph branch: stacked single-head attention layers, each node attending over
itself and its DAG predecessors, then a node-wise mean pool. Global branch: two
rectified dense layers. The two are concatenated and passed through a dense head
(three rectified layers and a linear output).

Graphs of different size are packed into one disjoint-union batch, which is the
same computation as per-graph evaluation with summed gradients but without the
Python loop. Gradients are derived by hand; ``tests/gradcheck.py`` checks
them against central differences.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import make_rng

MAX_NEIGHBOURS = 3  # self + at most two wire predecessors


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    node_dim: int = 178
    global_dim: int = 41
    gt_layers: int = 3
    gt_hidden: int = 178
    global_fc_dims: tuple[int, ...] = (64, 64)
    head_dims: tuple[int, ...] = (128, 64, 32, 1)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "global_fc_dims", tuple(self.global_fc_dims))
        object.__setattr__(self, "head_dims", tuple(self.head_dims))
        if self.gt_layers < 1 or not self.global_fc_dims or not self.head_dims:
            raise ModelError("need at least one attention layer, one global layer and one head layer")
        if self.head_dims[-1] != 1:
            raise ModelError("the head must end in a single output unit")

    @property
    def concat_dim(self) -> int:
        return self.gt_hidden + self.global_fc_dims[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["global_fc_dims"] = list(self.global_fc_dims)
        d["head_dims"] = list(self.head_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        d_in = self.node_dim
        for layer in range(self.gt_layers):
            h = self.gt_hidden
            shapes[f"gt{layer}.wq"] = (d_in, h)
            shapes[f"gt{layer}.wk"] = (d_in, h)
            shapes[f"gt{layer}.wv"] = (d_in, h)
            shapes[f"gt{layer}.wo"] = (h, h)
            shapes[f"gt{layer}.bo"] = (h,)
            d_in = h
        d_in = self.global_dim
        for i, h in enumerate(self.global_fc_dims):
            shapes[f"glob{i}.w"] = (d_in, h)
            shapes[f"glob{i}.b"] = (h,)
            d_in = h
        d_in = self.concat_dim
        for i, h in enumerate(self.head_dims):
            shapes[f"head{i}.w"] = (d_in, h)
            shapes[f"head{i}.b"] = (h,)
            d_in = h
        return shapes


Params = dict  # name -> float64 array, insertion order = ModelConfig.param_shapes order


def init_params(config: ModelConfig, seed: int | None = None) -> Params:
    """Glorot-uniform weights, zero biases."""
    rng = make_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in config.param_shapes().items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            lim = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def check_params(params: Params, config: ModelConfig) -> None:
    shapes = config.param_shapes()
    if list(params) != list(shapes):
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        raise ModelError(f"parameter names do not match config (missing={missing}, extra={extra})")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ModelError(f"{name}: shape {params[name].shape} does not match config {shape}")
        if not np.all(np.isfinite(params[name])):
            raise ModelError(f"{name}: non-finite entries")


# -- graph batches ---------------------------------------------------------------------


def neighbour_table(num_nodes: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(n, 3) attention neighbourhood per node: self first, then predecessors in edge order."""
    nbr = np.repeat(np.arange(num_nodes)[:, None], MAX_NEIGHBOURS, axis=1)
    mask = np.zeros((num_nodes, MAX_NEIGHBOURS), dtype=bool)
    mask[:, 0] = True
    fill = np.ones(num_nodes, dtype=np.int64)
    for src, dst in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
        slot = fill[dst]
        if slot >= MAX_NEIGHBOURS:
            raise ModelError(f"node {dst} has more than {MAX_NEIGHBOURS - 1} predecessors")
        nbr[dst, slot] = src
        mask[dst, slot] = True
        fill[dst] += 1
    return nbr, mask


@dataclass
class GraphBatch:
    """Disjoint union of graphs plus their global vectors."""

    x: np.ndarray  # (N, node_dim)
    nbr: np.ndarray  # (N, 3)
    mask: np.ndarray  # (N, 3)
    counts: np.ndarray  # (B,)
    g: np.ndarray  # (B, global_dim)
    y: np.ndarray | None = None
    _scatter: list = field(default_factory=list, repr=False)
    _x_sparse: object = field(default=None, repr=False)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64)

    @property
    def segment(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.counts)), self.counts)

    @property
    def x_sparse(self):
        """CSR copy of ``x`` (scaled node rows are mostly zeros)."""
        if self._x_sparse is None:
            self._x_sparse = sp.csr_matrix(self.x)
        return self._x_sparse

    def scatter_matrices(self) -> list:
        """Sparse S_j with (S_j @ M)[u] = sum of M[i] over nodes i whose slot j is u."""
        if not self._scatter:
            n = len(self.x)
            cols = np.arange(n)
            for j in range(1, MAX_NEIGHBOURS):
                m = self.mask[:, j]
                data = np.ones(int(m.sum()))
                self._scatter.append(sp.csr_matrix((data, (self.nbr[m, j], cols[m])), shape=(n, n)))
        return self._scatter


def pack(graphs: Sequence[tuple[np.ndarray, np.ndarray]], globals_: np.ndarray, y=None, tables=None) -> GraphBatch:
    """Pack ``(node_matrix, edges)`` pairs into one batch.

    ``tables`` may hold precomputed :func:`neighbour_table` results per graph.
    """
    if not graphs:
        raise ModelError("empty batch")
    xs, nbrs, masks, counts = [], [], [], []
    offset = 0
    for i, (x, edges) in enumerate(graphs):
        n = len(x)
        if n == 0:
            raise ModelError("graph with no nodes")
        nbr, mask = tables[i] if tables is not None else neighbour_table(n, edges)
        xs.append(x)
        nbrs.append(nbr + offset)
        masks.append(mask)
        counts.append(n)
        offset += n
    g = np.atleast_2d(np.asarray(globals_, dtype=np.float64))
    if len(g) != len(graphs):
        raise ModelError("number of global vectors differs from number of graphs")
    return GraphBatch(
        np.concatenate(xs).astype(np.float64, copy=False),
        np.concatenate(nbrs),
        np.concatenate(masks),
        np.asarray(counts, dtype=np.int64),
        g,
        None if y is None else np.asarray(y, dtype=np.float64),
    )


# -- forward / backward -------------------------------------------------------------------


def _relu(x):
    return np.maximum(x, 0.0)


def _rowwise_matmul(a, b):
    # fixed summation order per output row, whatever the row's position (BLAS gives no such promise)
    if sp.issparse(a):
        return a @ b  # CSR products already walk each row on its own
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def _attention_layer(h, batch: GraphBatch, wq, wk, wv, wo, bo, rowwise: bool = False):
    # h may be a scipy sparse matrix (first layer); only used as a matmul operand
    mm = _rowwise_matmul if rowwise else np.matmul
    w_qkv = np.concatenate([wq, wk, wv], axis=1)
    qkv = h @ w_qkv if sp.issparse(h) else mm(h, w_qkv)
    dh_ = wq.shape[1]
    q, k, v = qkv[:, :dh_], qkv[:, dh_ : 2 * dh_], qkv[:, 2 * dh_ :]
    scale = 1.0 / math.sqrt(dh_)
    kg = [k[batch.nbr[:, j]] for j in range(MAX_NEIGHBOURS)]
    vg = [v[batch.nbr[:, j]] for j in range(MAX_NEIGHBOURS)]
    scores = np.stack([np.einsum("ij,ij->i", q, kj) for kj in kg], axis=1) * scale
    scores = np.where(batch.mask, scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    a = np.exp(scores)
    a = a / a.sum(axis=1, keepdims=True)
    c = a[:, 0:1] * vg[0]
    for j in range(1, MAX_NEIGHBOURS):
        c += a[:, j : j + 1] * vg[j]
    z = mm(c, wo) + bo
    cache = (h, w_qkv, q, kg, vg, a, c, z, scale)
    return _relu(z), cache


def _attention_backward(dout, batch: GraphBatch, wo, cache, need_input_grad: bool):
    h, w_qkv, q, kg, vg, a, c, z, scale = cache
    dz = dout * (z > 0)
    grads = {"wo": c.T @ dz, "bo": dz.sum(axis=0)}
    dc = dz @ wo.T
    da = np.stack([np.einsum("ij,ij->i", dc, vj) for vj in vg], axis=1)
    ds = a * (da - (a * da).sum(axis=1, keepdims=True))
    ds *= scale
    scatter = batch.scatter_matrices()
    dqkv = np.empty((len(q), 3 * q.shape[1]))
    dh_ = q.shape[1]
    dq, dk, dv = dqkv[:, :dh_], dqkv[:, dh_ : 2 * dh_], dqkv[:, 2 * dh_ :]
    np.multiply(ds[:, 0:1], kg[0], out=dq)
    np.multiply(ds[:, 0:1], q, out=dk)
    np.multiply(a[:, 0:1], dc, out=dv)
    for j in range(1, MAX_NEIGHBOURS):
        dq += ds[:, j : j + 1] * kg[j]
        dk += scatter[j - 1] @ (ds[:, j : j + 1] * q)
        dv += scatter[j - 1] @ (a[:, j : j + 1] * dc)
    gw = h.T @ dqkv
    gw = np.asarray(gw)
    grads["wq"] = gw[:, :dh_]
    grads["wk"] = gw[:, dh_ : 2 * dh_]
    grads["wv"] = gw[:, 2 * dh_ :]
    dh = dqkv @ w_qkv.T if need_input_grad else None
    return grads, dh


def _segment_mean(h, batch: GraphBatch, ordered: bool):
    if ordered:
        # sum each column in sorted order so node relabelling cannot change the bits
        out = np.empty((len(batch.counts), h.shape[1]))
        for b, (start, n) in enumerate(zip(batch.offsets, batch.counts)):
            out[b] = np.sort(h[start : start + n], axis=0).sum(axis=0) / n
        return out
    return np.add.reduceat(h, batch.offsets, axis=0) / batch.counts[:, None]


def _forward(params: Params, config: ModelConfig, batch: GraphBatch, ordered_pool: bool = False):
    if batch.x.shape[1] != config.node_dim:
        raise ModelError(f"node features have {batch.x.shape[1]} columns, config expects {config.node_dim}")
    if batch.g.shape[1] != config.global_dim:
        raise ModelError(f"global features have {batch.g.shape[1]} columns, config expects {config.global_dim}")
    if not (np.all(np.isfinite(batch.x)) and np.all(np.isfinite(batch.g))):
        raise ModelError("non-finite input features")

    caches = {"gt": [], "glob": [], "head": []}
    h = batch.x_sparse
    for layer in range(config.gt_layers):
        p = f"gt{layer}."
        h, cache = _attention_layer(
            h, batch, params[p + "wq"], params[p + "wk"], params[p + "wv"], params[p + "wo"], params[p + "bo"],
            rowwise=ordered_pool,
        )
        caches["gt"].append(cache)
    pooled = _segment_mean(h, batch, ordered_pool)

    u = batch.g
    for i in range(len(config.global_fc_dims)):
        zi = u @ params[f"glob{i}.w"] + params[f"glob{i}.b"]
        caches["glob"].append((u, zi))
        u = _relu(zi)

    u = np.concatenate([pooled, u], axis=1)
    last = len(config.head_dims) - 1
    for i in range(len(config.head_dims)):
        zi = u @ params[f"head{i}.w"] + params[f"head{i}.b"]
        caches["head"].append((u, zi))
        u = zi if i == last else _relu(zi)
    return u[:, 0], caches


def graph_embedding(params: Params, config: ModelConfig, batch: GraphBatch) -> np.ndarray:
    """Pooled graph-branch output, one row per graph."""
    h = batch.x_sparse
    for layer in range(config.gt_layers):
        p = f"gt{layer}."
        h, _ = _attention_layer(
            h, batch, params[p + "wq"], params[p + "wk"], params[p + "wv"], params[p + "wo"], params[p + "bo"]
        )
    return _segment_mean(h, batch, ordered=False)


def head_predict(params: Params, config: ModelConfig, pooled: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Output for given pooled graph vectors and (scaled) global rows.

    Rows are computed independently of their position in the input, so equal rows
    always give bit-equal outputs (Shapley differences rely on this).
    """
    u = g
    for i in range(len(config.global_fc_dims)):
        u = _relu(_rowwise_matmul(u, params[f"glob{i}.w"]) + params[f"glob{i}.b"])
    u = np.concatenate([pooled, u], axis=1)
    last = len(config.head_dims) - 1
    for i in range(len(config.head_dims)):
        u = _rowwise_matmul(u, params[f"head{i}.w"]) + params[f"head{i}.b"]
        if i != last:
            u = _relu(u)
    return u[:, 0]


def predict_batch(params: Params, config: ModelConfig, batch: GraphBatch, ordered_pool: bool = False) -> np.ndarray:
    return _forward(params, config, batch, ordered_pool)[0]


def forward(params: Params, config: ModelConfig, node_features, edges, global_vec) -> float:
    """Scalar output for one graph sample (order-independent pooling)."""
    batch = pack([(np.asarray(node_features, dtype=np.float64), edges)], np.asarray(global_vec)[None, :])
    return float(predict_batch(params, config, batch, ordered_pool=True)[0])


def attention_weights(params: Params, config: ModelConfig, batch: GraphBatch) -> list[np.ndarray]:
    """(N, 3) attention weights of every layer; masked slots are 0."""
    _, caches = _forward(params, config, batch)
    return [cache[5] for cache in caches["gt"]]


def backward(params: Params, config: ModelConfig, batch: GraphBatch, dout: np.ndarray, caches) -> Params:
    grads: Params = {}
    last = len(config.head_dims) - 1
    d = dout[:, None]
    for i in range(last, -1, -1):
        u, zi = caches["head"][i]
        if i != last:
            d = d * (zi > 0)
        grads[f"head{i}.w"] = u.T @ d
        grads[f"head{i}.b"] = d.sum(axis=0)
        d = d @ params[f"head{i}.w"].T
    dpooled, d = d[:, : config.gt_hidden], d[:, config.gt_hidden :]

    for i in range(len(config.global_fc_dims) - 1, -1, -1):
        u, zi = caches["glob"][i]
        d = d * (zi > 0)
        grads[f"glob{i}.w"] = u.T @ d
        grads[f"glob{i}.b"] = d.sum(axis=0)
        if i:
            d = d @ params[f"glob{i}.w"].T

    dh = (dpooled / batch.counts[:, None])[batch.segment]
    for layer in range(config.gt_layers - 1, -1, -1):
        p = f"gt{layer}."
        g, dh = _attention_backward(dh, batch, params[p + "wo"], caches["gt"][layer], need_input_grad=layer > 0)
        for k, v in g.items():
            grads[p + k] = v
    return {name: grads[name] for name in params}


def loss_and_grad(params: Params, config: ModelConfig, batch: GraphBatch) -> tuple[float, Params]:
    """Mean squared error over the batch and its exact gradient."""
    if batch.y is None or len(batch.y) == 0:
        raise ModelError("batch has no targets")
    pred, caches = _forward(params, config, batch)
    err = pred - batch.y
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(err**2))
    if not math.isfinite(loss):
        raise ModelError("non-finite loss: training diverged")
    grads = backward(params, config, batch, 2.0 * err / len(err), caches)
    return loss, grads


def batch_loss(params: Params, config: ModelConfig, batch: GraphBatch) -> float:
    pred = predict_batch(params, config, batch)
    return float(np.mean((pred - batch.y) ** 2))


# -- weight container ------------------------------------------------------------------
#
# layout: magic(8) | version u32 LE | header length u64 LE | header JSON (utf-8)
#         | payload (float64 little-endian, arrays back to back) | sha256 of all previous bytes

MAGIC = b"QEXECWT\x00"
FORMAT_VERSION = 1
_DIGEST = 32


class ContainerError(ModelError):
    pass


class ChecksumError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class ConfigMismatchError(ContainerError):
    pass


def save_params(params: Params, config: ModelConfig, path: str | Path, aux: dict | None = None, meta: dict | None = None) -> None:
    """Write weights (plus optional auxiliary arrays and JSON metadata)."""
    check_params(params, config)
    arrays = [("param", k, v) for k, v in params.items()]
    arrays += [("aux", k, np.asarray(v, dtype=np.float64)) for k, v in sorted((aux or {}).items())]
    entries, chunks, offset = [], [], 0
    for group, name, arr in arrays:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"config": config.to_dict(), "arrays": entries, "meta": meta or {}}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


@dataclass
class LoadedWeights:
    config: ModelConfig
    params: Params
    aux: dict
    meta: dict


def load_params(path: str | Path, expected: ModelConfig | None = None) -> LoadedWeights:
    data = Path(path).read_bytes()
    fixed = len(MAGIC) + 12
    if len(data) < fixed + _DIGEST or data[: len(MAGIC)] != MAGIC:
        if data[: len(MAGIC)] == MAGIC or len(data) < len(MAGIC):
            raise ChecksumError(f"{path}: truncated weight file")
        raise ContainerError(f"{path}: not a weight container")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch (corrupt or truncated file)")
    version, hlen = struct.unpack_from("<IQ", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, this reader supports {FORMAT_VERSION}")
    header = json.loads(body[fixed : fixed + hlen].decode("utf-8"))
    payload = body[fixed + hlen :]
    config = ModelConfig.from_dict(header["config"])
    if expected is not None and config != expected:
        diff = {k: (v, getattr(config, k)) for k, v in expected.to_dict().items() if config.to_dict()[k] != v}
        raise ConfigMismatchError(f"{path}: stored config differs from expected (expected, stored): {diff}")
    params, aux = {}, {}
    for e in header["arrays"]:
        raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).astype(np.float64)
        (params if e["group"] == "param" else aux)[e["name"]] = arr
    check_params(params, config)
    return LoadedWeights(config, params, aux, header["meta"])
