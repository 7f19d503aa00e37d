"""Cosine classifier over frozen-backbone embeddings with graph-refined centers.

Architecture: a small trainable MLP maps input embeddings into the class
space; learnable per-class center vectors are refined by a GCN stack that
propagates along the class-correlation graph (plus a residual back to the
raw centers); scores are temperature-scaled cosine similarities squashed
through independent sigmoids (multi-label head, no cross-class softmax).

Forward and backward passes are explicit numpy; ``backward`` returns exact
analytic gradients for every trainable tensor and for the input batch (the
input gradient feeds the adversarial attacks).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .corrgraph import CorrelationGraph
from .errors import (
    InvalidInputError,
    MissingForwardCacheError,
    NumericDegeneracyError,
    ShapeError,
)

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelDims:
    d_in: int
    d_h: int
    d_e: int
    mlp_layers: int
    n_classes: int
    gcn_layers: int

    def __post_init__(self):
        for name in ("d_in", "d_h", "d_e", "mlp_layers", "n_classes"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gcn_layers < 0:
            raise InvalidInputError(f"gcn_layers must be >= 0, got {self.gcn_layers}")

    def layer_sizes(self) -> list[tuple[int, int]]:
        widths = [self.d_in] + [self.d_h] * (self.mlp_layers - 1) + [self.d_e]
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class MlpEncoder:
    """Rectifier MLP; no activation after the last layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Returns (output, per-layer pre-activations, per-layer inputs)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"input batch must be (n, {self.d_in}), got {x.shape}")
        pre: list[np.ndarray] = []
        inputs: list[np.ndarray] = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
        return h, pre, inputs


@dataclass
class ClassCenters:
    """Learnable per-class vectors, stored with classes as rows (L x d_e)."""

    matrix: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]


@dataclass
class GcnStack:
    """Square propagation weights, one per layer; empty list means no GCN."""

    weights: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass
class Gradients:
    encoder_w: list[np.ndarray]
    encoder_b: list[np.ndarray]
    centers: np.ndarray
    gcn_w: list[np.ndarray]
    x: np.ndarray


@dataclass
class _ForwardCache:
    x: np.ndarray
    pre: list[np.ndarray]
    inputs: list[np.ndarray]
    e: np.ndarray
    e_norm: np.ndarray
    e_unit: np.ndarray
    c_list: list[np.ndarray]  # [C_1, ..., C_{J+1}] (just [C_1] when J = 0)
    m_list: list[np.ndarray]  # pre-activations of each GCN layer
    c_hat: np.ndarray
    c_norm: np.ndarray
    c_unit: np.ndarray
    cos: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class VerbClassifier:
    encoder: MlpEncoder
    centers: ClassCenters
    gcn: GcnStack
    graph: CorrelationGraph | None
    cosine_scale: float
    _cache: _ForwardCache | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.cosine_scale <= 0:
            raise InvalidInputError(f"cosine_scale must be positive, got {self.cosine_scale}")
        if self.gcn.n_layers > 0:
            if self.graph is None:
                raise InvalidInputError("a correlation graph is required when gcn layers > 0")
            if self.graph.l != self.centers.n_classes:
                raise ShapeError(
                    f"graph has {self.graph.l} classes, centers have {self.centers.n_classes}"
                )

    @property
    def n_classes(self) -> int:
        return self.centers.n_classes

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Per-class probabilities for a batch; caches intermediates for backward()."""
        e, pre, inputs = self.encoder.forward_cached(x)
        c_hat, c_list, m_list = _gcn_forward(self.centers.matrix, self.graph, self.gcn)
        cos, e_norm, e_unit, c_norm, c_unit = _cosine_matrix(e, c_hat)
        logits = cos * self.cosine_scale
        probs = _sigmoid(logits)
        self._cache = _ForwardCache(
            x=np.asarray(x, dtype=np.float64),
            pre=pre,
            inputs=inputs,
            e=e,
            e_norm=e_norm,
            e_unit=e_unit,
            c_list=c_list,
            m_list=m_list,
            c_hat=c_hat,
            c_norm=c_norm,
            c_unit=c_unit,
            cos=cos,
            logits=logits,
            probs=probs,
        )
        return probs

    @property
    def cached_logits(self) -> np.ndarray:
        if self._cache is None:
            raise MissingForwardCacheError("forward() has not been called")
        return self._cache.logits

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat name -> tensor view of every trainable array (shared memory)."""
        params: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.encoder.weights, self.encoder.biases)):
            params[f"encoder_w{i}"] = w
            params[f"encoder_b{i}"] = b
        params["centers"] = self.centers.matrix
        for j, w in enumerate(self.gcn.weights):
            params[f"gcn_w{j}"] = w
        return params


def init_params(dims: ModelDims, seed: int, graph: CorrelationGraph | None = None,
                cosine_scale: float = 10.0) -> VerbClassifier:
    """Deterministic parameter initialization.

    Encoder weights and biases are uniform with fan-in scaling; centers are
    zero-mean Gaussian; GCN weights start at identity plus small noise so the
    residual path dominates early training.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in dims.layer_sizes():
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    centers = rng.normal(0.0, 1.0 / np.sqrt(dims.d_e), size=(dims.n_classes, dims.d_e))
    gcn_w = [
        np.eye(dims.d_e) + rng.normal(0.0, 1e-2, size=(dims.d_e, dims.d_e))
        for _ in range(dims.gcn_layers)
    ]
    return VerbClassifier(
        encoder=MlpEncoder(weights=weights, biases=biases),
        centers=ClassCenters(matrix=centers),
        gcn=GcnStack(weights=gcn_w),
        graph=graph,
        cosine_scale=cosine_scale,
    )


def encoder_forward(model: VerbClassifier, x: np.ndarray) -> np.ndarray:
    return model.encoder.forward(x)


def gcn_refine(centers: ClassCenters, graph: CorrelationGraph | None, gcn: GcnStack) -> np.ndarray:
    """Propagate centers through the GCN stack and add the residual.

    Zero layers bypass refinement entirely and return the raw centers.
    """
    return _gcn_forward(centers.matrix, graph, gcn)[0]


def _gcn_forward(
    c1: np.ndarray, graph: CorrelationGraph | None, gcn: GcnStack
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    c_list = [c1]
    m_list: list[np.ndarray] = []
    if gcn.n_layers == 0:
        return c1, c_list, m_list
    if graph is None:
        raise InvalidInputError("a correlation graph is required when gcn layers > 0")
    a_hat = graph.entries
    c = c1
    for w in gcn.weights:
        if w.shape != (c1.shape[1], c1.shape[1]):
            raise ShapeError(f"gcn weight shape {w.shape} != ({c1.shape[1]}, {c1.shape[1]})")
        m = a_hat @ c @ w
        c = np.maximum(m, 0.0)
        m_list.append(m)
        c_list.append(c)
    return c1 + c, c_list, m_list


def predict_probs(e_batch: np.ndarray, c_hat: np.ndarray, cosine_scale: float) -> np.ndarray:
    """Independent per-class probabilities from scaled cosine similarities."""
    if cosine_scale <= 0:
        raise InvalidInputError(f"cosine_scale must be positive, got {cosine_scale}")
    cos = _cosine_matrix(e_batch, c_hat)[0]
    return _sigmoid(cos * cosine_scale)


def backward(model: VerbClassifier, x_batch: np.ndarray, loss_grad: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients given dLoss/dlogits for the cached forward pass."""
    cache = model._cache
    if cache is None:
        raise MissingForwardCacheError("forward() must run before backward()")
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if cache.x.shape != x_batch.shape or not np.array_equal(cache.x, x_batch):
        raise MissingForwardCacheError("cached forward pass does not match x_batch")
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape != cache.logits.shape:
        raise ShapeError(f"loss_grad shape {loss_grad.shape} != logits shape {cache.logits.shape}")

    dcos = loss_grad * model.cosine_scale
    # cos = e_unit @ c_unit.T
    d_e_unit = dcos @ cache.c_unit
    d_c_unit = dcos.T @ cache.e_unit
    de = _unit_norm_backward(d_e_unit, cache.e_unit, cache.e_norm)
    dc_hat = _unit_norm_backward(d_c_unit, cache.c_unit, cache.c_norm)

    # residual: c_hat = C_1 + C_{J+1} (or plain C_1 when the stack is empty)
    d_centers = dc_hat.copy()
    if model.gcn.n_layers > 0:
        a_hat_t = model.graph.entries.T
        d_gcn_w: list[np.ndarray] = [np.empty(0)] * model.gcn.n_layers
        dc = dc_hat
        for j in range(model.gcn.n_layers - 1, -1, -1):
            dm = dc * (cache.m_list[j] > 0)
            propagated = model.graph.entries @ cache.c_list[j]
            d_gcn_w[j] = propagated.T @ dm
            dc = a_hat_t @ (dm @ model.gcn.weights[j].T)
        d_centers += dc
    else:
        d_gcn_w = []

    # encoder chain; no activation after the last layer
    d_enc_w: list[np.ndarray] = [np.empty(0)] * len(model.encoder.weights)
    d_enc_b: list[np.ndarray] = [np.empty(0)] * len(model.encoder.weights)
    dz = de
    last = len(model.encoder.weights) - 1
    for i in range(last, -1, -1):
        if i < last:
            dz = dz * (cache.pre[i] > 0)
        d_enc_w[i] = cache.inputs[i].T @ dz
        d_enc_b[i] = dz.sum(axis=0)
        dz = dz @ model.encoder.weights[i].T
    return Gradients(encoder_w=d_enc_w, encoder_b=d_enc_b, centers=d_centers, gcn_w=d_gcn_w, x=dz)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _cosine_matrix(
    e: np.ndarray, c_hat: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    e = np.asarray(e, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if e.ndim != 2 or c_hat.ndim != 2 or e.shape[1] != c_hat.shape[1]:
        raise ShapeError(f"incompatible shapes for cosine: {e.shape} vs {c_hat.shape}")
    e_norm = np.linalg.norm(e, axis=1)
    c_norm = np.linalg.norm(c_hat, axis=1)
    if np.any(e_norm == 0):
        raise NumericDegeneracyError(f"zero-norm embedding at row {int(np.nonzero(e_norm == 0)[0][0])}")
    if np.any(c_norm == 0):
        raise NumericDegeneracyError(f"zero-norm class center {int(np.nonzero(c_norm == 0)[0][0])}")
    e_norm = np.maximum(e_norm, NORM_FLOOR)
    c_norm = np.maximum(c_norm, NORM_FLOOR)
    e_unit = e / e_norm[:, None]
    c_unit = c_hat / c_norm[:, None]
    return e_unit @ c_unit.T, e_norm, e_unit, c_norm, c_unit


def _unit_norm_backward(d_unit: np.ndarray, unit: np.ndarray, norm: np.ndarray) -> np.ndarray:
    """Backprop through row-wise v / ||v|| given upstream gradient on the unit rows."""
    inner = (d_unit * unit).sum(axis=1, keepdims=True)
    return (d_unit - inner * unit) / norm[:, None]


def save_checkpoint(model: VerbClassifier, path: str | os.PathLike, graph_path: str | None) -> None:
    """Atomic JSON checkpoint; float lists round-trip bit-exactly."""
    enc = model.encoder
    dims = ModelDims(
        d_in=enc.d_in,
        d_h=enc.weights[0].shape[1] if len(enc.weights) > 1 else enc.d_out,
        d_e=enc.d_out,
        mlp_layers=len(enc.weights),
        n_classes=model.n_classes,
        gcn_layers=model.gcn.n_layers,
    )
    doc = {
        "dims": {
            "d_in": dims.d_in,
            "d_h": dims.d_h,
            "d_e": dims.d_e,
            "mlp_layers": dims.mlp_layers,
            "n_classes": dims.n_classes,
            "gcn_layers": dims.gcn_layers,
        },
        "encoder": [
            {"weight": w.tolist(), "bias": b.tolist()}
            for w, b in zip(enc.weights, enc.biases)
        ],
        "centers": model.centers.matrix.tolist(),
        "gcn": [w.tolist() for w in model.gcn.weights],
        "cosine_scale": model.cosine_scale,
        "graph_path": graph_path,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike, graph: CorrelationGraph | None = None) -> VerbClassifier:
    """Rebuild a classifier from a checkpoint; the graph is supplied by the caller."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    encoder = MlpEncoder(
        weights=[np.asarray(layer["weight"], dtype=np.float64) for layer in doc["encoder"]],
        biases=[np.asarray(layer["bias"], dtype=np.float64) for layer in doc["encoder"]],
    )
    return VerbClassifier(
        encoder=encoder,
        centers=ClassCenters(matrix=np.asarray(doc["centers"], dtype=np.float64)),
        gcn=GcnStack(weights=[np.asarray(w, dtype=np.float64) for w in doc["gcn"]]),
        graph=graph,
        cosine_scale=float(doc["cosine_scale"]),
    )


def checkpoint_graph_path(path: str | os.PathLike) -> str | None:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)["graph_path"]


def export_centers(model: VerbClassifier, path: str | os.PathLike) -> None:
    """CSV of per-class refined (post-GCN) and raw (pre-GCN) center coordinates."""
    c1 = model.centers.matrix
    c_hat = gcn_refine(model.centers, model.graph, model.gcn)
    d = c1.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["class_id"] + [f"post_{j}" for j in range(d)] + [f"pre_{j}" for j in range(d)]
        )
        for cid in range(c1.shape[0]):
            writer.writerow(
                [cid] + [repr(float(v)) for v in c_hat[cid]] + [repr(float(v)) for v in c1[cid]]
            )
