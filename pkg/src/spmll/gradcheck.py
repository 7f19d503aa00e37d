"""Central finite-difference verification of the analytic gradients.

The oracle only ever calls the forward pass and the loss value; backward() is
the code under test. Relative error uses |a - n| / max(|a| + |n|, 1e-3):
central differences at step 1e-5 on O(1) losses carry roughly 1e-8 of
absolute noise, so entries smaller than 1e-3 are effectively compared
absolutely (at 1e-7 resolution) instead of drowning in difference noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corrgraph import ClassSemantic, CorrelationGraph, build_graph
from .losses import LOSS_KINDS, batch_loss
from .model import ModelDims, VerbClassifier, backward, init_params

FD_STEP = 1e-5
REL_ERR_FLOOR = 1e-3


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), REL_ERR_FLOOR)
    return float((np.abs(analytic - numeric) / denom).max())


def fd_gradient(fn, array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar fn() w.r.t. an array mutated in place."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + step
        up = fn()
        array[idx] = orig - step
        down = fn()
        array[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_err: float
    worst_tensor: str
    n_models: int


def _random_graph(rng: np.random.Generator, l: int, d_sem: int = 5) -> CorrelationGraph:
    # positive-orthant embeddings keep every pairwise similarity positive, so
    # no row degenerates after negative-value clamping
    semantics = [
        ClassSemantic(
            class_id=i, name=f"c{i}", definition="x", embedding=rng.uniform(0.1, 1.0, size=d_sem)
        )
        for i in range(l)
    ]
    k = int(rng.integers(1, l))
    s = float(rng.uniform(0.3, 0.7))
    return build_graph(semantics, k=k, s=s)


def check_model(
    model: VerbClassifier,
    x: np.ndarray,
    positives: np.ndarray,
    loss_kind: str,
    step: float = FD_STEP,
) -> tuple[float, str]:
    """Compare backward() to finite differences; returns (max rel err, worst tensor)."""

    def loss_value() -> float:
        model.forward(x)
        return batch_loss(loss_kind, model.cached_logits, positives)[0]

    model.forward(x)
    _, dlogits = batch_loss(loss_kind, model.cached_logits, positives)
    grads = backward(model, x, dlogits)

    analytic: dict[str, np.ndarray] = dict(model.parameters())
    analytic_grads: dict[str, np.ndarray] = {}
    for i in range(len(grads.encoder_w)):
        analytic_grads[f"encoder_w{i}"] = grads.encoder_w[i]
        analytic_grads[f"encoder_b{i}"] = grads.encoder_b[i]
    analytic_grads["centers"] = grads.centers
    for j in range(len(grads.gcn_w)):
        analytic_grads[f"gcn_w{j}"] = grads.gcn_w[j]

    worst = (0.0, "none")
    for name, tensor in analytic.items():
        numeric = fd_gradient(loss_value, tensor, step)
        err = relative_error(analytic_grads[name], numeric)
        if err > worst[0]:
            worst = (err, name)
    x_numeric = fd_gradient(loss_value, x, step)
    err = relative_error(grads.x, x_numeric)
    if err > worst[0]:
        worst = (err, "input")
    return worst


def run_gradcheck(seed: int, n_models: int = 24, step: float = FD_STEP) -> GradCheckResult:
    """Sweep random tiny models across all loss kinds and GCN depths 0..2."""
    rng = np.random.default_rng(seed)
    worst = (0.0, "none")
    for i in range(n_models):
        loss_kind = LOSS_KINDS[i % len(LOSS_KINDS)]
        gcn_layers = (i // len(LOSS_KINDS)) % 3
        dims = ModelDims(
            d_in=int(rng.integers(2, 9)),
            d_h=int(rng.integers(2, 9)),
            d_e=int(rng.integers(2, 9)),
            mlp_layers=int(rng.integers(1, 4)),
            n_classes=int(rng.integers(2, 7)),
            gcn_layers=gcn_layers,
        )
        graph = _random_graph(rng, dims.n_classes) if gcn_layers > 0 else None
        model = init_params(dims, seed=int(rng.integers(0, 2**31)), graph=graph)
        n = int(rng.integers(1, 5))
        x = rng.normal(size=(n, dims.d_in))
        positives = rng.integers(0, dims.n_classes, size=n)
        err, tensor = check_model(model, x, positives, loss_kind, step)
        if err > worst[0]:
            worst = (err, f"model {i} ({loss_kind}, J={gcn_layers}): {tensor}")
    return GradCheckResult(max_rel_err=worst[0], worst_tensor=worst[1], n_models=n_models)
