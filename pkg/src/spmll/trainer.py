"""Adam training loop with exponential learning-rate decay and adversarial mixing.

One logical thread owns the parameters. Shuffling is a pure function of
(seed, epoch), initialization is a pure function of the seed, and attacks are
deterministic under the default config, so identical configs give identical
checkpoints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .adversarial import AdvConfig, adversarial_batch
from .corrgraph import CorrelationGraph, load_graph
from .data import Dataset, split_and_batch
from .errors import InvalidInputError, ShapeError, TrainingDivergedError
from .losses import DEFAULT_FOCAL_ALPHA, DEFAULT_FOCAL_GAMMA, LOSS_KINDS, batch_loss
from .model import Gradients, ModelDims, VerbClassifier, backward, init_params, save_checkpoint

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    lr: float = 2e-4

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            lr=lr,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place; increments the shared timestep once."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class ExpSchedule:
    base_lr: float = 2e-4
    gamma: float = 0.9
    epoch: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidInputError(f"discount factor must be in (0, 1], got {self.gamma}")


def scheduler_step(schedule: ExpSchedule) -> float:
    """Learning rate for the upcoming epoch: base_lr * gamma**epoch; call once per epoch."""
    lr = schedule.base_lr * schedule.gamma**schedule.epoch
    schedule.epoch += 1
    return lr


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch: int = 64
    seed: int = 0
    loss: str = "bce"
    gamma: float = DEFAULT_FOCAL_GAMMA
    alpha: float = DEFAULT_FOCAL_ALPHA
    adv: AdvConfig = field(default_factory=AdvConfig)
    graph_path: str | None = None
    hidden: int = 1024
    layers: int = 2
    embed_dim: int | None = None  # defaults to hidden
    gcn_layers: int = 2
    cosine_scale: float = 10.0
    lr: float = 2e-4
    gamma_lr: float = 0.9
    knn_k: int = 3
    smooth_s: float = 0.5
    checkpoint_out: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch < 1:
            raise InvalidInputError(f"batch must be >= 1, got {self.batch}")
        if self.loss not in LOSS_KINDS:
            raise InvalidInputError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")

    @property
    def d_e(self) -> int:
        return self.embed_dim if self.embed_dim is not None else self.hidden

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


def _param_norms(params: dict[str, np.ndarray]) -> dict[str, float]:
    return {k: float(np.linalg.norm(v)) for k, v in params.items()}


def _combine_grads(a: Gradients, b: Gradients) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for i in range(len(a.encoder_w)):
        out[f"encoder_w{i}"] = 0.5 * (a.encoder_w[i] + b.encoder_w[i])
        out[f"encoder_b{i}"] = 0.5 * (a.encoder_b[i] + b.encoder_b[i])
    out["centers"] = 0.5 * (a.centers + b.centers)
    for j in range(len(a.gcn_w)):
        out[f"gcn_w{j}"] = 0.5 * (a.gcn_w[j] + b.gcn_w[j])
    return out


def _grads_dict(g: Gradients) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for i in range(len(g.encoder_w)):
        out[f"encoder_w{i}"] = g.encoder_w[i]
        out[f"encoder_b{i}"] = g.encoder_b[i]
    out["centers"] = g.centers
    for j in range(len(g.gcn_w)):
        out[f"gcn_w{j}"] = g.gcn_w[j]
    return out


def train(
    dataset: Dataset,
    config: TrainConfig,
    graph: CorrelationGraph | None = None,
) -> tuple[VerbClassifier, list[dict]]:
    """Run the full optimization; returns the model and per-epoch log records.

    With adversarial training enabled the per-batch loss is the average of the
    clean-batch and adversarial-batch losses. A non-finite loss aborts with a
    parameter-norm snapshot. Writes config.checkpoint_out at the end if set.
    """
    if len(dataset) == 0:
        raise InvalidInputError("dataset is empty")
    if config.gcn_layers > 0 and graph is None:
        if config.graph_path is None:
            raise InvalidInputError("gcn_layers > 0 requires a correlation graph (--graph)")
        graph = load_graph(config.graph_path)
    dims = ModelDims(
        d_in=dataset.d_in,
        d_h=config.hidden,
        d_e=config.d_e,
        mlp_layers=config.layers,
        n_classes=dataset.l,
        gcn_layers=config.gcn_layers,
    )
    model = init_params(dims, config.seed, graph=graph if config.gcn_layers > 0 else None,
                        cosine_scale=config.cosine_scale)
    params = model.parameters()
    state = AdamState.for_params(params, lr=config.lr)
    schedule = ExpSchedule(base_lr=config.lr, gamma=config.gamma_lr)

    def loss_fn(logits: np.ndarray, positives: np.ndarray) -> tuple[float, np.ndarray]:
        return batch_loss(config.loss, logits, positives, config.gamma, config.alpha)

    log: list[dict] = []
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        state.lr = scheduler_step(schedule)
        total_loss = 0.0
        for batch_no, idx in enumerate(split_and_batch(dataset, config.batch, config.seed, epoch)):
            x = dataset.embeddings[idx]
            positives = dataset.positives[idx]

            x_adv = None
            if config.adv.method != "none":
                rng = None
                if config.adv.random_start:
                    rng = np.random.default_rng([config.seed, 3, epoch, batch_no])
                _, x_adv = adversarial_batch(model, loss_fn, x, positives, config.adv, rng=rng)

            model.forward(x)
            loss_clean, dlogits = loss_fn(model.cached_logits, positives)
            grads_clean = backward(model, x, dlogits)

            if x_adv is None:
                loss_value = loss_clean
                grads = _grads_dict(grads_clean)
            else:
                model.forward(x_adv)
                loss_adv, dlogits_adv = loss_fn(model.cached_logits, positives)
                grads_adv = backward(model, x_adv, dlogits_adv)
                loss_value = 0.5 * (loss_clean + loss_adv)
                grads = _combine_grads(grads_clean, grads_adv)

            if not np.isfinite(loss_value):
                raise TrainingDivergedError(
                    f"non-finite loss {loss_value!r} at epoch {epoch}, batch {batch_no}",
                    epoch=epoch,
                    batch=batch_no,
                    param_norms=_param_norms(params),
                )
            adam_step(params, grads, state)
            total_loss += loss_value * len(idx)
        log.append(
            {
                "epoch": epoch,
                "lr": state.lr,
                "mean_loss": total_loss / len(dataset),
                "wall_time_s": time.monotonic() - t0,
            }
        )
    if config.checkpoint_out is not None:
        save_checkpoint(model, config.checkpoint_out, graph_path=config.graph_path)
    return model, log
