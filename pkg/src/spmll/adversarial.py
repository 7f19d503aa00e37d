"""FGSM and PGD attacks on the embedding inputs of the trainable stack.

Perturbations live in an L-infinity ball around the frozen-backbone embedding
(the only gradient path the trainable stack exposes). Attacks never mutate
model parameters; they only consume input gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError, ShapeError
from .model import VerbClassifier, backward

ADV_METHODS = ("none", "fgsm", "pgd")

# loss_fn(logits, positives) -> (scalar loss, dLoss/dlogits)
LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class AdvConfig:
    method: str = "none"
    epsilon: float = 0.0125
    ball_radius: float = 0.05
    steps: int = 5
    random_start: bool = False

    def __post_init__(self):
        if self.method not in ADV_METHODS:
            raise InvalidInputError(f"adv method must be one of {ADV_METHODS}, got {self.method!r}")
        if self.method != "none":
            if self.epsilon <= 0:
                raise InvalidInputError(f"epsilon must be positive, got {self.epsilon}")
            if self.method == "pgd":
                if self.steps < 1:
                    raise InvalidInputError(f"pgd needs steps >= 1, got {self.steps}")
                if self.ball_radius < self.epsilon:
                    raise InvalidInputError(
                        f"ball_radius {self.ball_radius} must be >= per-step epsilon {self.epsilon}"
                    )


def fgsm_perturb(x_emb: np.ndarray, grad_x: np.ndarray, epsilon: float) -> np.ndarray:
    """One signed-gradient step: x + epsilon * sign(grad), with sign(0) = 0."""
    if epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    x_emb = np.asarray(x_emb, dtype=np.float64)
    grad_x = np.asarray(grad_x, dtype=np.float64)
    if x_emb.shape != grad_x.shape:
        raise ShapeError(f"gradient shape {grad_x.shape} != input shape {x_emb.shape}")
    return x_emb + epsilon * np.sign(grad_x)


def project_linf(x_prime: np.ndarray, x_origin: np.ndarray, radius: float) -> np.ndarray:
    """Coordinate-wise clamp of the offset from x_origin into [-radius, radius]."""
    if radius <= 0:
        raise InvalidInputError(f"radius must be positive, got {radius}")
    x_prime = np.asarray(x_prime, dtype=np.float64)
    x_origin = np.asarray(x_origin, dtype=np.float64)
    if x_prime.shape != x_origin.shape:
        raise ShapeError(f"shapes differ: {x_prime.shape} vs {x_origin.shape}")
    return x_origin + np.clip(x_prime - x_origin, -radius, radius)


def _input_gradient(model: VerbClassifier, loss_fn: LossFn, x: np.ndarray,
                    positives: np.ndarray) -> np.ndarray:
    model.forward(x)
    _, dlogits = loss_fn(model.cached_logits, positives)
    return backward(model, x, dlogits).x


def pgd_attack(
    model: VerbClassifier,
    loss_fn: LossFn,
    x_emb: np.ndarray,
    positives: np.ndarray,
    cfg: AdvConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Iterated signed-gradient ascent with projection back into the ball.

    Deterministic unless cfg.random_start is set, in which case the caller
    must pass the generator.
    """
    if cfg.method != "pgd":
        raise InvalidInputError(f"pgd_attack requires method 'pgd', got {cfg.method!r}")
    x0 = np.asarray(x_emb, dtype=np.float64)
    x = x0
    if cfg.random_start:
        if rng is None:
            raise InvalidInputError("random_start requires an explicit rng")
        x = project_linf(x0 + rng.uniform(-cfg.ball_radius, cfg.ball_radius, size=x0.shape), x0,
                         cfg.ball_radius)
    for _ in range(cfg.steps):
        grad = _input_gradient(model, loss_fn, x, positives)
        x = project_linf(fgsm_perturb(x, grad, cfg.epsilon), x0, cfg.ball_radius)
    return x


def adversarial_batch(
    model: VerbClassifier,
    loss_fn: LossFn,
    x_emb: np.ndarray,
    positives: np.ndarray,
    cfg: AdvConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Pair each clean batch with its adversarial counterpart.

    Returns (clean, adversarial); the adversarial half is None for
    method "none". The trainer averages clean and adversarial losses.
    """
    x_emb = np.asarray(x_emb, dtype=np.float64)
    if cfg.method == "none":
        return x_emb, None
    if cfg.method == "fgsm":
        grad = _input_gradient(model, loss_fn, x_emb, positives)
        return x_emb, fgsm_perturb(x_emb, grad, cfg.epsilon)
    return x_emb, pgd_attack(model, loss_fn, x_emb, positives, cfg, rng=rng)
