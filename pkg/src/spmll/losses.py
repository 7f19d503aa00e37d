"""Loss zoo for the three training regimes plus the fully supervised oracle loss.

Conventions shared by every loss here:
  * class reduction is a sum, batch reduction is a mean;
  * probabilities are clamped to [CLAMP, 1 - CLAMP] before any log, never raising;
  * per-sample functions return a LossOutput whose ``grad`` is taken w.r.t.
    the argument the loss consumes (logits for ``ce_loss``, probabilities for
    the rest) and is the exact derivative of the clamped expression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

CLAMP = 1e-7

LOSS_KINDS = ("ce", "bce", "focal")
DEFAULT_FOCAL_GAMMA = 2.0
DEFAULT_FOCAL_ALPHA = 0.25


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad: np.ndarray
    grad_wrt: str  # "logits" or "probs"


def _clamp(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    inside = (p > CLAMP) & (p < 1.0 - CLAMP)
    return pc, inside.astype(np.float64)


def one_hot(positive: int, l: int) -> np.ndarray:
    if not 0 <= positive < l:
        raise InvalidInputError(f"positive index {positive} out of range [0, {l})")
    z = np.zeros(l)
    z[positive] = 1.0
    return z


def ce_loss(logits: np.ndarray, positive: int) -> LossOutput:
    """Softmax cross-entropy against the single positive; grad w.r.t. logits."""
    logits = np.asarray(logits, dtype=np.float64)
    l = logits.shape[-1]
    if not 0 <= positive < l:
        raise InvalidInputError(f"positive index {positive} out of range [0, {l})")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    value = log_z - shifted[positive]
    grad = np.exp(shifted - log_z)
    grad[positive] -= 1.0
    return LossOutput(float(value), grad, "logits")


def bce_an_loss(probs: np.ndarray, z: np.ndarray) -> LossOutput:
    """Assume-negative BCE: the single positive vs everything else as hard negatives.

    ``z`` is the one-hot single-positive vector; grad is w.r.t. ``probs``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    pc, inside = _clamp(probs)
    value = -(z * np.log(pc) + (1.0 - z) * np.log(1.0 - pc)).sum()
    grad = inside * (-z / pc + (1.0 - z) / (1.0 - pc))
    return LossOutput(float(value), grad, "probs")


def focal_loss(
    probs: np.ndarray,
    z: np.ndarray,
    gamma: float = DEFAULT_FOCAL_GAMMA,
    alpha: float = DEFAULT_FOCAL_ALPHA,
) -> LossOutput:
    """Focal variant of the assume-negative loss; grad w.r.t. ``probs``.

    Positive term  -alpha * (1-p)^gamma * ln p, negative term
    -(1-alpha) * p^gamma * ln(1-p).
    """
    if gamma < 0:
        raise InvalidInputError(f"gamma must be >= 0, got {gamma}")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must be in (0, 1), got {alpha}")
    probs = np.asarray(probs, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    pc, inside = _clamp(probs)
    q = 1.0 - pc
    pos = -alpha * q**gamma * np.log(pc)
    neg = -(1.0 - alpha) * pc**gamma * np.log(q)
    value = (z * pos + (1.0 - z) * neg).sum()
    # d/dp of the terms above, with the gamma=0 power rule handled explicitly
    if gamma == 0.0:
        dpos = -alpha / pc
        dneg = (1.0 - alpha) / q
    else:
        dpos = alpha * gamma * q ** (gamma - 1.0) * np.log(pc) - alpha * q**gamma / pc
        dneg = -(1.0 - alpha) * gamma * pc ** (gamma - 1.0) * np.log(q) + (1.0 - alpha) * pc**gamma / q
    grad = inside * (z * dpos + (1.0 - z) * dneg)
    return LossOutput(float(value), grad, "probs")


def full_bce_loss(probs: np.ndarray, y: np.ndarray) -> LossOutput:
    """Multi-label BCE against the full label vector (synthetic-oracle use only)."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.sum() < 1:
        raise InvalidInputError("full label vector must have at least one positive")
    pc, inside = _clamp(probs)
    value = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum()
    grad = inside * (-y / pc + (1.0 - y) / (1.0 - pc))
    return LossOutput(float(value), grad, "probs")


def batch_loss(
    kind: str,
    logits: np.ndarray,
    positives: np.ndarray,
    gamma: float = DEFAULT_FOCAL_GAMMA,
    alpha: float = DEFAULT_FOCAL_ALPHA,
) -> tuple[float, np.ndarray]:
    """Mean-over-batch loss on a logit matrix, with its gradient w.r.t. the logits.

    This is the trainer/attack seam: ``ce`` consumes the logits directly, the
    sigmoid losses consume sigmoid(logits) and chain back through it.
    """
    if kind not in LOSS_KINDS:
        raise InvalidInputError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")
    logits = np.asarray(logits, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.int64)
    n, l = logits.shape
    if positives.shape != (n,):
        raise InvalidInputError(f"positives shape {positives.shape} != ({n},)")
    if np.any((positives < 0) | (positives >= l)):
        raise InvalidInputError("positive index out of range")

    if kind == "ce":
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        value = (log_z.ravel() - shifted[np.arange(n), positives]).mean()
        grad = np.exp(shifted - log_z)
        grad[np.arange(n), positives] -= 1.0
        return float(value), grad / n

    z = np.zeros((n, l))
    z[np.arange(n), positives] = 1.0
    probs = sigmoid(logits)
    # the per-sample losses are elementwise, so one call covers the whole matrix
    out = bce_an_loss(probs, z) if kind == "bce" else focal_loss(probs, z, gamma, alpha)
    dlogits = out.grad * probs * (1.0 - probs) / n
    return out.value / n, dlogits


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
