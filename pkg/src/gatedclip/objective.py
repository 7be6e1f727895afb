"""Training objectives: softmax cross-entropy, cosine alignment, and their
weighted combination. Every loss returns its analytic gradients.

Both losses are batch means, so the combination weight and the learning
rate behave identically at any batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVectorError, UnlabeledDataError
from .embedding_store import UNLABELED

DEGENERATE_NORM = 1e-8
_NORM_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    total: float
    cls: float
    contrastive: float
    lam: float


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient (p - onehot)/N.

    Raises UnlabeledDataError if any label is the unlabeled sentinel.
    """
    labels = np.asarray(labels)
    if np.any(labels == UNLABELED):
        raise UnlabeledDataError("cross_entropy requires labeled examples")
    if np.any((labels != 0) & (labels != 1)):
        raise UnlabeledDataError(f"labels must be 0/1, got {np.unique(labels)}")
    n = logits.shape[0]
    idx = labels.astype(np.int64)

    # log softmax via log-sum-exp keeps the saturated cases exact.
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(n), idx] - log_z
    loss = float(-log_p.sum(dtype=np.float64) / n)

    grad = softmax(logits)
    grad[np.arange(n), idx] -= 1.0
    grad = grad / n
    return loss, grad.astype(logits.dtype)


def contrastive_alignment(
    h_I: np.ndarray, h_T: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean of (1 - cosine similarity) over paired rows, with gradients.

    d cos/d h_I = h_T/(|h_I||h_T|) - cos * h_I/|h_I|^2, negated and divided
    by N for the loss gradient; symmetrically for h_T. Rows with norm below
    1e-8 make the cosine undefined and raise.
    """
    n = h_I.shape[0]
    norm_I = np.linalg.norm(h_I, axis=1)
    norm_T = np.linalg.norm(h_T, axis=1)
    for name, norms in (("h_I", norm_I), ("h_T", norm_T)):
        bad = np.flatnonzero(norms < DEGENERATE_NORM)
        if bad.size:
            raise DegenerateVectorError(
                f"{name} row {bad[0]} has norm {norms[bad[0]]:.3e}; cosine undefined"
            )
    norm_I = np.maximum(norm_I, _NORM_FLOOR)
    norm_T = np.maximum(norm_T, _NORM_FLOOR)

    dots = (h_I * h_T).sum(axis=1)
    cos = dots / (norm_I * norm_T)
    loss = float((1.0 - cos).sum(dtype=np.float64) / n)

    inv_cross = (1.0 / (norm_I * norm_T))[:, None]
    grad_hI = -(h_T * inv_cross - (cos / norm_I**2)[:, None] * h_I) / n
    grad_hT = -(h_I * inv_cross - (cos / norm_T**2)[:, None] * h_T) / n
    return loss, grad_hI.astype(h_I.dtype), grad_hT.astype(h_T.dtype)


def total_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    h_I: np.ndarray,
    h_T: np.ndarray,
    lam: float,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray, np.ndarray]:
    """Combined objective: cls + lam * contrastive.

    grad_logits comes from the classification term only; the projection
    gradients are the lam-scaled alignment gradients.
    """
    cls_loss, grad_logits = cross_entropy(logits, labels)
    contr_loss, grad_hI, grad_hT = contrastive_alignment(h_I, h_T)
    breakdown = LossBreakdown(
        total=cls_loss + lam * contr_loss,
        cls=cls_loss,
        contrastive=contr_loss,
        lam=lam,
    )
    return breakdown, grad_logits, lam * grad_hI, lam * grad_hT
