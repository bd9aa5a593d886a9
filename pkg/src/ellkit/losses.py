"""Segmentation and center-of-mass training losses with analytic gradients.

Logits are ``(K, H, W)`` arrays (K = 3 for full-ellipse labels) and labels are
``(H, W)`` integer grids. Two different softmaxes appear here: the per-pixel
class softmax (:func:`class_softmax`) that turns logits into class
probabilities, and the spatial softmax used for centers (see
:mod:`ellkit.centers`). Every ``grad_*`` function returns the gradient with
respect to the logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .centers import BG, DEFAULT_BETA, PUPIL, check_maps, grad_soft_center, soft_center

LAMBDA1 = 1.0
LAMBDA2 = 20.0


@dataclass(frozen=True)
class LossWeights:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float

    @classmethod
    def at_epoch(cls, epoch: float, total_epochs: float,
                 lambda1: float = LAMBDA1, lambda2: float = LAMBDA2) -> "LossWeights":
        """Dice weight fades out and surface-loss weight fades in as ``epoch/M`` grows."""
        if total_epochs <= 0 or not 0 <= epoch <= total_epochs:
            raise ValueError(f"need 0 <= epoch <= M and M > 0, got {epoch}, {total_epochs}")
        alpha = epoch / total_epochs
        return cls(lambda1, lambda2, 1.0 - alpha, alpha)


def _check(logits, labels):
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 3 or logits.shape[1:] != labels.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape} vs labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= logits.shape[0]:
        raise ValueError("labels out of range for the number of classes")
    return logits, labels.astype(int)


def class_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    return (np.arange(n_classes)[:, None, None] == labels[None]).astype(float)


def _softmax_backward(probs, grad_probs):
    return probs * (grad_probs - (probs * grad_probs).sum(axis=0, keepdims=True))


def cross_entropy(logits, labels) -> tuple[np.ndarray, float]:
    """Per-pixel ``-log p(true class)`` and its mean."""
    logits, labels = _check(logits, labels)
    z = logits - logits.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=0))
    true = np.take_along_axis(z, labels[None], axis=0)[0]
    ce = log_norm - true
    return ce, float(ce.mean())


def grad_cross_entropy(logits, labels, pixel_weights=None) -> np.ndarray:
    """Gradient of ``mean(pixel_weights * ce)``."""
    logits, labels = _check(logits, labels)
    p = class_softmax(logits)
    g = p - one_hot(labels, logits.shape[0])
    if pixel_weights is not None:
        g = g * np.asarray(pixel_weights, dtype=float)[None]
    return g / labels.size


def boundary_weight_map(labels) -> np.ndarray:
    """1 where any 8-neighbor carries a different label, else 0."""
    labels = np.asarray(labels)
    hi = ndimage.maximum_filter(labels, size=3, mode="nearest")
    lo = ndimage.minimum_filter(labels, size=3, mode="nearest")
    return (hi != lo).astype(np.uint8)


def _dice_terms(probs, labels):
    k = probs.shape[0]
    g = one_hot(labels, k)
    counts = g.reshape(k, -1).sum(axis=1)
    present = counts > 0
    w = np.zeros(k)
    w[present] = 1.0 / counts[present] ** 2
    inter = (w * (probs * g).reshape(k, -1).sum(axis=1)).sum()
    union = (w * (probs + g).reshape(k, -1).sum(axis=1)).sum()
    return g, w, inter, union


def generalized_dice(probs, labels) -> float:
    """Generalized dice loss with inverse squared class-volume weights.

    Classes absent from ``labels`` are left out of both sums.
    """
    probs = np.asarray(probs, dtype=float)
    _, _, inter, union = _dice_terms(probs, labels)
    return float(1.0 - 2.0 * inter / union)


def grad_generalized_dice(logits, labels) -> np.ndarray:
    """Gradient of ``generalized_dice(class_softmax(logits), labels)``."""
    logits, labels = _check(logits, labels)
    p = class_softmax(logits)
    g, w, inter, union = _dice_terms(p, labels)
    w = w[:, None, None]
    grad_p = -2.0 * (w * g * union - inter * w) / union ** 2
    return _softmax_backward(p, grad_p)


def signed_distance_field(labels, n_classes: int = 3) -> np.ndarray:
    """Per-class signed Euclidean distance to the class boundary, ``(K, H, W)``.

    ``edt(outside) - edt(inside)``: negative inside the class, positive
    outside, with pixels next to the boundary at -1 and +1. Classes that are
    absent or fill the whole grid get 0.
    """
    labels = np.asarray(labels)
    out = np.zeros((n_classes,) + labels.shape)
    for k in range(n_classes):
        m = labels == k
        if not m.any() or m.all():
            continue
        out[k] = ndimage.distance_transform_edt(~m) - ndimage.distance_transform_edt(m)
    return out


def surface_loss(probs, sdf) -> float:
    """Mean over pixels and classes of ``p_k * phi_k``."""
    probs = np.asarray(probs, dtype=float)
    sdf = np.asarray(sdf, dtype=float)
    if probs.shape != sdf.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs sdf {sdf.shape}")
    return float((probs * sdf).mean())


def grad_surface_loss(logits, sdf) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    p = class_softmax(logits)
    return _softmax_backward(p, np.asarray(sdf, dtype=float) / p.size)


def seg_loss_components(logits, labels, epoch: float, total_epochs: float,
                        lambda1: float = LAMBDA1, lambda2: float = LAMBDA2,
                        sdf=None) -> dict:
    """All terms of the composite segmentation loss, plus the total."""
    logits, labels = _check(logits, labels)
    w = LossWeights.at_epoch(epoch, total_epochs, lambda1, lambda2)
    ce, ce_mean = cross_entropy(logits, labels)
    bal = boundary_weight_map(labels)
    p = class_softmax(logits)
    if sdf is None:
        sdf = signed_distance_field(labels, logits.shape[0])
    weighted_ce = float((ce * (w.lambda1 + w.lambda2 * bal)).mean())
    gdl = generalized_dice(p, labels)
    sl = surface_loss(p, sdf)
    total = weighted_ce + w.lambda3 * gdl + w.lambda4 * sl
    return {
        "cross_entropy": ce_mean,
        "boundary_weighted_cross_entropy": weighted_ce,
        "boundary_fraction": float(bal.mean()),
        "generalized_dice": gdl,
        "surface": sl,
        "lambda1": w.lambda1, "lambda2": w.lambda2,
        "lambda3": w.lambda3, "lambda4": w.lambda4,
        "seg_loss": total,
    }


def seg_loss(logits, labels, epoch: float, total_epochs: float,
             lambda1: float = LAMBDA1, lambda2: float = LAMBDA2, sdf=None) -> float:
    """``mean(ce * (l1 + l2 * boundary)) + l3 * dice + l4 * surface``."""
    return seg_loss_components(logits, labels, epoch, total_epochs,
                               lambda1, lambda2, sdf)["seg_loss"]


def grad_seg_loss(logits, labels, epoch: float, total_epochs: float,
                  lambda1: float = LAMBDA1, lambda2: float = LAMBDA2, sdf=None) -> np.ndarray:
    logits, labels = _check(logits, labels)
    w = LossWeights.at_epoch(epoch, total_epochs, lambda1, lambda2)
    if sdf is None:
        sdf = signed_distance_field(labels, logits.shape[0])
    pix_w = w.lambda1 + w.lambda2 * boundary_weight_map(labels)
    g = grad_cross_entropy(logits, labels, pix_w)
    if w.lambda3:
        g = g + w.lambda3 * grad_generalized_dice(logits, labels)
    if w.lambda4:
        g = g + w.lambda4 * grad_surface_loss(logits, sdf)
    return g


def com_loss(maps, gt_pupil, gt_iris=None, beta: float = DEFAULT_BETA) -> float:
    """L1 distance between soft-argmax centers and ground-truth centers.

    The iris term (center from the negated background map) is added only when
    ``gt_iris`` is given, so pupil-center-only data can be used.
    """
    maps = check_maps(maps)
    xp, yp = soft_center(maps[PUPIL], beta)
    loss = abs(xp - gt_pupil[0]) + abs(yp - gt_pupil[1])
    if gt_iris is not None:
        xi, yi = soft_center(-maps[BG], beta)
        loss += abs(xi - gt_iris[0]) + abs(yi - gt_iris[1])
    return float(loss)


def grad_com_loss(maps, gt_pupil, gt_iris=None, beta: float = DEFAULT_BETA) -> np.ndarray:
    maps = check_maps(maps)
    grad = np.zeros_like(maps)
    xp, yp = soft_center(maps[PUPIL], beta)
    gx, gy = grad_soft_center(maps[PUPIL], beta)
    grad[PUPIL] = np.sign(xp - gt_pupil[0]) * gx + np.sign(yp - gt_pupil[1]) * gy
    if gt_iris is not None:
        xi, yi = soft_center(-maps[BG], beta)
        gx, gy = grad_soft_center(-maps[BG], beta)
        grad[BG] = -(np.sign(xi - gt_iris[0]) * gx + np.sign(yi - gt_iris[1]) * gy)
    return grad
