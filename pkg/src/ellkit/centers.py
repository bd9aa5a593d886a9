"""Soft-argmax ellipse centers from 3-channel activation maps.

Maps are ``(3, H, W)`` arrays ordered background, iris, pupil. Coordinates are
pixel indices: x runs over columns ``0..W-1`` and y over rows ``0..H-1``.
"""
from __future__ import annotations

import numpy as np

DEFAULT_BETA = 4.0
CHANNELS = ("background", "iris", "pupil")
BG, IRIS, PUPIL = 0, 1, 2


def check_maps(maps) -> np.ndarray:
    maps = np.asarray(maps, dtype=float)
    if maps.ndim != 3 or maps.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) activation maps, got shape {maps.shape}")
    if not np.all(np.isfinite(maps)):
        raise ValueError("activation maps contain non-finite values")
    return maps


def spatial_softmax(field, beta: float = DEFAULT_BETA) -> np.ndarray:
    """``exp(beta * O) / sum(exp(beta * O))`` over all pixels of a 2D field."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    z = beta * np.asarray(field, dtype=float)
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


def _grids(shape):
    h, w = shape
    return np.arange(w, dtype=float)[None, :], np.arange(h, dtype=float)[:, None]


def soft_center(field, beta: float = DEFAULT_BETA) -> tuple[float, float]:
    """Probability-weighted mean pixel coordinate ``(x_c, y_c)``."""
    p = spatial_softmax(field, beta)
    xs, ys = _grids(p.shape)
    return float((p * xs).sum()), float((p * ys).sum())


def grad_soft_center(field, beta: float = DEFAULT_BETA) -> tuple[np.ndarray, np.ndarray]:
    """Gradients ``d x_c / dO`` and ``d y_c / dO``, each shaped like ``field``.

    For pixel j: ``d x_c / dO_j = beta * p_j * (x_j - x_c)``.
    """
    p = spatial_softmax(field, beta)
    xs, ys = _grids(p.shape)
    xc = (p * xs).sum()
    yc = (p * ys).sum()
    return beta * p * (xs - xc), beta * p * (ys - yc)


def ellseg_centers(maps, beta: float = DEFAULT_BETA):
    """Pupil center from the pupil map and iris center from the negated background map."""
    maps = check_maps(maps)
    return soft_center(maps[PUPIL], beta), soft_center(-maps[BG], beta)
