"""Direct least-squares ellipse fitting and RANSAC outlier rejection.

The least-squares fit is the numerically stable variant of the direct
ellipse-specific method (Halir & Flusser, 1998), run on points that are first
shifted to their centroid and scaled to unit RMS radius. Point-to-conic
residuals are Sampson distances, i.e. algebraic distance over gradient norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ellipse


class FitError(ValueError):
    """Base class for ellipse fitting failures."""


class FewerThanFivePoints(FitError):
    pass


class DegenerateConfiguration(FitError):
    pass


class NonEllipticalFit(FitError):
    pass


class NoConsensus(FitError):
    pass


@dataclass
class FitResult:
    ellipse: Ellipse
    inlier_count: int
    residual_rms: float
    method: str
    inliers: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 300
    inlier_tol: float = 1.0
    min_inliers: int | None = None  # None -> max(10, 25% of the points)

    def resolve_min_inliers(self, n_points: int) -> int:
        if self.min_inliers is not None:
            return int(self.min_inliers)
        return max(10, int(math.ceil(0.25 * n_points)))


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) point array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")
    return pts


def _normalization(pts: np.ndarray) -> tuple[np.ndarray, float]:
    mean = pts.mean(axis=0)
    rms = math.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)))
    if rms == 0:
        raise DegenerateConfiguration("all points coincide")
    return mean, 1.0 / rms


def _check_spread(u: np.ndarray) -> None:
    sv = np.linalg.svd(u - u.mean(axis=0), compute_uv=False)
    if sv[-1] <= 1e-9 * sv[0]:
        raise DegenerateConfiguration("points are collinear")
    if len(np.unique(np.round(u, 12), axis=0)) < 5:
        raise DegenerateConfiguration("fewer than five distinct points")


def conic_to_ellipse(conic) -> Ellipse:
    """Convert ``A x^2 + B xy + C y^2 + D x + E y + F = 0`` to geometric form."""
    A, B, C, D, E, F = (float(v) for v in conic)
    disc = B * B - 4 * A * C
    if not disc < 0:
        raise NonEllipticalFit("conic is not an ellipse (B^2 - 4AC >= 0)")
    M = np.array([[2 * A, B], [B, 2 * C]])
    x0, y0 = np.linalg.solve(M, [-D, -E])
    f0 = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F
    evals, evecs = np.linalg.eigh(np.array([[A, B / 2], [B / 2, C]]))
    sq = -f0 / evals
    if not np.all(sq > 0) or not np.all(np.isfinite(sq)):
        raise NonEllipticalFit("conic describes an imaginary ellipse")
    major = int(np.argmax(sq))
    vx, vy = evecs[:, major]
    theta = math.atan2(vy, vx)
    return Ellipse(x0, y0, math.sqrt(sq[major]), math.sqrt(sq[1 - major]), theta)


def sampson_distance(e: Ellipse, points) -> np.ndarray:
    """First-order geometric distance of each point to the ellipse, in pixels."""
    pts = np.asarray(points, dtype=float)
    dx = pts[:, 0] - e.cx
    dy = pts[:, 1] - e.cy
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    ia2, ib2 = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
    q = u * u * ia2 + v * v * ib2 - 1.0
    grad = 2.0 * np.hypot(u * ia2, v * ib2)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(q) / grad
    # the exact center has zero gradient; its distance is the minor semi-axis
    return np.where(grad > 0, d, e.b)


def _direct_conic(u: np.ndarray) -> np.ndarray:
    x, y = u[:, 0], u[:, 1]
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfiguration("rank-deficient normal equations") from exc
    m = s1 + s2 @ t
    m = np.vstack([m[2] / 2.0, -m[1], m[0] / 2.0])
    evals, evecs = np.linalg.eig(m)
    evecs = np.real(evecs)
    cond = 4 * evecs[0] * evecs[2] - evecs[1] ** 2
    cand = np.flatnonzero(cond > 0)
    if cand.size == 0:
        raise NonEllipticalFit("no ellipse-constrained solution")
    if cand.size > 1:
        # numerically ambiguous: keep the smallest normalized algebraic cost
        s = np.block([[s1, s2], [s2.T, s3]])
        costs = []
        for k in cand:
            a1 = evecs[:, k]
            full = np.concatenate([a1, t @ a1])
            costs.append(full @ s @ full / cond[k])
        a1 = evecs[:, cand[int(np.argmin(costs))]]
    else:
        a1 = evecs[:, cand[0]]
    return np.concatenate([a1, t @ a1])


def _to_pixel_ellipse(conic_u, mean, scale) -> Ellipse:
    eu = conic_to_ellipse(conic_u)
    return Ellipse(mean[0] + eu.cx / scale, mean[1] + eu.cy / scale,
                   eu.a / scale, eu.b / scale, eu.theta)


def fit_ellipse_lsq(points) -> FitResult:
    """Direct, non-iterative least-squares ellipse fit.

    Parameters
    ----------
    points : array_like
        ``(n, 2)`` array of (x, y) coordinates, ``n >= 5``.

    Returns
    -------
    FitResult
        ``residual_rms`` is the RMS Sampson distance of all inputs.

    Raises
    ------
    FewerThanFivePoints, DegenerateConfiguration, NonEllipticalFit
    """
    pts = _as_points(points)
    if len(pts) < 5:
        raise FewerThanFivePoints(f"need at least 5 points, got {len(pts)}")
    mean, scale = _normalization(pts)
    u = (pts - mean) * scale
    _check_spread(u)
    e = _to_pixel_ellipse(_direct_conic(u), mean, scale)
    d = sampson_distance(e, pts)
    return FitResult(e, len(pts), float(np.sqrt(np.mean(d * d))), "lsq",
                     np.ones(len(pts), dtype=bool))


def _minimal_conics(u: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Conic through each 5-point sample (null vector of its design matrix)."""
    x = u[samples, 0]
    y = u[samples, 1]
    design = np.stack([x * x, x * y, y * y, x, y, np.ones_like(x)], axis=-1)
    _, sv, vh = np.linalg.svd(design, full_matrices=True)
    conics = vh[:, -1, :]
    # a 5x6 system with a repeated or collinear subset has a 2D null space
    rank_ok = sv[:, -1] > 1e-10 * sv[:, 0]
    return conics, rank_ok


def _conic_sampson(conics: np.ndarray, u: np.ndarray) -> np.ndarray:
    A, B, C, D, E, F = (conics[:, k : k + 1] for k in range(6))
    x, y = u[None, :, 0], u[None, :, 1]
    q = A * x * x + B * x * y + C * y * y + D * x + E * y + F
    gx = 2 * A * x + B * y + D
    gy = B * x + 2 * C * y + E
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(q) / np.hypot(gx, gy)
    return np.where(np.isfinite(d), d, np.inf)


def _is_real_ellipse(conics: np.ndarray) -> np.ndarray:
    A, B, C, D, E, F = conics.T
    disc = B * B - 4 * A * C
    det = 4 * A * C - B * B
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x0 = (B * E - 2 * C * D) / det
        y0 = (B * D - 2 * A * E) / det
        f0 = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F
    return (disc < 0) & np.isfinite(f0) & (f0 * A < 0)


def fit_ellipse_ransac(points, iterations: int = 300, inlier_tol: float = 1.0,
                       min_inliers: int | None = None, rng=None) -> FitResult:
    """Robust ellipse fit: 5-point hypotheses scored by Sampson-distance consensus.

    All hypotheses are generated up front from ``rng``, so the result is a
    deterministic function of the seed. The winning consensus set (largest;
    ties go to the lowest inlier RMS, then the earliest hypothesis) is refit
    with :func:`fit_ellipse_lsq`.
    """
    pts = _as_points(points)
    n = len(pts)
    if min_inliers is None:
        min_inliers = RansacConfig().resolve_min_inliers(n)
    if n < max(5, min_inliers):
        raise FewerThanFivePoints(
            f"need at least {max(5, min_inliers)} points, got {n}")
    if rng is None:
        raise ValueError("fit_ellipse_ransac needs an explicit seeded rng")
    mean, scale = _normalization(pts)
    u = (pts - mean) * scale

    samples = np.argpartition(rng.random((iterations, n)), 5, axis=1)[:, :5]
    conics, rank_ok = _minimal_conics(u, samples)
    usable = rank_ok & _is_real_ellipse(conics)
    if not usable.any():
        raise DegenerateConfiguration("every minimal sample was degenerate")

    dist = _conic_sampson(conics[usable], u) / scale
    inl = dist <= inlier_tol
    counts = inl.sum(axis=1)
    sq = np.where(inl, dist * dist, 0.0).sum(axis=1)
    rms = np.sqrt(sq / np.maximum(counts, 1))
    order = np.flatnonzero(usable)
    # lexsort: last key is primary
    best = np.lexsort((order, rms, -counts))[0]
    if counts[best] < min_inliers:
        raise NoConsensus(
            f"best consensus {counts[best]} < required {min_inliers}")

    refit = fit_ellipse_lsq(pts[inl[best]])
    d = sampson_distance(refit.ellipse, pts)
    final = d <= inlier_tol
    n_in = int(final.sum())
    res = float(np.sqrt(np.mean(d[final] ** 2))) if n_in else float("inf")
    return FitResult(refit.ellipse, n_in, res, "ransac", final)
