"""Segmentation and ellipse metrics, model-selection score and LR/convergence rule."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ellipse, bbox_iou, bounding_box

DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0, 10.0001, 0.25), 2))
ORIENTATION_MIN_RATIO = 1.1
IMPROVEMENT_EPS = 0.001
DROP_LR_PATIENCE = 5
STOP_PATIENCE = 10

CONTINUE, DROP_LR, STOP = "continue", "drop_lr", "stop"


def iou(pred, gt, n_classes: int = 3) -> tuple[list[float | None], float]:
    """Per-class IoU and their mean over the classes present in ``gt``.

    A class absent from both grids has IoU ``None``.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    per_class = []
    present = []
    for k in range(n_classes):
        p, g = pred == k, gt == k
        union = int((p | g).sum())
        per_class.append(None if union == 0 else int((p & g).sum()) / union)
        if g.any():
            present.append(per_class[-1])
    miou = float(np.mean(present)) if present else float("nan")
    return per_class, miou


@dataclass
class DetectionCurve:
    thresholds: list[float]
    rates: list[float]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "rate"])
        for t, r in zip(self.thresholds, self.rates):
            w.writerow([f"{t:.9g}", f"{r:.9g}"])
        return buf.getvalue()


def detection_rate(errors, thresholds=DEFAULT_THRESHOLDS) -> DetectionCurve:
    """Fraction of errors at or below each threshold. Invalid fits are ``inf``."""
    err = np.asarray([np.inf if e is None else e for e in errors], dtype=float)
    if np.any(err < 0):
        raise ValueError("errors must be non-negative")
    err = np.where(np.isnan(err), np.inf, err)
    n = len(err)
    valid = np.isfinite(err)
    rates = [float(((err <= t) & valid).sum() / n) if n else 0.0 for t in thresholds]
    return DetectionCurve([float(t) for t in thresholds], rates)


def center_error(pred, gt) -> float:
    """Euclidean distance between two centers; ``inf`` if either is missing."""
    if pred is None or gt is None:
        return math.inf
    return math.hypot(pred[0] - gt[0], pred[1] - gt[1])


def ellipse_bbox_iou(e1: Ellipse, e2: Ellipse) -> float:
    """IoU of the axis-aligned boxes enclosing two ellipses."""
    return bbox_iou(bounding_box(e1), bounding_box(e2))


def orientation_error(e_pred: Ellipse, e_gt: Ellipse,
                      min_ratio: float = ORIENTATION_MIN_RATIO) -> float | None:
    """Major-axis angle difference in degrees, folded into [0, 90].

    ``None`` unless both ellipses have an axis ratio above ``min_ratio``.
    """
    if e_pred.axis_ratio <= min_ratio or e_gt.axis_ratio <= min_ratio:
        return None
    d = abs(math.degrees(e_pred.theta - e_gt.theta)) % 180.0
    return min(d, 180.0 - d)


def model_selection_score(miou: float, d_pupil: float, d_iris: float,
                          theta_pupil: float, theta_iris: float) -> float:
    """``4 + mIoU - 0.0025 (d_p + d_i) - (theta_p + theta_i) / 90``; distances in
    pixels, angles in degrees."""
    return 4.0 + miou - 0.0025 * (d_pupil + d_iris) - (theta_pupil + theta_iris) / 90.0


def stagnant_epochs(history, eps: float = IMPROVEMENT_EPS) -> int:
    """Trailing epochs that failed to beat the best score so far by more than ``eps``."""
    best = -math.inf
    stale = 0
    for score in history:
        if score > best + eps:
            best = score
            stale = 0
        else:
            stale += 1
    return stale


def convergence_controller(history, eps: float = IMPROVEMENT_EPS,
                           drop_patience: int = DROP_LR_PATIENCE,
                           stop_patience: int = STOP_PATIENCE) -> str:
    """Decide what to do after the latest epoch of a model-selection history.

    Returns ``"stop"`` once ``stop_patience`` consecutive epochs bring no
    improvement, ``"drop_lr"`` at every completed ``drop_patience`` stagnant
    epochs before that, and ``"continue"`` otherwise.
    """
    stale = stagnant_epochs(history, eps)
    if stale >= stop_patience:
        return STOP
    if stale and stale % drop_patience == 0:
        return DROP_LR
    return CONTINUE


def _summary(values) -> dict:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return {"count": 0, "median": None, "mean": None, "values": []}
    return {"count": len(vals), "median": float(np.median(vals)),
            "mean": float(np.mean(vals)), "values": [float(v) for v in values if v is not None]}


@dataclass
class MetricsReport:
    n_images: int
    per_class_iou: list = field(default_factory=list)
    miou: float | None = None
    pupil_center_error: dict = field(default_factory=dict)
    iris_center_error: dict = field(default_factory=dict)
    pupil_bbox_iou: dict = field(default_factory=dict)
    iris_bbox_iou: dict = field(default_factory=dict)
    pupil_orientation_error: dict = field(default_factory=dict)
    iris_orientation_error: dict = field(default_factory=dict)
    invalid_fits: dict = field(default_factory=dict)
    pupil_detection: DetectionCurve | None = None
    iris_detection: DetectionCurve | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if not isinstance(v, DetectionCurve)}
        for name in ("pupil_detection", "iris_detection"):
            curve = getattr(self, name)
            d[name] = None if curve is None else {"thresholds": curve.thresholds,
                                                  "rates": curve.rates}
        return d


def build_report(pairs, masks=None, thresholds=DEFAULT_THRESHOLDS,
                 n_classes: int = 3) -> MetricsReport:
    """Aggregate metrics over ``(pred_record, gt_record)`` pairs.

    Records are :class:`ellkit.labels.GroundTruthRecord`-like objects.
    ``masks`` optionally holds ``(pred_mask, gt_mask)`` pairs for IoU; IoU is
    accumulated over the whole set (summed intersections and unions).
    """
    pairs = list(pairs)
    errs = {"pupil": [], "iris": []}
    boxes = {"pupil": [], "iris": []}
    orient = {"pupil": [], "iris": []}
    invalid = {"pupil": 0, "iris": 0}
    for pred, gt in pairs:
        for s in ("pupil", "iris"):
            gt_c = getattr(gt, f"{s}_center")
            if gt_c is None:
                continue
            pc = getattr(pred, f"{s}_center")
            if pc is None:
                invalid[s] += 1
            errs[s].append(center_error(pc, gt_c))
            pe, ge = getattr(pred, s), getattr(gt, s)
            if ge is not None:
                boxes[s].append(0.0 if pe is None else ellipse_bbox_iou(pe, ge))
                if pe is not None:
                    orient[s].append(orientation_error(pe, ge))

    report = MetricsReport(n_images=len(pairs), invalid_fits=invalid)
    if masks is not None:
        inter = np.zeros(n_classes)
        union = np.zeros(n_classes)
        in_gt = np.zeros(n_classes, dtype=bool)
        for pm, gm in masks:
            pm, gm = np.asarray(pm), np.asarray(gm)
            if pm.shape != gm.shape:
                raise ValueError(f"shape mismatch: {pm.shape} vs {gm.shape}")
            for k in range(n_classes):
                p, g = pm == k, gm == k
                inter[k] += (p & g).sum()
                union[k] += (p | g).sum()
                in_gt[k] |= bool(g.any())
        report.per_class_iou = [None if u == 0 else float(i / u) for i, u in zip(inter, union)]
        present = [report.per_class_iou[k] for k in range(n_classes) if in_gt[k]]
        report.miou = float(np.mean(present)) if present else None
    for s in ("pupil", "iris"):
        setattr(report, f"{s}_center_error", _summary(errs[s]))
        setattr(report, f"{s}_bbox_iou", _summary(boxes[s]))
        setattr(report, f"{s}_orientation_error", _summary(orient[s]))
        if errs[s]:
            setattr(report, f"{s}_detection", detection_rate(errs[s], thresholds))
    return report
