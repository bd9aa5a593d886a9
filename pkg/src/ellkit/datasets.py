"""Dataset manifests, per-source preprocessing and stratified train/val splits.

Every loaded record is brought to the 320x240 working resolution. Presets
encode each source's native size and preprocessing (crop, then resample);
centers are mapped with the same pixel-center convention as the images, i.e.
``x' = (x - x0 + 0.5) * s - 0.5`` for crop origin ``x0`` and scale ``s``.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io

log = logging.getLogger(__name__)

WORKING_SIZE = (320, 240)  # width, height


@dataclass(frozen=True)
class Preset:
    name: str
    native_size: tuple[int, int] | None  # width, height; None = any
    crop: tuple[int, int] | None = None  # width, height, taken about the sclera center
    gt: str = "all"  # "all", "partseg" or "pupil_center"


PRESETS = {
    "synthetic": Preset("synthetic", None),
    "nvgaze": Preset("nvgaze", (1280, 960)),
    "openeds": Preset("openeds", (400, 640), crop=(400, 300), gt="partseg"),
    "riteyes": Preset("riteyes", (640, 480)),
    "lpw": Preset("lpw", (640, 480), gt="pupil_center"),
    "else": Preset("else", (384, 288), gt="pupil_center"),
    "pupilnet": Preset("pupilnet", (384, 288), gt="pupil_center"),
}


@dataclass
class DatasetManifest:
    root: Path
    entries: list[dict]
    preset: str = "synthetic"
    class_map: dict | None = None
    scale: float | None = None  # overrides the preset's resampling when set

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; known: {sorted(PRESETS)}")
        if self.scale is not None and not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        for i, e in enumerate(self.entries):
            if "image" not in e and "mask" not in e:
                raise ValueError(f"manifest entry {i} has neither image nor mask")
            if not any(e.get(k) is not None for k in ("mask", "pupil_center", "iris_center")):
                raise ValueError(f"manifest entry {i} carries no ground truth")

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "DatasetManifest":
        root = Path(d.get("root", "."))
        if base is not None and not root.is_absolute():
            root = base / root
        cmap = d.get("class_map")
        if cmap is not None:
            cmap = {int(k): int(v) for k, v in cmap.items()}
        if not isinstance(d.get("entries"), list):
            raise ValueError("manifest needs an 'entries' list")
        scale = d.get("scale")
        return cls(root, list(d["entries"]), d.get("preset", "synthetic"), cmap,
                   None if scale is None else float(scale))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        return cls.from_dict(io.read_json(path), base=path.parent)

    def to_dict(self) -> dict:
        d = {"root": str(self.root), "preset": self.preset, "entries": self.entries}
        if self.class_map:
            d["class_map"] = {str(k): v for k, v in self.class_map.items()}
        if self.scale is not None:
            d["scale"] = self.scale
        return d


@dataclass
class Record:
    key: str
    image: np.ndarray | None = None
    mask: np.ndarray | None = None
    pupil_center: tuple[float, float] | None = None
    iris_center: tuple[float, float] | None = None
    subset: str | None = None
    valid: bool = True
    notes: list[str] = field(default_factory=list)


def map_point(p, origin, scale) -> tuple[float, float]:
    return ((p[0] - origin[0] + 0.5) * scale[0] - 0.5,
            (p[1] - origin[1] + 0.5) * scale[1] - 0.5)


def resize_image(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to ``size`` (width, height), anti-aliased when shrinking."""
    h, w = img.shape
    zy, zx = size[1] / h, size[0] / w
    src = img.astype(float)
    sig = (max(0.0, (1 / zy - 1) / 2), max(0.0, (1 / zx - 1) / 2))
    if any(sig):
        src = ndimage.gaussian_filter(src, sig, mode="nearest")
    out = ndimage.zoom(src, (zy, zx), order=1, mode="nearest", grid_mode=True)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def resize_mask(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resample a class grid by interpolating one-hot planes and taking the argmax."""
    h, w = mask.shape
    zy, zx = size[1] / h, size[0] / w
    classes = np.unique(mask)
    planes = [ndimage.zoom((mask == k).astype(float), (zy, zx), order=1,
                           mode="nearest", grid_mode=True) for k in classes]
    return classes[np.argmax(np.stack(planes), axis=0)].astype(mask.dtype)


def _crop_origin(preset: Preset, size, mask) -> tuple[int, int]:
    if preset.crop is None:
        return 0, 0
    w, h = size
    cw, ch = preset.crop
    if mask is not None and (mask == 1).any():
        ys, xs = np.nonzero(mask == 1)
        cx, cy = xs.mean(), ys.mean()
    else:
        cx, cy = (w - 1) / 2, (h - 1) / 2
    x0 = int(min(max(round(cx - cw / 2), 0), w - cw))
    y0 = int(min(max(round(cy - ch / 2), 0), h - ch))
    return x0, y0


def preprocess(preset: Preset, image, mask, centers, working_size=WORKING_SIZE,
               scale: float | None = None):
    """Crop and resample one sample to the working resolution.

    ``centers`` is a list of points (or ``None`` entries) mapped alongside.
    An explicit ``scale`` resamples by that factor instead of to
    ``working_size``.
    """
    ref = image if image is not None else mask
    h, w = ref.shape
    x0, y0 = _crop_origin(preset, (w, h), mask)
    if preset.crop is not None:
        cw, ch = preset.crop
        if image is not None:
            image = image[y0:y0 + ch, x0:x0 + cw]
        if mask is not None:
            mask = mask[y0:y0 + ch, x0:x0 + cw]
        w, h = cw, ch
    if scale is not None:
        working_size = (int(round(w * scale)), int(round(h * scale)))
    factors = (working_size[0] / w, working_size[1] / h)
    if (w, h) != tuple(working_size):
        if image is not None:
            image = resize_image(image, working_size)
        if mask is not None:
            mask = resize_mask(mask, working_size)
    mapped = [None if c is None else map_point(c, (x0, y0), factors) for c in centers]
    return image, mask, mapped


def load_dataset(manifest, working_size=WORKING_SIZE):
    """Yield :class:`Record` objects at the working resolution, in manifest order.

    Entries whose files are missing are skipped with a warning; masks with
    unexpected values or shapes are kept but flagged ``valid=False``.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.load(manifest)
    preset = PRESETS[manifest.preset]
    for i, entry in enumerate(manifest.entries):
        key = entry.get("image") or entry.get("mask")
        try:
            image = io.read_image(manifest.root / entry["image"]) if entry.get("image") else None
            mask = io.read_mask(manifest.root / entry["mask"]) if entry.get("mask") else None
        except (FileNotFoundError, OSError) as exc:
            log.warning("skipping entry %d (%s): %s", i, key, exc)
            continue
        notes = []
        valid = True
        if mask is not None:
            if manifest.class_map:
                lut = np.arange(256, dtype=np.uint8)
                for src, dst in manifest.class_map.items():
                    lut[src] = dst
                mask = lut[mask]
            if mask.max() > 3:
                notes.append("mask holds values outside 0..3")
                valid = False
            if image is not None and image.shape != mask.shape:
                notes.append("mask and image shapes differ")
                valid = False
                mask = None
        ref = image if image is not None else mask
        if preset.native_size and ref is not None and ref.shape[::-1] != preset.native_size:
            notes.append(f"size {ref.shape[::-1]} differs from preset {preset.native_size}")
        centers = [entry.get("pupil_center"), entry.get("iris_center")]
        image, mask, (pc, ic) = preprocess(preset, image, mask, centers, working_size,
                                           manifest.scale)
        yield Record(key, image, mask, pc, ic, entry.get("subset"), valid, notes)


class SplitError(ValueError):
    pass


def stratify_key(record, grid_bins=(8, 6), frame=WORKING_SIZE):
    x, y = record.pupil_center
    bx = min(grid_bins[0] - 1, max(0, int(math.floor(x / frame[0] * grid_bins[0]))))
    by = min(grid_bins[1] - 1, max(0, int(math.floor(y / frame[1] * grid_bins[1]))))
    return bx, by, "" if record.subset is None else str(record.subset)


def stratified_split(records, ratio: float = 0.8, grid_bins=(8, 6), min_bin: int = 5,
                     seed: int = 0, frame=WORKING_SIZE):
    """Split records 80/20 within bins of pupil-center grid cell and subset ID.

    Bins with fewer than ``min_bin`` members are dropped entirely. Returns
    ``(train, validation)`` lists, each in the original record order.
    """
    records = list(records)
    bins = defaultdict(list)
    for i, r in enumerate(records):
        if r.pupil_center is None:
            raise SplitError(f"record {i} has no pupil center")
        bins[stratify_key(r, grid_bins, frame)].append(i)
    rng = np.random.default_rng(seed)
    train, val = [], []
    kept = 0
    for key in sorted(bins):
        idx = bins[key]
        if len(idx) < min_bin:
            continue
        kept += 1
        order = [idx[j] for j in rng.permutation(len(idx))]
        n_train = int(math.floor(ratio * len(idx) + 0.5))
        train.extend(order[:n_train])
        val.extend(order[n_train:])
    if kept == 0:
        raise SplitError("no bin has enough records to split")
    return [records[i] for i in sorted(train)], [records[i] for i in sorted(val)]
