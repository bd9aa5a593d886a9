"""File formats: class-index masks, activation tensors, JSON/JSONL/CSV output.

All writers go through a temporary file in the destination directory followed
by an atomic rename. JSON is written with sorted keys and floats rounded to 9
significant digits so that repeated runs produce identical bytes.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.9g}")
    return obj


def dumps_json(obj, indent: int | None = 2) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=indent, allow_nan=False)


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps_json(obj) + "\n")


def write_jsonl(path, rows) -> None:
    atomic_write_text(path, "".join(dumps_json(r, indent=None) + "\n" for r in rows))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _png_bytes(arr: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def write_mask(path, mask) -> None:
    """Write a class-index grid as a single-channel 8-bit PNG."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueError("mask must be a 2D grid of values in 0..255")
    atomic_write_bytes(path, _png_bytes(arr.astype(np.uint8)))


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "I", "I;16"):
            raise ValueError(f"{path}: expected a single-channel class-index image, got {im.mode}")
        return np.array(im).astype(np.uint8) if im.mode in ("L", "P") else np.array(im)


write_image = write_mask


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("L"))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


_DTYPES = ("<f4", "<f8")


def write_prob_maps(path, maps, dtype: str = "<f4") -> None:
    """Write ``(C, H, W)`` activations as raw little-endian floats plus a JSON sidecar.

    The sidecar records the shape and, for anything other than float32, the dtype.
    """
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {_DTYPES}")
    arr = np.asarray(maps, dtype=dtype)
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W) maps, got shape {arr.shape}")
    c, h, w = arr.shape
    atomic_write_bytes(path, np.ascontiguousarray(arr).tobytes())
    meta = {"channels": c, "height": h, "width": w}
    if dtype != "<f4":
        meta["dtype"] = dtype
    write_json(sidecar_path(path), meta)


def read_prob_maps(path) -> np.ndarray:
    """Read activations written by :func:`write_prob_maps` (or any compatible dump)."""
    meta = read_json(sidecar_path(path))
    try:
        c, h, w = int(meta["channels"]), int(meta["height"]), int(meta["width"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{sidecar_path(path)}: sidecar needs integer width, height, channels") from exc
    dtype = meta.get("dtype", "<f4")
    if dtype not in _DTYPES:
        raise ValueError(f"{sidecar_path(path)}: unsupported dtype {dtype!r}")
    raw = np.fromfile(path, dtype=dtype)
    if raw.size != c * h * w:
        raise ValueError(f"{path}: expected {c * h * w} values of {dtype}, found {raw.size}")
    return raw.reshape(c, h, w).astype(float)
