"""Image file I/O on top of Pillow; arrays are numpy (H, W) or (H, W, 3)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")

# 8-bit masks: pixel > 127 means manipulated (JPEG'd masks carry grey values).
MASK_THRESHOLD_8BIT = 127


def is_image_file(path) -> bool:
    return Path(path).suffix.lower() in IMAGE_SUFFIXES


def read_image(path) -> np.ndarray:
    """Decode to uint8 gray (H, W) or RGB (H, W, 3); 16-bit gray stays uint16."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(im, dtype=np.uint16) if im.mode != "I" else np.asarray(im).astype(np.uint16)
        if im.mode in ("L", "1"):
            return np.asarray(im.convert("L"))
        return np.asarray(im.convert("RGB"))


def to_gray(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return arr
    # ITU-R 601 luma, same weights Pillow uses for "L".
    g = arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114
    return np.floor(g + 0.5).astype(arr.dtype) if arr.dtype.kind in "ui" else g


def binarize_mask(arr: np.ndarray) -> np.ndarray:
    """Boolean manipulated-pixel map from a raw mask array."""
    if arr.dtype == bool:
        out = arr
    elif arr.dtype == np.uint8:
        out = arr > MASK_THRESHOLD_8BIT
    elif arr.dtype == np.uint16:
        out = arr > 32767
    elif arr.dtype.kind == "f":
        out = arr >= 0.5
    else:
        out = arr != 0
    if out.ndim == 3:
        out = out.any(axis=2)
    return out


def read_mask(path) -> np.ndarray:
    return binarize_mask(read_image(path))


def read_score_map(path) -> np.ndarray:
    """Per-pixel P(fake) map.

    8-bit files mean value/255, 16-bit value/65535. Integer maps are returned
    as-is (uint8/uint16) so the metric code can use exact histogram paths;
    ``.npy`` files may hold floats in [0, 1].
    """
    arr = read_image(path)
    if arr.ndim == 3:
        arr = arr[..., 0] if arr.dtype.kind == "u" else arr.max(axis=2)
    return arr


def write_image(path, arr: np.ndarray, compress_level: int = 1) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if path.suffix == ".npy":
        np.save(path, arr)
        return path
    Image.fromarray(arr).save(path, compress_level=compress_level) if path.suffix == ".png" else Image.fromarray(arr).save(path)
    return path
