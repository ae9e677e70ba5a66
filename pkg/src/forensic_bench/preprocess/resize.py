"""Bilinear resampling with half-pixel-center coordinates."""

from __future__ import annotations

import numpy as np


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(image: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize an (H, W[, C]) array to (out_h, out_w[, C]).

    Integer images come back in their own dtype, rounded half up; float
    images stay float64.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    h, w = image.shape[:2]
    if (w, h) == (out_w, out_h):
        return image.copy()
    src = image.astype(np.float64)
    y0, y1, wy = _axis_weights(h, out_h)
    x0, x1, wx = _axis_weights(w, out_w)
    wy = wy.reshape((-1,) + (1,) * (image.ndim - 1))
    rows = src[y0] * (1.0 - wy) + src[y1] * wy
    wx = wx.reshape((1, -1) + (1,) * (image.ndim - 2))
    out = rows[:, x0] * (1.0 - wx) + rows[:, x1] * wx
    if image.dtype.kind in "ui":
        info = np.iinfo(image.dtype)
        return np.clip(np.floor(out + 0.5), info.min, info.max).astype(image.dtype)
    return out
