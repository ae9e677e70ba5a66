"""Fixed-size tiling of large document images with mask-aligned crops."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch
from ..images import binarize_mask


@dataclass(frozen=True)
class TilePlan:
    width: int
    height: int
    tile: int
    offsets: tuple[tuple[int, int], ...]
    padded: bool

    @property
    def padded_width(self) -> int:
        return max(self.width, self.tile)

    @property
    def padded_height(self) -> int:
        return max(self.height, self.tile)


@dataclass(frozen=True)
class Tile:
    x: int
    y: int
    image: np.ndarray
    mask: Optional[np.ndarray]
    label: int
    padded: bool

    def name(self, orig_id: str) -> str:
        return f"{orig_id}_x{self.x}_y{self.y}"


def _axis_offsets(n: int, tile: int) -> list[int]:
    if n <= tile:
        return [0]
    offs = list(range(0, n - tile + 1, tile))
    if n % tile:
        offs.append(n - tile)
    return offs


def tile_plan(width: int, height: int, tile: int = 512) -> TilePlan:
    """Grid of ``tile``-sized crops covering a ``width`` x ``height`` image.

    Regular stride ``tile``; when an axis is not a multiple of the tile, one
    extra crop is aligned to the far border. Axes shorter than the tile get a
    single zero-padded crop. Offsets are raster ordered (rows, then columns).
    """
    if width < 1 or height < 1 or tile < 1:
        raise ValueError(f"dimensions must be positive, got {width}x{height} tile {tile}")
    xs, ys = _axis_offsets(width, tile), _axis_offsets(height, tile)
    offsets = tuple((x, y) for y in ys for x in xs)
    return TilePlan(width, height, tile, offsets, padded=width < tile or height < tile)


def _crop(arr: np.ndarray, x: int, y: int, tile: int) -> np.ndarray:
    part = arr[y:y + tile, x:x + tile]
    if part.shape[0] == tile and part.shape[1] == tile:
        return part.copy()
    out = np.zeros((tile, tile) + arr.shape[2:], dtype=arr.dtype)
    out[:part.shape[0], :part.shape[1]] = part
    return out


def slice_image_and_mask(
    image: np.ndarray,
    mask: Optional[np.ndarray],
    plan: TilePlan,
    label: Optional[int] = None,
) -> list[Tile]:
    """Cut ``image`` (and ``mask`` with identical offsets) per ``plan``.

    With a mask, a tile is fake iff its mask crop has at least one
    manipulated pixel; without one, every tile takes ``label``.
    """
    h, w = image.shape[:2]
    if (w, h) != (plan.width, plan.height):
        raise DimensionMismatch(f"image is {w}x{h} but plan was made for {plan.width}x{plan.height}")
    if mask is not None and mask.shape[:2] != (h, w):
        raise DimensionMismatch(f"mask is {mask.shape[1]}x{mask.shape[0]}, image is {w}x{h}")
    if mask is None and label not in (0, 1):
        raise ValueError("an image label (0 or 1) is required when no mask is given")
    manipulated = None if mask is None else binarize_mask(mask)
    tiles = []
    for x, y in plan.offsets:
        t_mask = None
        if mask is None:
            t_label = int(label)
        else:
            t_mask = _crop(mask, x, y, plan.tile)
            t_label = int(manipulated[y:y + plan.tile, x:x + plan.tile].any())
        tiles.append(Tile(x, y, _crop(image, x, y, plan.tile), t_mask, t_label, plan.padded))
    return tiles
