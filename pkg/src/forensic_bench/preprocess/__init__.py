from .features import (
    EXTRACTORS,
    bayar_project,
    bayar_residual,
    block_dct,
    check_extractor,
    dct_matrix,
    inverse_block_dct,
    sobel_gradients,
    sobel_magnitude,
)
from .resize import resize_bilinear
from .tiling import Tile, TilePlan, slice_image_and_mask, tile_plan

__all__ = [
    "EXTRACTORS", "Tile", "TilePlan", "bayar_project", "bayar_residual", "block_dct",
    "check_extractor", "dct_matrix", "inverse_block_dct", "resize_bilinear",
    "slice_image_and_mask", "sobel_gradients", "sobel_magnitude", "tile_plan",
]
