"""Low-level forensic feature extractors: Sobel edges, 8x8 DCT, Bayar kernels."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DeclarationOnly, DegenerateKernel, NotBlockAligned

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()


def _correlate3(padded: np.ndarray, kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            k = kernel[dy, dx]
            if k:
                out += k * padded[dy:dy + h, dx:dx + w]
    return out


def sobel_gradients(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical Sobel responses with replicated borders."""
    if image.ndim != 2:
        raise ValueError("sobel expects a single-channel image")
    h, w = image.shape
    padded = np.pad(image.astype(np.float64), 1, mode="edge")
    return _correlate3(padded, SOBEL_X, h, w), _correlate3(padded, SOBEL_Y, h, w)


def sobel_magnitude(image: np.ndarray) -> np.ndarray:
    gx, gy = sobel_gradients(image)
    return np.hypot(gx, gy)


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II basis: row u is alpha(u) cos((2x+1) u pi / 2n)."""
    x = np.arange(n)
    c = np.cos((2 * x[None, :] + 1) * x[:, None] * math.pi / (2 * n))
    c[0] *= math.sqrt(1.0 / n)
    c[1:] *= math.sqrt(2.0 / n)
    return c


_C8 = dct_matrix(8)


def _blocks(image: np.ndarray) -> np.ndarray:
    if image.ndim != 2:
        raise ValueError("block_dct expects a single-channel image")
    h, w = image.shape
    if h % 8 or w % 8:
        raise NotBlockAligned(f"{w}x{h} is not a multiple of 8 on both axes")
    return image.astype(np.float64).reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)


def block_dct(image: np.ndarray) -> np.ndarray:
    """2-D DCT of every 8x8 block.

    Returns shape (H/8, W/8, 8, 8); ``out[i, j, u, v]`` is the coefficient
    of vertical frequency u and horizontal frequency v in block (i, j).
    """
    b = _blocks(image)
    return np.einsum("ux,ijxy,vy->ijuv", _C8, b, _C8, optimize=True)


def inverse_block_dct(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`block_dct`; returns the (H, W) float image."""
    nby, nbx = coeffs.shape[:2]
    b = np.einsum("ux,ijuv,vy->ijxy", _C8, coeffs, _C8, optimize=True)
    return b.swapaxes(1, 2).reshape(nby * 8, nbx * 8)


def bayar_project(kernel: np.ndarray) -> np.ndarray:
    """Apply the constrained-convolution rule: centre -1, others sum to 1.

    A kernel already satisfying the rule is returned unchanged.
    """
    k = np.array(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 3 or k.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be square with odd side >= 3, got shape {k.shape}")
    c = k.shape[0] // 2
    k[c, c] = 0.0
    total = math.fsum(k.ravel())
    if total == 0.0:
        raise DegenerateKernel("off-centre weights sum to zero")
    k /= total
    # push the rounding residue into single weights (finest ulp first) until
    # the off-centre sum is exactly 1.0; dividing by 1.0 again is a no-op
    flat = k.ravel()
    centre = c * k.shape[1] + c
    for i in np.argsort(np.abs(flat), kind="stable"):
        residual = 1.0 - math.fsum(flat)
        if residual == 0.0:
            break
        if i != centre and flat[i] != 0.0:
            flat[i] += residual
    k[c, c] = -1.0
    return k


def bayar_residual(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate a grayscale image with a (projected) kernel, replicate border."""
    if image.ndim != 2:
        raise ValueError("expects a single-channel image")
    n = kernel.shape[0]
    r = n // 2
    h, w = image.shape
    padded = np.pad(image.astype(np.float64), r, mode="edge")
    out = np.zeros((h, w), dtype=np.float64)
    for dy in range(n):
        for dx in range(n):
            out += kernel[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return out


# "fph" takes DCT coefficients plus a quantization table and emits a learned
# 256-channel map at 1/8 resolution; it exists here as a config token only.
EXTRACTORS = ("sobel", "dct", "bayar-demo", "fph")
DECLARATION_ONLY = frozenset({"fph"})


def check_extractor(name: str) -> str:
    if name in DECLARATION_ONLY:
        raise DeclarationOnly(f"{name} is declaration-only")
    if name not in EXTRACTORS:
        raise ValueError(f"unknown extractor {name!r}; choose from {', '.join(EXTRACTORS)}")
    return name
