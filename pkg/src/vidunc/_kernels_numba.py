"""Numba lane of the warp kernels.

The sampling rules here are the normative ones and are mirrored verbatim
by `_kernels_numpy`; tests assert bit-identical output for the backward
kernel. Border codes: 0 = clamp, 1 = zero-fill.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

BORDER_CLAMP = 0
BORDER_ZERO = 1


@njit(cache=True)
def backward_bilinear(src, flow, border):
    """Sample src at (x - dx, y - dy) with bilinear taps, per channel.

    Source coordinates are pre-clamped into [-1, W] x [-1, H] so tap
    indices stay in a safe integer range for arbitrary finite flows.
    """
    h, w, c = src.shape
    out = np.empty_like(src)
    for y in range(h):
        for x in range(w):
            sx = x - flow[y, x, 0]
            sy = y - flow[y, x, 1]
            sxc = min(max(sx, -1.0), float(w))
            syc = min(max(sy, -1.0), float(h))
            x0 = int(math.floor(sxc))
            y0 = int(math.floor(syc))
            fx = sxc - x0
            fy = syc - y0
            x1 = x0 + 1
            y1 = y0 + 1
            if border == BORDER_CLAMP:
                y0c = min(max(y0, 0), h - 1)
                y1c = min(max(y1, 0), h - 1)
                x0c = min(max(x0, 0), w - 1)
                x1c = min(max(x1, 0), w - 1)
                for k in range(c):
                    p00 = src[y0c, x0c, k]
                    p01 = src[y0c, x1c, k]
                    p10 = src[y1c, x0c, k]
                    p11 = src[y1c, x1c, k]
                    top = p00 * (1.0 - fx) + p01 * fx
                    bot = p10 * (1.0 - fx) + p11 * fx
                    out[y, x, k] = top * (1.0 - fy) + bot * fy
            else:
                v00 = 0 <= y0 < h and 0 <= x0 < w
                v01 = 0 <= y0 < h and 0 <= x1 < w
                v10 = 0 <= y1 < h and 0 <= x0 < w
                v11 = 0 <= y1 < h and 0 <= x1 < w
                for k in range(c):
                    p00 = src[y0, x0, k] if v00 else 0.0
                    p01 = src[y0, x1, k] if v01 else 0.0
                    p10 = src[y1, x0, k] if v10 else 0.0
                    p11 = src[y1, x1, k] if v11 else 0.0
                    top = p00 * (1.0 - fx) + p01 * fx
                    bot = p10 * (1.0 - fx) + p11 * fx
                    out[y, x, k] = top * (1.0 - fy) + bot * fy
    return out


@njit(cache=True)
def forward_splat(src, flow, border):
    """Distribute each source pixel to (x + dx, y + dy) with bilinear weights.

    Returns the weighted value accumulator and the weight sum; the caller
    divides and decides what to do with zero-weight holes. Clamp border
    redirects out-of-frame mass to the nearest edge pixel, zero border
    discards it.
    """
    h, w, c = src.shape
    acc = np.zeros((h, w, c), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            tx = x + flow[y, x, 0]
            ty = y + flow[y, x, 1]
            txc = min(max(tx, -1.0), float(w))
            tyc = min(max(ty, -1.0), float(h))
            x0 = int(math.floor(txc))
            y0 = int(math.floor(tyc))
            fx = txc - x0
            fy = tyc - y0
            for dy in range(2):
                for dx in range(2):
                    wt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
                    if wt == 0.0:
                        continue
                    yy = y0 + dy
                    xx = x0 + dx
                    if border == BORDER_CLAMP:
                        yy = min(max(yy, 0), h - 1)
                        xx = min(max(xx, 0), w - 1)
                    elif not (0 <= yy < h and 0 <= xx < w):
                        continue
                    wsum[yy, xx] += wt
                    for k in range(c):
                        acc[yy, xx, k] += wt * src[y, x, k]
    return acc, wsum
