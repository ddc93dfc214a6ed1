"""Pure-numpy lane of the warp kernels.

Mirrors `_kernels_numba` operation for operation; the backward kernel is
bit-identical to the numba lane because both evaluate the same IEEE
expression tree per pixel.
"""

from __future__ import annotations

import numpy as np

BORDER_CLAMP = 0
BORDER_ZERO = 1


def _tap(src, yy, xx, border):
    h, w, _ = src.shape
    v = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1), :]
    if border == BORDER_ZERO:
        valid = ((yy >= 0) & (yy < h) & (xx >= 0) & (xx < w))[..., None]
        v = np.where(valid, v, 0.0)
    return v


def backward_bilinear(src, flow, border):
    h, w, _ = src.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sxc = np.clip(xs - flow[..., 0], -1.0, float(w))
    syc = np.clip(ys - flow[..., 1], -1.0, float(h))
    x0f = np.floor(sxc)
    y0f = np.floor(syc)
    fx = (sxc - x0f)[..., None]
    fy = (syc - y0f)[..., None]
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    p00 = _tap(src, y0, x0, border)
    p01 = _tap(src, y0, x1, border)
    p10 = _tap(src, y1, x0, border)
    p11 = _tap(src, y1, x1, border)
    top = p00 * (1.0 - fx) + p01 * fx
    bot = p10 * (1.0 - fx) + p11 * fx
    return top * (1.0 - fy) + bot * fy


def forward_splat(src, flow, border):
    h, w, c = src.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    txc = np.clip(xs + flow[..., 0], -1.0, float(w))
    tyc = np.clip(ys + flow[..., 1], -1.0, float(h))
    x0f = np.floor(txc)
    y0f = np.floor(tyc)
    fx = txc - x0f
    fy = tyc - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)

    acc = np.zeros((h, w, c), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    vals = src.reshape(h * w, c)
    for dy in (0, 1):
        for dx in (0, 1):
            wt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            yy = y0 + dy
            xx = x0 + dx
            live = wt != 0.0
            if border == BORDER_CLAMP:
                yy = np.clip(yy, 0, h - 1)
                xx = np.clip(xx, 0, w - 1)
            else:
                live &= (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            idx = (yy * w + xx).ravel()
            keep = live.ravel()
            np.add.at(wsum.reshape(-1), idx[keep], wt.ravel()[keep])
            np.add.at(
                acc.reshape(h * w, c),
                idx[keep],
                wt.ravel()[keep, None] * vals[keep],
            )
    return acc, wsum
