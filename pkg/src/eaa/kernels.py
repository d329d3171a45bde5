"""Numeric inner loops for the simulated microscope.

Three kernels dominate simulation runtime: analytic pattern rasterization,
separable Gaussian blurring (the defocus PSF), and bilinear resampling of the
blurred patch at scan coordinates.  Each has a numba ``@njit`` build and a
pure-numpy build; the active one is chosen at import time.  Set
``EAA_DISABLE_NUMBA=1`` to force the numpy path (the benchmark in
``benchmarks/bench_kernels.py`` compares both).

Pattern primitives are packed into a float64 array, one row per primitive:

* radial star:   [0, cx, cy, radius, n_spokes, amplitude]
* line grid:     [1, pitch, line_width, origin_x, origin_y, amplitude]
* speckle dots:  [2, cell, fill, radius, salt, amplitude]

Amplitude scales a primitive's contribution between the background and the
feature intensity (1 = full feature); overlaps take the maximum.

Speckle dots are a deterministic hash-based texture (one candidate dot per
lattice cell, jittered inside it), giving every field of view the broadband
content that image registration needs on real specimens.
"""

from __future__ import annotations

import math
import os

import numpy as np

KIND_STAR = 0.0
KIND_GRID = 1.0
KIND_SPECKLE = 2.0

_TWO_PI = 2.0 * math.pi

# integer lattice hash constants (wrapping int64 arithmetic, identical on the
# numpy and numba paths)
_H1 = np.int64(374761393)
_H2 = np.int64(668265263)
_H3 = np.int64(1274126177)


# ---------------------------------------------------------------------------
# Pure-numpy implementations
# ---------------------------------------------------------------------------


def _lattice_hash_numpy(ix: np.ndarray, iy: np.ndarray, salt: np.int64) -> np.ndarray:
    with np.errstate(over="ignore"):
        n = ix * _H1 + iy * _H2 + salt * _H3
        n = (n ^ (n >> np.int64(13))) * _H3
        n = n ^ (n >> np.int64(16))
    return (n & np.int64(65535)).astype(np.float64) / 65536.0


def rasterize_pattern_numpy(
    xs: np.ndarray, ys: np.ndarray, prims: np.ndarray, background: float, feature: float
) -> np.ndarray:
    """Evaluate the composite pattern at each (x, y); returns intensities."""
    level = np.zeros(xs.shape[0], dtype=np.float64)
    for p in range(prims.shape[0]):
        kind = prims[p, 0]
        amp = prims[p, 5]
        if kind == KIND_STAR:
            cx, cy, radius, n_spokes = prims[p, 1:5]
            dx = xs - cx
            dy = ys - cy
            inside = dx * dx + dy * dy <= radius * radius
            theta = np.arctan2(dy, dx)
            theta = np.where(theta < 0.0, theta + _TWO_PI, theta)
            sector = np.floor(n_spokes * theta / math.pi).astype(np.int64)
            hit = inside & (sector % 2 == 0)
        elif kind == KIND_GRID:
            pitch, lw, ox, oy = prims[p, 1:5]
            rx = np.mod(xs - ox, pitch)
            ry = np.mod(ys - oy, pitch)
            dist_x = np.minimum(rx, pitch - rx)
            dist_y = np.minimum(ry, pitch - ry)
            hit = (dist_x < lw / 2.0) | (dist_y < lw / 2.0)
        else:
            cell, fill, radius, salt = prims[p, 1:5]
            ix = np.floor(xs / cell).astype(np.int64)
            iy = np.floor(ys / cell).astype(np.int64)
            s = np.int64(int(salt))
            present = _lattice_hash_numpy(ix, iy, s) < fill
            cx = (ix + 0.3 + 0.4 * _lattice_hash_numpy(ix, iy, s + np.int64(1))) * cell
            cy = (iy + 0.3 + 0.4 * _lattice_hash_numpy(ix, iy, s + np.int64(2))) * cell
            hit = present & ((xs - cx) ** 2 + (ys - cy) ** 2 < radius * radius)
        level = np.maximum(level, np.where(hit, amp, 0.0))
    return background + level * (feature - background)


def gaussian_blur_numpy(img: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Separable convolution with a normalized 1D kernel, edge-clamped."""
    r = (weights.shape[0] - 1) // 2

    def conv_rows(a: np.ndarray) -> np.ndarray:
        padded = np.pad(a, ((0, 0), (r, r)), mode="edge")
        windows = np.lib.stride_tricks.sliding_window_view(padded, weights.shape[0], axis=1)
        return windows @ weights

    out = conv_rows(img)
    out = conv_rows(out.T).T
    return np.ascontiguousarray(out)


def bilinear_sample_numpy(
    grid: np.ndarray, x0: float, y0: float, h: float, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """Sample grid (row i = y0 + i*h, col j = x0 + j*h) at arbitrary points."""
    ny, nx = grid.shape
    gx = np.clip((xs - x0) / h, 0.0, nx - 1.0)
    gy = np.clip((ys - y0) / h, 0.0, ny - 1.0)
    ix = np.minimum(gx.astype(np.int64), nx - 2) if nx > 1 else np.zeros(len(gx), np.int64)
    iy = np.minimum(gy.astype(np.int64), ny - 2) if ny > 1 else np.zeros(len(gy), np.int64)
    fx = gx - ix
    fy = gy - iy
    if nx == 1:
        fx = np.zeros_like(fx)
        return (1 - fy) * grid[iy, 0] + fy * grid[np.minimum(iy + 1, ny - 1), 0]
    if ny == 1:
        fy = np.zeros_like(fy)
        return (1 - fx) * grid[0, ix] + fx * grid[0, np.minimum(ix + 1, nx - 1)]
    top = (1 - fx) * grid[iy, ix] + fx * grid[iy, ix + 1]
    bot = (1 - fx) * grid[iy + 1, ix] + fx * grid[iy + 1, ix + 1]
    return (1 - fy) * top + fy * bot


# ---------------------------------------------------------------------------
# Numba builds (same math, explicit loops)
# ---------------------------------------------------------------------------


def _make_numba_kernels():
    from numba import int64, njit

    @njit(cache=True)
    def lattice_hash(ix, iy, salt):
        n = ix * int64(374761393) + iy * int64(668265263) + salt * int64(1274126177)
        n = (n ^ (n >> int64(13))) * int64(1274126177)
        n = n ^ (n >> int64(16))
        return (n & int64(65535)) / 65536.0

    @njit(cache=True)
    def rasterize(xs, ys, prims, background, feature):
        n = xs.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            x = xs[i]
            y = ys[i]
            level = 0.0
            for p in range(prims.shape[0]):
                amp = prims[p, 5]
                if amp <= level:
                    continue
                hit = False
                if prims[p, 0] == 0.0:
                    dx = x - prims[p, 1]
                    dy = y - prims[p, 2]
                    radius = prims[p, 3]
                    if dx * dx + dy * dy <= radius * radius:
                        theta = math.atan2(dy, dx)
                        if theta < 0.0:
                            theta += _TWO_PI
                        sector = int(math.floor(prims[p, 4] * theta / math.pi))
                        if sector % 2 == 0:
                            hit = True
                elif prims[p, 0] == 1.0:
                    pitch = prims[p, 1]
                    lw = prims[p, 2]
                    rx = (x - prims[p, 3]) % pitch
                    ry = (y - prims[p, 4]) % pitch
                    dx2 = rx if rx < pitch - rx else pitch - rx
                    dy2 = ry if ry < pitch - ry else pitch - ry
                    if dx2 < lw / 2.0 or dy2 < lw / 2.0:
                        hit = True
                else:
                    cell = prims[p, 1]
                    fill = prims[p, 2]
                    radius = prims[p, 3]
                    salt = int64(int(prims[p, 4]))
                    ix = int64(math.floor(x / cell))
                    iy = int64(math.floor(y / cell))
                    if lattice_hash(ix, iy, salt) < fill:
                        cx = (ix + 0.3 + 0.4 * lattice_hash(ix, iy, salt + int64(1))) * cell
                        cy = (iy + 0.3 + 0.4 * lattice_hash(ix, iy, salt + int64(2))) * cell
                        if (x - cx) ** 2 + (y - cy) ** 2 < radius * radius:
                            hit = True
                if hit:
                    level = amp
            out[i] = background + level * (feature - background)
        return out

    @njit(cache=True)
    def blur(img, weights):
        h, w = img.shape
        r = (weights.shape[0] - 1) // 2
        tmp = np.empty_like(img)
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for k in range(-r, r + 1):
                    jj = j + k
                    if jj < 0:
                        jj = 0
                    elif jj >= w:
                        jj = w - 1
                    acc += img[i, jj] * weights[k + r]
                tmp[i, j] = acc
        out = np.empty_like(img)
        for j in range(w):
            for i in range(h):
                acc = 0.0
                for k in range(-r, r + 1):
                    ii = i + k
                    if ii < 0:
                        ii = 0
                    elif ii >= h:
                        ii = h - 1
                    acc += tmp[ii, j] * weights[k + r]
                out[i, j] = acc
        return out

    @njit(cache=True)
    def bilinear(grid, x0, y0, h, xs, ys):
        ny, nx = grid.shape
        n = xs.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            gx = (xs[i] - x0) / h
            gy = (ys[i] - y0) / h
            if gx < 0.0:
                gx = 0.0
            elif gx > nx - 1.0:
                gx = nx - 1.0
            if gy < 0.0:
                gy = 0.0
            elif gy > ny - 1.0:
                gy = ny - 1.0
            ix = int(math.floor(gx))
            iy = int(math.floor(gy))
            if ix > nx - 2:
                ix = nx - 2 if nx > 1 else 0
            if iy > ny - 2:
                iy = ny - 2 if ny > 1 else 0
            fx = gx - ix
            fy = gy - iy
            ix2 = ix + 1 if ix + 1 < nx else ix
            iy2 = iy + 1 if iy + 1 < ny else iy
            top = (1.0 - fx) * grid[iy, ix] + fx * grid[iy, ix2]
            bot = (1.0 - fx) * grid[iy2, ix] + fx * grid[iy2, ix2]
            out[i] = (1.0 - fy) * top + fy * bot
        return out

    return rasterize, blur, bilinear


def gaussian_weights(sigma_px: float, radius: int | None = None) -> np.ndarray:
    """Normalized 1D Gaussian kernel; radius defaults to ceil(4*sigma)."""
    if radius is None:
        radius = max(1, int(math.ceil(4.0 * sigma_px)))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (k / sigma_px) ** 2)
    return w / w.sum()


USING_NUMBA = False
rasterize_pattern = rasterize_pattern_numpy
gaussian_blur = gaussian_blur_numpy
bilinear_sample = bilinear_sample_numpy

if not os.environ.get("EAA_DISABLE_NUMBA"):
    try:
        rasterize_pattern, gaussian_blur, bilinear_sample = _make_numba_kernels()
        USING_NUMBA = True
    except ImportError:  # numba not installed: numpy path stays active
        pass
