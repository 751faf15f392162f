"""Summed-area tables: upright, squared, and 45-degree rotated.

Tables are indexed ``[row, col]``. Upright tables have shape (H+1, W+1) with
``sum[y, x]`` the total of pixels in rows ``[0, y)`` and columns ``[0, x)``.

The rotated table stores, for apex pixel ``(p, q)``, the total over the
inverted triangle ``{(x', y') : y' <= q, |p - x'| <= q - y'}``; pixels outside
the image count as zero. Columns ``p`` run over ``[-1, W]`` and rows ``q``
over ``[-1, H-1]``, stored at ``tilted[q + 1, p + 1]``.

A tilted rect ``(x, y, w, h)`` covers the pixels with
``0 <= (px - x) + (py - y) <= 2w - 1`` and ``0 <= (py - y) - (px - x) <= 2h - 1``:
a diamond with its top corner at ``(x, y)``, ``w`` steps down-right and ``h``
steps down-left, holding ``2wh`` pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._accel import njit, resolve_backend


class RectBoundsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IntegralImage:
    sum: np.ndarray
    sqsum: np.ndarray
    tilted: np.ndarray | None = None

    @property
    def width(self):
        return self.sum.shape[1] - 1

    @property
    def height(self):
        return self.sum.shape[0] - 1


def _upright(a):
    h, w = a.shape
    out = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=out[1:, 1:])
    return out


@njit(cache=True)
def _rotated_numba(img):
    h, w = img.shape
    pad = h + 2
    wp = w + 2 * pad
    r = np.zeros((h + 1, wp), dtype=np.int64)
    for q in range(h):
        for c in range(wp):
            x = c - pad
            v = 0
            if 0 <= x < w:
                v += img[q, x]
                if q > 0:
                    v += img[q - 1, x]
            if c > 0:
                v += r[q, c - 1]
            if c + 1 < wp:
                v += r[q, c + 1]
            if q > 0:
                v -= r[q - 1, c]
            r[q + 1, c] = v
    return r[:, pad - 1 : pad + w + 1].copy()


def _rotated_numpy(img):
    # Row recurrence R(p,q) = R(p-1,q-1) + R(p+1,q-1) - R(p,q-2) + I(p,q) + I(p,q-1),
    # run on a zero-padded strip wide enough that edge error never reaches [-1, W].
    h, w = img.shape
    pad = h + 2
    wp = w + 2 * pad
    src = np.zeros((h, wp), dtype=np.int64)
    src[:, pad : pad + w] = img
    r = np.zeros((h + 1, wp), dtype=np.int64)
    prev2 = np.zeros(wp, dtype=np.int64)
    for q in range(h):
        prev = r[q]
        row = src[q].copy()
        if q > 0:
            row += src[q - 1]
        row[1:] += prev[:-1]
        row[:-1] += prev[1:]
        row -= prev2
        r[q + 1] = row
        prev2 = prev
    return r[:, pad - 1 : pad + w + 1].copy()


def integral_image(img, with_rotated=False, backend=None) -> IntegralImage:
    """Build the summed-area tables of an 8-bit image (GrayImage or array)."""
    a = np.asarray(getattr(img, "pixels", img)).astype(np.int64)
    tilted = None
    if with_rotated:
        if resolve_backend(backend) == "numba":
            tilted = _rotated_numba(a)
        else:
            tilted = _rotated_numpy(a)
    return IntegralImage(_upright(a), _upright(a * a), tilted)


def tilted_extent(x, y, w, h):
    """Inclusive pixel bounding box ``(x0, y0, x1, y1)`` of a tilted rect."""
    return x - h + 1, y, x + w - 1, y + w + h - 1


def rect_in_bounds(rect, tilted, width, height):
    x, y, w, h = rect
    if w < 0 or h < 0:
        return False
    if w == 0 or h == 0:
        return 0 <= x <= width and 0 <= y <= height
    if tilted:
        x0, y0, x1, y1 = tilted_extent(x, y, w, h)
        return x0 >= 0 and y0 >= 0 and x1 < width and y1 < height
    return x >= 0 and y >= 0 and x + w <= width and y + h <= height


def rect_sum(ii: IntegralImage, rect, tilted=False):
    """Exact integer pixel total over an upright or tilted rect."""
    x, y, w, h = (int(v) for v in rect)
    if not rect_in_bounds((x, y, w, h), tilted, ii.width, ii.height):
        kind = "tilted" if tilted else "upright"
        raise RectBoundsError(f"{kind} rect {(x, y, w, h)} outside {ii.width}x{ii.height} image")
    if w == 0 or h == 0:
        return 0
    if not tilted:
        s = ii.sum
        return int(s[y + h, x + w] - s[y + h, x] - s[y, x + w] + s[y, x])
    if ii.tilted is None:
        raise ValueError("integral image built without the rotated table")
    t = ii.tilted
    # t[q + 1, p + 1] holds the triangle with apex (p, q)
    return int(
        t[y + w + h, x - h + w + 1] - t[y + h, x - h + 1] - t[y + w, x + w + 1] + t[y, x + 1]
    )
