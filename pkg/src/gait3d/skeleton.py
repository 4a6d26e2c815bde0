"""Skeletonization of binary silhouettes.

Two representations:

* ``thin`` — iterative boundary peeling that reduces blobs to unit-width
  strokes while preserving 8-connectivity of elongated shapes.
* ``medial_axis`` — ridge of the chessboard distance transform, thinned to
  unit width with the same peeling pass.

Masks are (h, w) bool arrays, True = foreground. Pixels outside the image
count as background.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

# Ring of 8 neighbors in clockwise order starting from north:
# N, NE, E, SE, S, SW, W, NW as (dy, dx) offsets.
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _shifted(mask: np.ndarray) -> list[np.ndarray]:
    """Neighbor planes in ring order; plane[i][y, x] = mask[y+dy, x+dx] or False."""
    padded = np.pad(mask, 1, constant_values=False)
    h, w = mask.shape
    return [padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy, dx in _RING]


def neighbor_stats(mask: np.ndarray, y: int, x: int) -> tuple[int, int]:
    """(B, A) at one pixel: B = foreground neighbors among the 8, A = number of
    False->True transitions scanning the ring N, NE, ..., NW and back to N."""
    h, w = mask.shape
    ring = []
    for dy, dx in _RING:
        yy, xx = y + dy, x + dx
        ring.append(bool(mask[yy, xx]) if 0 <= yy < h and 0 <= xx < w else False)
    b = sum(ring)
    a = sum(1 for i in range(8) if not ring[i] and ring[(i + 1) % 8])
    return b, a


def _thin_subpass(mask: np.ndarray, second: bool) -> np.ndarray:
    """Flags for one sub-iteration; all flagged pixels are removed together."""
    n, ne, e, se, s, sw, w, nw = _shifted(mask)
    ring = np.stack([n, ne, e, se, s, sw, w, nw])
    b = ring.sum(axis=0)
    nxt = np.roll(ring, -1, axis=0)
    a = (~ring & nxt).sum(axis=0)
    if not second:
        cond3 = ~(n & e & s)
        cond4 = ~(e & s & w)
    else:
        cond3 = ~(n & e & w)
        cond4 = ~(n & s & w)
    return mask & (b >= 2) & (b <= 6) & (a == 1) & cond3 & cond4


def thin(mask: np.ndarray) -> np.ndarray:
    """Peel boundary pixels in alternating sub-passes until no pixel changes."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionError(f"expected 2-d mask, got shape {mask.shape}")
    cur = mask.copy()
    while True:
        changed = False
        for second in (False, True):
            flags = _thin_subpass(cur, second)
            if flags.any():
                cur &= ~flags
                changed = True
        if not changed:
            return cur


def distance_chessboard(mask: np.ndarray) -> np.ndarray:
    """Chessboard (L-inf) distance to the nearest background pixel.

    Background pixels get 0; a foreground pixel adjacent (8-neighborhood) to
    background gets 1. Everything outside the image counts as background, so
    border foreground pixels are always 1. Two chamfer sweeps are exact for
    this metric; each sweep relaxes from the adjacent row and then within the
    row via a running-minimum closed form of ``d[j] = min(d[j], d[j -+ 1] + 1)``.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionError(f"expected 2-d mask, got shape {mask.shape}")
    padded = np.pad(mask, 1, constant_values=False)
    ph, pw = padded.shape
    dist = np.where(padded, ph + pw, 0).astype(np.int64)
    cols = np.arange(pw)

    def relax_from(dst: np.ndarray, src: np.ndarray) -> None:
        """dst[j] = min(dst[j], 1 + min(src[j-1], src[j], src[j+1]))."""
        m = src.copy()
        np.minimum(m[:-1], src[1:], out=m[:-1])
        np.minimum(m[1:], src[:-1], out=m[1:])
        np.minimum(dst, m + 1, out=dst)

    def relax_along(row: np.ndarray) -> None:
        """Left-to-right pass: row[j] = min over k <= j of row[k] + (j - k)."""
        g = row - cols
        np.minimum.accumulate(g, out=g)
        np.add(g, cols, out=row)

    for y in range(1, ph):
        relax_from(dist[y], dist[y - 1])
        relax_along(dist[y])
    for y in range(ph - 2, -1, -1):
        relax_from(dist[y], dist[y + 1])
        relax_along(dist[y][::-1])
    return dist[1:-1, 1:-1]


def medial_axis(mask: np.ndarray) -> np.ndarray:
    """Local maxima of the chessboard distance transform, thinned to unit width.

    A foreground pixel is kept when its distance is >= that of all 8 neighbors
    (out-of-image neighbors count as distance 0), then the ridge set is run
    through ``thin`` to obtain strokes.
    """
    dist = distance_chessboard(mask)
    padded = np.pad(dist, 1, constant_values=0)
    h, w = dist.shape
    ridge = dist > 0
    for dy, dx in _RING:
        ridge &= dist >= padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return thin(ridge)
