"""Silhouette extraction from raw frame sequences.

Grayscale conversion, frame differencing against a static background,
morphological denoising, connected-component detection with single-object
tracking, and crop-and-scale normalization to a fixed silhouette size.

Conventions: frames are (h, w) uint8 arrays, masks are (h, w) bool arrays
with True = foreground. Box coordinates use x = column, y = row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import DimensionError, EmptySilhouetteError, ParameterError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# 8-connectivity for component labeling, matching the thinning module.
_CONN8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; (x0, y0) is the top-left corner."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ParameterError(f"degenerate box {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def centroid(self) -> tuple[float, float]:
        """(cx, cy) of the box center."""
        return (self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)


def to_grayscale(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Combine color channels into luminance: round(0.299 r + 0.587 g + 0.114 b)."""
    r, g, b = (np.asarray(c) for c in (r, g, b))
    if not (r.shape == g.shape == b.shape) or r.ndim != 2:
        raise DimensionError(f"channel shapes differ: {r.shape}, {g.shape}, {b.shape}")
    wr, wg, wb = GRAY_WEIGHTS
    lum = wr * r.astype(np.float64) + wg * g.astype(np.float64) + wb * b.astype(np.float64)
    return np.clip(np.floor(lum + 0.5), 0, 255).astype(np.uint8)


def background_subtract(frame: np.ndarray, background: np.ndarray, threshold: int) -> np.ndarray:
    """Foreground where |frame - background| exceeds ``threshold`` (strictly)."""
    if frame.shape != background.shape:
        raise DimensionError(f"frame {frame.shape} vs background {background.shape}")
    diff = np.abs(frame.astype(np.int16) - background.astype(np.int16))
    return diff > threshold


def _windows3x3(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
    return sliding_window_view(padded, (3, 3))


def erode(mask: np.ndarray) -> np.ndarray:
    """3x3 full structuring element; out-of-image neighbors count as background."""
    return _windows3x3(mask).all(axis=(2, 3))


def dilate(mask: np.ndarray) -> np.ndarray:
    """3x3 full structuring element; out-of-image neighbors count as background."""
    return _windows3x3(mask).any(axis=(2, 3))


def denoise(mask: np.ndarray) -> np.ndarray:
    """One closing (dilate then erode) followed by one opening (erode then dilate)."""
    closed = erode(dilate(mask))
    return dilate(erode(closed))


def component_boxes(mask: np.ndarray, min_area: int) -> list[BoundingBox]:
    """Bounding boxes of all 8-connected components with area >= min_area.

    Ordered by descending area, ties by top-left corner in row-major order.
    """
    if min_area < 1:
        raise ParameterError(f"min_area must be >= 1, got {min_area}")
    labels, count = ndimage.label(mask, structure=_CONN8)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel())[1:]
    boxes = []
    for label, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None or areas[label - 1] < min_area:
            continue
        ys, xs = slc
        boxes.append(
            BoundingBox(x0=xs.start, y0=ys.start, w=xs.stop - xs.start, h=ys.stop - ys.start)
        )
    boxes.sort(key=lambda bb: (-bb.area, bb.y0, bb.x0))
    return boxes


def detect_object(mask: np.ndarray, min_area: int) -> BoundingBox | None:
    """Box of the largest qualifying component, or None (caller discards the frame)."""
    boxes = component_boxes(mask, min_area)
    return boxes[0] if boxes else None


def select_tracked(
    detections: list[BoundingBox], previous: BoundingBox | None
) -> BoundingBox | None:
    """Pick the detection to follow.

    Without history: the largest box. With history: the box whose centroid is
    nearest the previous centroid, ties broken by larger area, then by
    row-major position of the top-left corner.
    """
    if not detections:
        return None
    if previous is None:
        return min(detections, key=lambda bb: (-bb.area, bb.y0, bb.x0))
    px, py = previous.centroid

    def key(bb: BoundingBox) -> tuple[float, int, int, int]:
        cx, cy = bb.centroid
        return ((cx - px) ** 2 + (cy - py) ** 2, -bb.area, bb.y0, bb.x0)

    return min(detections, key=key)


def extract_silhouette(
    mask: np.ndarray, box: BoundingBox, out_h: int = 64, out_w: int = 64
) -> np.ndarray:
    """Crop ``box``, rescale preserving aspect ratio, center on an out_h x out_w canvas.

    The larger crop dimension maps onto the corresponding output dimension;
    sampling is nearest-neighbor so the result stays strictly binary. The
    output always keeps at least one foreground pixel.
    """
    h, w = mask.shape
    if box.x0 < 0 or box.y0 < 0 or box.x0 + box.w > w or box.y0 + box.h > h:
        raise ParameterError(f"box {box} outside {h}x{w} mask")
    crop = mask[box.y0 : box.y0 + box.h, box.x0 : box.x0 + box.w]
    if not crop.any():
        raise EmptySilhouetteError(f"box {box} contains no foreground")

    if box.h >= box.w:
        new_h = out_h
        new_w = min(out_w, max(1, round(box.w * out_h / box.h)))
    else:
        new_w = out_w
        new_h = min(out_h, max(1, round(box.h * out_w / box.w)))
    rows = np.minimum((np.arange(new_h) + 0.5) * box.h / new_h, box.h - 1).astype(np.intp)
    cols = np.minimum((np.arange(new_w) + 0.5) * box.w / new_w, box.w - 1).astype(np.intp)
    scaled = crop[np.ix_(rows, cols)]
    if not scaled.any():
        # Degenerate downscale whose sample grid misses every foreground pixel:
        # keep the invariant by marking the image of the first foreground pixel.
        sy, sx = np.argwhere(crop)[0]
        scaled[min(new_h - 1, sy * new_h // box.h), min(new_w - 1, sx * new_w // box.w)] = True

    out = np.zeros((out_h, out_w), dtype=bool)
    top = (out_h - new_h) // 2
    left = (out_w - new_w) // 2
    out[top : top + new_h, left : left + new_w] = scaled
    return out
