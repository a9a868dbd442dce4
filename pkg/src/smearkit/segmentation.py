"""Threshold-based cell segmentation.

Giemsa-stained cells are darker than the brightfield background, so the
foreground is the dark side of a global Otsu threshold on luminance.  After
hole filling, 8-connected components within an area band become segmented
objects.  Touching cells merge into one component and fragmented stain can
split one cell into several; downstream matching is expected to tolerate
both failure modes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from smearkit.data import BoundingBox

_LUMA = np.array([0.299, 0.587, 0.114])


def luminance(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W) or (H, W, C) image to a float luminance plane."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3:
        channels = image.shape[2]
        if channels >= 3:
            return image[..., :3].astype(np.float64) @ _LUMA
        return image.mean(axis=2).astype(np.float64)
    raise ValueError(f"expected a 2-D or 3-D image, got shape {image.shape}")


def otsu_threshold(gray: np.ndarray) -> float | None:
    """Otsu's threshold over a 256-bin histogram, or None for a constant image.

    Returns the bin value t maximizing between-class variance; callers take
    pixels <= t as the dark class.
    """
    gray = np.asarray(gray, dtype=np.float64)
    lo, hi = float(gray.min()), float(gray.max())
    if lo == hi:
        return None
    hist, edges = np.histogram(gray, bins=256, range=(lo, hi))
    hist = hist.astype(np.float64)
    weight = np.cumsum(hist)
    total = weight[-1]
    centers = (edges[:-1] + edges[1:]) / 2.0
    mass = np.cumsum(hist * centers)
    w0 = weight[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    mu0 = mass[:-1] / np.where(w0 > 0, w0, 1.0)
    mu1 = (mass[-1] - mass[:-1]) / np.where(w1 > 0, w1, 1.0)
    variance = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    best = int(np.argmax(variance))
    return float(edges[best + 1])


@dataclass(frozen=True, eq=False)
class SegmentedObject:
    """One 8-connected foreground component.

    ``coords`` is an (n, 2) array of (row, col) pixel indices; the bounding
    box uses the continuous convention that pixel (r, c) covers the unit
    square [c, c+1) x [r, r+1).
    """

    coords: np.ndarray
    box: BoundingBox
    area: int

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.intp)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "area", int(self.area))

    @property
    def centroid(self) -> tuple[float, float]:
        """(x, y) centroid of the pixel centers."""
        rows = self.coords[:, 0].astype(np.float64) + 0.5
        cols = self.coords[:, 1].astype(np.float64) + 0.5
        return (float(cols.mean()), float(rows.mean()))


def segment(image: np.ndarray, min_area: int = 1, max_area: int | None = None) -> list[SegmentedObject]:
    """Segment dark cells on a bright background.

    Luminance -> global Otsu threshold (dark side foreground) -> hole fill
    -> 8-connected components; components with pixel area outside
    [min_area, max_area] are discarded.  A constant image yields no objects
    and a warning.  Deterministic; component order follows raster scan order.
    """
    gray = luminance(image)
    threshold = otsu_threshold(gray)
    if threshold is None:
        warnings.warn("constant image: no threshold exists, returning no objects")
        return []
    mask = gray <= threshold
    mask = ndimage.binary_fill_holes(mask)
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    objects: list[SegmentedObject] = []
    for index, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None:
            continue
        component = labels[slc] == index
        area = int(component.sum())
        if area < min_area or (max_area is not None and area > max_area):
            continue
        rows, cols = np.nonzero(component)
        rows = rows + slc[0].start
        cols = cols + slc[1].start
        box = BoundingBox(float(cols.min()), float(rows.min()),
                          float(cols.max() + 1), float(rows.max() + 1))
        objects.append(SegmentedObject(coords=np.column_stack([rows, cols]), box=box, area=area))
    return objects
