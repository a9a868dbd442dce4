"""Hand-crafted per-cell feature vectors over intensity, shape, and texture.

The vector has a fixed, documented order of 35 values:

* 18 intensity: for each of the three channels, the mean, standard
  deviation, min, max, median, and mean absolute deviation of the masked
  pixel values.
* 5 shape: pixel area, boundary perimeter, extent (area over bounding-box
  area), aspect ratio (box width over box height), and circularity
  (4*pi*area / perimeter^2).
* 12 texture: for each channel, the mean and standard deviation of the
  gradient magnitude, the entropy of a 5-bin intensity histogram, and the
  high-frequency energy (mean squared 4-neighbor Laplacian).

Perimeter counts the unit edges between a mask pixel and a non-mask (or
outside) pixel, so a square of side s has perimeter 4*s and circularity
pi/4.  Gray images are treated as three identical channels so the
dimension never changes.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from smearkit.data import BoundingBox
from smearkit.segmentation import SegmentedObject

_CHANNELS = ("r", "g", "b")

FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{ch}_{stat}" for ch in _CHANNELS
    for stat in ("mean", "std", "min", "max", "median", "mad")
) + (
    "area", "perimeter", "extent", "aspect_ratio", "circularity",
) + tuple(
    f"{ch}_{stat}" for ch in _CHANNELS
    for stat in ("grad_mean", "grad_std", "entropy5", "highfreq_energy")
)

N_FEATURES = len(FEATURE_NAMES)


def _as_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        return np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim == 3 and image.shape[2] >= 3:
        return image[:, :, :3]
    raise ValueError(f"expected (H, W) or (H, W, >=3) image, got shape {image.shape}")


def _region_mask(image_shape, region) -> tuple[slice, slice, np.ndarray]:
    """Resolve a region to (row slice, col slice, submask) within the image."""
    height, width = image_shape[:2]
    if isinstance(region, SegmentedObject):
        rows = region.coords[:, 0]
        cols = region.coords[:, 1]
        r0, r1 = int(rows.min()), int(rows.max()) + 1
        c0, c1 = int(cols.min()), int(cols.max()) + 1
        if r0 < 0 or c0 < 0 or r1 > height or c1 > width:
            raise ValueError("segmented object outside image bounds")
        mask = np.zeros((r1 - r0, c1 - c0), dtype=bool)
        mask[rows - r0, cols - c0] = True
        return slice(r0, r1), slice(c0, c1), mask
    if isinstance(region, BoundingBox):
        r0 = int(math.floor(region.ymin))
        c0 = int(math.floor(region.xmin))
        r1 = int(math.ceil(region.ymax))
        c1 = int(math.ceil(region.xmax))
        if r0 < 0 or c0 < 0 or r1 > height or c1 > width:
            raise ValueError(f"box {region.as_tuple()} outside image bounds {width}x{height}")
        mask = np.ones((r1 - r0, c1 - c0), dtype=bool)
        return slice(r0, r1), slice(c0, c1), mask
    raise TypeError(f"region must be a SegmentedObject or BoundingBox, got {type(region)!r}")


def mask_perimeter(mask: np.ndarray) -> int:
    """Number of unit edges between mask pixels and non-mask (or outside) pixels."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    edges = 0
    core = padded[1:-1, 1:-1]
    edges += int((core & ~padded[:-2, 1:-1]).sum())
    edges += int((core & ~padded[2:, 1:-1]).sum())
    edges += int((core & ~padded[1:-1, :-2]).sum())
    edges += int((core & ~padded[1:-1, 2:]).sum())
    return edges


def _entropy5(values: np.ndarray) -> float:
    hist, _ = np.histogram(values, bins=5, range=(0.0, 256.0))
    total = hist.sum()
    if total == 0:
        return 0.0
    p = hist[hist > 0] / total
    return float(-(p * np.log2(p)).sum())


def _laplacian(plane: np.ndarray) -> np.ndarray:
    padded = np.pad(plane, 1, mode="edge")
    return (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
            - 4.0 * plane)


def extract_features(image: np.ndarray, region) -> np.ndarray:
    """Measure the 35-value feature vector of one cell region.

    ``region`` is a SegmentedObject (its own mask) or a BoundingBox (every
    pixel overlapping the box).  Shape features come from the mask geometry
    alone; intensity and texture statistics use the masked pixels of each
    channel.  Deterministic, and always finite for a non-empty region.
    """
    rgb = _as_rgb(image)
    rslc, cslc, mask = _region_mask(rgb.shape, region)
    if mask.sum() == 0:
        raise ValueError("empty region")
    patch = rgb[rslc, cslc].astype(np.float64)

    values = np.empty(N_FEATURES, dtype=np.float64)
    pos = 0
    for ch in range(3):
        pixels = patch[:, :, ch][mask]
        mean = float(pixels.mean())
        values[pos:pos + 6] = (
            mean,
            float(pixels.std()),
            float(pixels.min()),
            float(pixels.max()),
            float(np.median(pixels)),
            float(np.abs(pixels - mean).mean()),
        )
        pos += 6

    area = int(mask.sum())
    perimeter = mask_perimeter(mask)
    box_h, box_w = mask.shape
    values[pos:pos + 5] = (
        float(area),
        float(perimeter),
        area / float(box_h * box_w),
        box_w / float(box_h),
        4.0 * math.pi * area / float(perimeter) ** 2,
    )
    pos += 5

    for ch in range(3):
        plane = patch[:, :, ch]
        if plane.shape[0] >= 2 and plane.shape[1] >= 2:
            gy, gx = np.gradient(plane)
            grad = np.sqrt(gx * gx + gy * gy)[mask]
        else:
            grad = np.zeros(area, dtype=np.float64)
        lap = _laplacian(plane)[mask]
        values[pos:pos + 4] = (
            float(grad.mean()),
            float(grad.std()),
            _entropy5(plane[mask]),
            float((lap * lap).mean()),
        )
        pos += 4
    return values


# ---------------------------------------------------------------------------
# feature CSV format: image_id, object_index, box, optional label, features

_CSV_PREFIX = ("image_id", "object_index", "xmin", "ymin", "xmax", "ymax", "label")


def write_features_csv(rows) -> str:
    """Render feature rows to CSV text.

    Each row is (image_id, object_index, BoundingBox, label or None,
    feature vector).  Floats use repr formatting so values round-trip.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_PREFIX + FEATURE_NAMES)
    for image_id, object_index, box, label, vector in rows:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have {N_FEATURES} values, got {vector.shape}")
        writer.writerow(
            [image_id, object_index] + [repr(float(v)) for v in box.as_tuple()]
            + [label if label is not None else ""]
            + [repr(float(v)) for v in vector]
        )
    return buffer.getvalue()


def read_features_csv(text: str):
    """Parse feature CSV text into (image_id, object_index, box, label, vector) rows."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header[:7]) != _CSV_PREFIX:
        raise ValueError("not a feature CSV: unexpected header")
    names = tuple(header[7:])
    if names != FEATURE_NAMES:
        raise ValueError("feature CSV column names do not match this library's feature set")
    rows = []
    for line in reader:
        if not line:
            continue
        image_id, object_index = line[0], int(line[1])
        box = BoundingBox(*(float(v) for v in line[2:6]))
        label = line[6] if line[6] else None
        vector = np.array([float(v) for v in line[7:]], dtype=np.float64)
        if vector.shape != (N_FEATURES,):
            raise ValueError(f"row for image {image_id!r}: wrong feature count")
        rows.append((image_id, object_index, box, label, vector))
    return rows
