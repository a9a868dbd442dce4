"""Training-crop generation with class balancing, plus per-cell augmentation.

Crops are square windows sampled from a full field of view until the cells
they contain add up to a multiple of the cells in the image (or a crop cap
is reached).  Balancing then drops crops that show only red blood cells and
emits the four right-angle orientations of every crop containing a rarer
class, which multiplies rare-cell counts by four.

A cell belongs to a crop when its box center falls inside the window
(half-open on the high edges); its box is then clipped to the window.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from smearkit.data import BoundingBox, GroundTruthObject, ImageRecord

ORIENTATIONS = (0, 90, 180, 270)


@dataclass(frozen=True)
class Crop:
    """A square window into a source image, with objects in crop-local coordinates.

    ``orientation`` is the clockwise rotation (degrees) applied to the
    window contents; object boxes are stored already rotated to match.
    """

    image_id: str
    x: int
    y: int
    size: int
    objects: tuple[GroundTruthObject, ...] = ()
    orientation: int = 0

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation {self.orientation} not in {ORIENTATIONS}")
        object.__setattr__(self, "objects", tuple(self.objects))
        for index, obj in enumerate(self.objects):
            box = obj.box
            if box.xmin < 0 or box.ymin < 0 or box.xmax > self.size or box.ymax > self.size:
                raise ValueError(f"crop object {index}: box {box.as_tuple()} outside [0, {self.size}]")


def rotate_box(box: BoundingBox, size: float, quarter_turns: int) -> BoundingBox:
    """Rotate a box clockwise by 90-degree steps inside a square of side ``size``.

    One step maps a corner (x, y) to (size - y, x); the box is the min/max
    envelope of its mapped corners.  Steps are applied sequentially so the
    arithmetic matches corner-by-corner rotation bit for bit.
    """
    xmin, ymin, xmax, ymax = box.as_tuple()
    for _ in range(quarter_turns % 4):
        xmin, ymin, xmax, ymax = size - ymax, xmin, size - ymin, xmax
    return BoundingBox(xmin, ymin, xmax, ymax)


def rotate_crop(crop: Crop, quarter_turns: int) -> Crop:
    """Return a copy of the crop rotated clockwise by ``quarter_turns`` * 90 degrees."""
    turns = quarter_turns % 4
    objects = tuple(
        replace(obj, box=rotate_box(obj.box, crop.size, turns)) for obj in crop.objects
    )
    return replace(crop, objects=objects, orientation=(crop.orientation + 90 * turns) % 360)


def _crop_window(record: ImageRecord, x: int, y: int, size: int) -> Crop:
    contained = []
    for obj in record.objects:
        cx, cy = obj.box.center
        if x <= cx < x + size and y <= cy < y + size:
            clipped = BoundingBox(
                max(obj.box.xmin - x, 0.0),
                max(obj.box.ymin - y, 0.0),
                min(obj.box.xmax - x, float(size)),
                min(obj.box.ymax - y, float(size)),
            )
            contained.append(replace(obj, box=clipped))
    return Crop(image_id=record.id, x=x, y=y, size=size, objects=tuple(contained))


def generate_crops(record: ImageRecord, size: int = 448, multiplier: float = 2.0,
                   max_crops: int = 100, seed: int = 0) -> list[Crop]:
    """Sample random crops until the contained-cell total reaches ``multiplier``
    times the image's cell count, or ``max_crops`` crops were taken.

    Origins are drawn uniformly over all positions keeping the window fully
    inside the image.  At least one crop is always emitted.  Deterministic
    for a given seed.
    """
    if record.width < size or record.height < size:
        raise ValueError(
            f"image {record.id!r} ({record.width}x{record.height}) smaller than crop size {size}"
        )
    rng = np.random.default_rng(seed)
    target = multiplier * len(record.objects)
    crops: list[Crop] = []
    contained_total = 0
    while True:
        x = int(rng.integers(0, record.width - size + 1))
        y = int(rng.integers(0, record.height - size + 1))
        crop = _crop_window(record, x, y, size)
        crops.append(crop)
        contained_total += len(crop.objects)
        if contained_total >= target or len(crops) >= max_crops:
            return crops


def has_rare_class(crop: Crop, difficult_counts: bool = True) -> bool:
    """True when the crop contains at least one non-rbc object.

    ``difficult_counts`` controls whether difficult non-rbc objects qualify.
    """
    for obj in crop.objects:
        if obj.label != "rbc" and (difficult_counts or not obj.difficult):
            return True
    return False


def balance_crops(crops, difficult_counts: bool = True) -> list[Crop]:
    """Drop uninformative crops and rotation-augment crops with rare classes.

    Crops whose objects are all rbc (difficult rbc included) are removed, as
    are empty crops, since neither carries signal beyond the dominant class.
    Every crop containing a rarer class is emitted in all four right-angle
    orientations, so each rare cell appears four times.
    """
    out: list[Crop] = []
    for crop in crops:
        if not crop.objects:
            continue
        if all(obj.label == "rbc" for obj in crop.objects):
            continue
        if has_rare_class(crop, difficult_counts=difficult_counts):
            out.extend(rotate_crop(crop, k) for k in range(4))
        else:
            out.append(crop)
    return out


def crop_pixels(image: np.ndarray, crop: Crop) -> np.ndarray:
    """Cut the crop window out of an image array and apply its orientation.

    The clockwise orientation matches :func:`rotate_box`: a pixel at
    (row r, col c) moves to (row c, col size-1-r) per 90-degree step.
    """
    window = image[crop.y:crop.y + crop.size, crop.x:crop.x + crop.size]
    if window.shape[0] != crop.size or window.shape[1] != crop.size:
        raise ValueError(f"crop window {crop.x},{crop.y} exceeds image shape {image.shape}")
    return np.rot90(window, k=-(crop.orientation // 90))


# ---------------------------------------------------------------------------
# per-cell augmentation


@dataclass(frozen=True)
class CellAugmentConfig:
    """Which per-cell transforms to draw from, and how many variants to emit."""

    n_variants: int = 4
    rotate: bool = True
    flip: bool = True
    max_shift: int = 2
    max_channel_shift: int = 10
    scale_low: float = 0.9
    scale_high: float = 1.1

    @classmethod
    def identity(cls, n_variants: int = 1) -> "CellAugmentConfig":
        return cls(n_variants=n_variants, rotate=False, flip=False, max_shift=0,
                   max_channel_shift=0, scale_low=1.0, scale_high=1.0)


@dataclass(frozen=True)
class PatchVariant:
    """An augmented pixel patch plus the names of the transforms applied."""

    pixels: np.ndarray
    ops: tuple[str, ...]


def rotate_patch(patch: np.ndarray, quarter_turns: int) -> np.ndarray:
    return np.rot90(patch, k=-(quarter_turns % 4))


def flip_patch(patch: np.ndarray, horizontal: bool = True) -> np.ndarray:
    return patch[:, ::-1] if horizontal else patch[::-1, :]


def shift_patch(patch: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx, dy) pixels, padding the exposed border by edge replication."""
    h, w = patch.shape[:2]
    if abs(dx) >= w or abs(dy) >= h:
        raise ValueError(f"shift ({dx}, {dy}) larger than patch {w}x{h}")
    ay, ax = abs(dy), abs(dx)
    pad = [(ay, ay), (ax, ax)] + [(0, 0)] * (patch.ndim - 2)
    padded = np.pad(patch, pad, mode="edge")
    return padded[ay - dy:ay - dy + h, ax - dx:ax - dx + w]


def scale_patch(patch: np.ndarray, factor: float) -> np.ndarray:
    """Zoom about the patch center by ``factor``, nearest-neighbor resampling.

    Output keeps the input shape; zooming out replicates the border pixels.
    """
    if factor <= 0:
        raise ValueError(f"scale factor {factor} must be positive")
    h, w = patch.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows = np.clip(np.rint(cy + (np.arange(h) - cy) / factor), 0, h - 1).astype(np.intp)
    cols = np.clip(np.rint(cx + (np.arange(w) - cx) / factor), 0, w - 1).astype(np.intp)
    return patch[np.ix_(rows, cols)]


def shift_channels(patch: np.ndarray, deltas) -> np.ndarray:
    """Add a per-channel constant, clamped to the uint8 range."""
    if patch.ndim != 3:
        raise ValueError("channel shift requires an (H, W, C) patch")
    shifted = patch.astype(np.int16) + np.asarray(deltas, dtype=np.int16)[None, None, :]
    return np.clip(shifted, 0, 255).astype(np.uint8)


def augment_cell(patch: np.ndarray, seed: int, config: CellAugmentConfig) -> list[PatchVariant]:
    """Produce ``config.n_variants`` randomized variants of one cell patch.

    Each variant draws a right-angle rotation, flips, a sub-pixel-free
    translation, a per-channel intensity shift, and a nearest-neighbor
    scale change, per the config, and records which transforms it applied.
    """
    patch = np.asarray(patch)
    if patch.size == 0 or patch.shape[0] == 0 or patch.shape[1] == 0:
        raise ValueError("cannot augment an empty patch")
    rng = np.random.default_rng(seed)
    variants: list[PatchVariant] = []
    for _ in range(config.n_variants):
        pixels = patch
        ops: list[str] = []
        if config.rotate:
            k = int(rng.integers(0, 4))
            if k:
                pixels = rotate_patch(pixels, k)
                ops.append(f"rot90={k}")
        if config.flip:
            if rng.integers(0, 2):
                pixels = flip_patch(pixels, horizontal=True)
                ops.append("flip_h")
            if rng.integers(0, 2):
                pixels = flip_patch(pixels, horizontal=False)
                ops.append("flip_v")
        if config.max_shift > 0:
            dx = int(rng.integers(-config.max_shift, config.max_shift + 1))
            dy = int(rng.integers(-config.max_shift, config.max_shift + 1))
            if dx or dy:
                pixels = shift_patch(pixels, dx, dy)
                ops.append(f"shift={dx},{dy}")
        if config.max_channel_shift > 0 and pixels.ndim == 3:
            deltas = rng.integers(-config.max_channel_shift, config.max_channel_shift + 1,
                                  size=pixels.shape[2])
            if np.any(deltas):
                pixels = shift_channels(pixels, deltas)
                ops.append("channel=" + ",".join(str(int(d)) for d in deltas))
        if config.scale_low < config.scale_high:
            factor = float(rng.uniform(config.scale_low, config.scale_high))
            pixels = scale_patch(pixels, factor)
            ops.append(f"scale={factor:.4f}")
        variants.append(PatchVariant(pixels=np.ascontiguousarray(pixels), ops=tuple(ops)))
    return variants
