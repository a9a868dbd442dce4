"""Annotation and detection records for stained blood-smear images.

File formats
------------
Annotation files are JSON, either a top-level array or one JSON object per
line, one entry per image:

    {"id": "im001", "width": 1600, "height": 1200, "path": "im001.png",
     "objects": [{"bbox": [x0, y0, x1, y1], "label": "ring", "difficult": false}]}

Detection files share the same shape with a ``"score"`` per object and no
``"difficult"`` flag.  Labels are the six lowercase class names in
:data:`CLASSES`, compared bit-exact.  The files carry records only; split
tags are assigned programmatically and are not serialized.

All types are immutable after construction and every function here is pure,
so everything is safe to use from concurrent code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

CLASSES = ("rbc", "leukocyte", "gametocyte", "ring", "trophozoite", "schizont")
DIFFICULT = "difficult"
SPLITS = ("train", "val", "test", "unsplit")


class DatasetFormatError(ValueError):
    """An annotation or detection file violates the documented format."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates, strictly non-degenerate."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        for name in ("xmin", "ymin", "xmax", "ymax"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"non-finite box coordinate {name}={value}")
            object.__setattr__(self, name, float(value))
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(
                f"degenerate box {self.as_tuple()}: xmin < xmax and ymin < ymax required"
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)


def _check_label(label: str) -> str:
    if label not in CLASSES:
        raise ValueError(f"unknown class name {label!r}; expected one of {CLASSES}")
    return label


@dataclass(frozen=True)
class GroundTruthObject:
    """One expert-annotated cell: a box, a class label, and a difficulty flag.

    Difficult objects keep their label but are excluded from training and
    from accuracy denominators by the consumers of this type.
    """

    box: BoundingBox
    label: str
    difficult: bool = False

    def __post_init__(self):
        _check_label(self.label)
        object.__setattr__(self, "difficult", bool(self.difficult))


@dataclass(frozen=True)
class Detection:
    """A predicted cell: box, class label, and confidence score in [0, 1]."""

    box: BoundingBox
    label: str
    score: float

    def __post_init__(self):
        _check_label(self.label)
        object.__setattr__(self, "score", float(self.score))
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


def _check_box_in_bounds(box: BoundingBox, width: int, height: int, context: str):
    if box.xmin < 0 or box.ymin < 0 or box.xmax > width or box.ymax > height:
        raise ValueError(
            f"{context}: box {box.as_tuple()} outside image bounds {width}x{height}"
        )


@dataclass(frozen=True)
class ImageRecord:
    """One field-of-view image with its annotated objects (pixels stay on disk)."""

    id: str
    width: int
    height: int
    path: str
    objects: tuple[GroundTruthObject, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id!r}: non-positive size {self.width}x{self.height}")
        object.__setattr__(self, "objects", tuple(self.objects))
        for index, obj in enumerate(self.objects):
            _check_box_in_bounds(obj.box, self.width, self.height, f"image {self.id!r} object {index}")


@dataclass(frozen=True)
class DetectionRecord:
    """Detections for one image, as read from or written to a detection file."""

    id: str
    width: int
    height: int
    path: str
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id!r}: non-positive size {self.width}x{self.height}")
        object.__setattr__(self, "detections", tuple(self.detections))
        for index, det in enumerate(self.detections):
            _check_box_in_bounds(det.box, self.width, self.height, f"image {self.id!r} detection {index}")


@dataclass(frozen=True)
class Dataset:
    """A collection of image records plus a split tag."""

    records: tuple[ImageRecord, ...]
    split: str = "unsplit"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.split not in SPLITS:
            raise ValueError(f"split {self.split!r} not one of {SPLITS}")
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise ValueError(f"duplicate image id {record.id!r}")
            seen.add(record.id)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, ImageRecord]:
        return {record.id: record for record in self.records}


# ---------------------------------------------------------------------------
# parsing / serialization


def _load_entries(data) -> list:
    try:
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"not a UTF-8 text file: {exc}") from exc
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            entries = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"malformed JSON: {exc}") from exc
        if not isinstance(entries, list):
            raise DatasetFormatError("top-level JSON value must be an array of image entries")
        return entries
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entries.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"malformed JSON on line {lineno}: {exc}") from exc
    return entries


def _entry_field(entry: dict, key: str, image_id: str):
    if key not in entry:
        raise DatasetFormatError(f"image {image_id!r}: missing field {key!r}")
    return entry[key]


def _parse_box(raw, context: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise DatasetFormatError(f"{context}: bbox must be [xmin, ymin, xmax, ymax]")
    try:
        return BoundingBox(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{context}: {exc}") from exc


def _parse_entry(entry, seen_ids: set, with_scores: bool):
    if not isinstance(entry, dict):
        raise DatasetFormatError(f"image entry is not a JSON object: {entry!r}")
    image_id = entry.get("id")
    if not isinstance(image_id, str) or not image_id:
        raise DatasetFormatError(f"image entry with missing or non-string id: {entry!r}")
    if image_id in seen_ids:
        raise DatasetFormatError(f"duplicate image id {image_id!r}")
    seen_ids.add(image_id)
    width = _entry_field(entry, "width", image_id)
    height = _entry_field(entry, "height", image_id)
    path = entry.get("path", "")
    objects = entry.get("objects", [])
    if not isinstance(objects, list):
        raise DatasetFormatError(f"image {image_id!r}: objects must be a list")
    parsed = []
    for index, raw in enumerate(objects):
        context = f"image {image_id!r} object {index}"
        if not isinstance(raw, dict):
            raise DatasetFormatError(f"{context}: not a JSON object")
        box = _parse_box(raw.get("bbox"), context)
        label = raw.get("label")
        if label not in CLASSES:
            raise DatasetFormatError(f"{context}: unknown class name {label!r}")
        try:
            if with_scores:
                if "score" not in raw:
                    raise DatasetFormatError(f"{context}: missing score")
                parsed.append(Detection(box=box, label=label, score=raw["score"]))
            else:
                parsed.append(GroundTruthObject(box=box, label=label, difficult=raw.get("difficult", False)))
        except ValueError as exc:
            raise DatasetFormatError(f"{context}: {exc}") from exc
    try:
        if with_scores:
            return DetectionRecord(id=image_id, width=int(width), height=int(height), path=str(path), detections=tuple(parsed))
        return ImageRecord(id=image_id, width=int(width), height=int(height), path=str(path), objects=tuple(parsed))
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"image {image_id!r}: {exc}") from exc


def parse_dataset(data) -> Dataset:
    """Parse annotation file content (bytes or str) into a Dataset.

    Raises DatasetFormatError naming the offending image id and object index
    for malformed syntax, unknown class names, out-of-bounds boxes, and
    duplicate image ids.
    """
    seen: set = set()
    records = [_parse_entry(entry, seen, with_scores=False) for entry in _load_entries(data)]
    return Dataset(records=tuple(records))


def serialize_dataset(dataset: Dataset) -> bytes:
    """Serialize a Dataset to annotation-file bytes; parse_dataset inverts this."""
    entries = []
    for record in dataset.records:
        entries.append({
            "id": record.id,
            "width": record.width,
            "height": record.height,
            "path": record.path,
            "objects": [
                {"bbox": list(obj.box.as_tuple()), "label": obj.label, "difficult": obj.difficult}
                for obj in record.objects
            ],
        })
    return json.dumps(entries, indent=2).encode("utf-8")


def parse_detections(data) -> list[DetectionRecord]:
    """Parse detection file content into per-image detection records."""
    seen: set = set()
    return [_parse_entry(entry, seen, with_scores=True) for entry in _load_entries(data)]


def serialize_detections(records) -> bytes:
    """Serialize detection records to detection-file bytes."""
    entries = []
    for record in records:
        entries.append({
            "id": record.id,
            "width": record.width,
            "height": record.height,
            "path": record.path,
            "objects": [
                {"bbox": list(det.box.as_tuple()), "label": det.label, "score": det.score}
                for det in record.detections
            ],
        })
    return json.dumps(entries, indent=2).encode("utf-8")


# ---------------------------------------------------------------------------
# dataset-level statistics and splitting


@dataclass(frozen=True)
class ClassDistribution:
    """Per-class object counts and fractions; difficult objects form their own row."""

    counts: dict
    fractions: dict
    total: int


def class_distribution(dataset: Dataset) -> ClassDistribution:
    """Count objects per class; difficult objects are counted separately.

    Fractions are counts / total over the six classes plus ``difficult``.
    An empty dataset reports zero counts and all-zero fractions.
    """
    keys = CLASSES + (DIFFICULT,)
    counts = {key: 0 for key in keys}
    for record in dataset.records:
        for obj in record.objects:
            counts[DIFFICULT if obj.difficult else obj.label] += 1
    total = sum(counts.values())
    if total == 0:
        fractions = {key: 0.0 for key in keys}
    else:
        fractions = {key: counts[key] / total for key in keys}
    return ClassDistribution(counts=counts, fractions=fractions, total=total)


def split_dataset(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random image-level train/val partition, deterministic given the seed.

    The split is by image, never by object, so downstream crops from one
    image cannot leak across the boundary.  The validation size is
    ``floor(val_fraction * n + 0.5)`` and both sides preserve the input
    record order.
    """
    if not (0.0 < val_fraction < 1.0):
        raise ValueError(f"val_fraction {val_fraction} outside (0, 1)")
    n = len(dataset.records)
    if n < 2:
        raise ValueError(f"cannot split a dataset with {n} record(s)")
    n_val = int(math.floor(val_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    val_indices = set(order[:n_val].tolist())
    train_records = tuple(r for i, r in enumerate(dataset.records) if i not in val_indices)
    val_records = tuple(r for i, r in enumerate(dataset.records) if i in val_indices)
    return (
        replace(dataset, records=train_records, split="train"),
        replace(dataset, records=val_records, split="val"),
    )
