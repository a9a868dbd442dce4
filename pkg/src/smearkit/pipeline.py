"""Two-stage evaluation flow and the segmentation + forest baseline detector.

Stage one is any detector that labels boxes as plain red blood cells or
"other"; its output arrives through the stage-one detections file format or
from :func:`run_baseline`.  Stage two re-classifies every "other" box with
a forest trained on the hand-crafted cell features, passing rbc detections
through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from smearkit.data import (
    BoundingBox,
    DatasetFormatError,
    Detection,
    ImageRecord,
    _check_box_in_bounds,
    _entry_field,
    _load_entries,
    _parse_box,
)
from smearkit.features import extract_features
from smearkit.forest import ForestModel, ForestParams, predict, train_forest
from smearkit.matching import match_by_best_overlap
from smearkit.segmentation import segment

STAGE_ONE_LABELS = ("rbc", "other")
NON_RBC_CLASSES = ("leukocyte", "gametocyte", "ring", "trophozoite", "schizont")
DEFAULT_SCORE_THRESHOLD = 0.65


@dataclass(frozen=True)
class StageOneDetection:
    """A coarse detection: box, rbc-or-other label, confidence in [0, 1]."""

    box: BoundingBox
    label: str
    score: float

    def __post_init__(self):
        if self.label not in STAGE_ONE_LABELS:
            raise ValueError(f"stage-one label must be one of {STAGE_ONE_LABELS}, got {self.label!r}")
        object.__setattr__(self, "score", float(self.score))
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class StageOneRecord:
    """Stage-one detections for one image."""

    id: str
    width: int
    height: int
    path: str
    detections: tuple[StageOneDetection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        for index, det in enumerate(self.detections):
            _check_box_in_bounds(det.box, self.width, self.height,
                                 f"image {self.id!r} detection {index}")


def parse_stage_one(data) -> list[StageOneRecord]:
    """Parse a stage-one detections file (detection format, labels rbc/other)."""
    seen: set = set()
    records = []
    for entry in _load_entries(data):
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            raise DatasetFormatError(f"image entry with missing or non-string id: {entry!r}")
        image_id = entry["id"]
        if image_id in seen:
            raise DatasetFormatError(f"duplicate image id {image_id!r}")
        seen.add(image_id)
        dets = []
        for index, raw in enumerate(entry.get("objects", [])):
            context = f"image {image_id!r} detection {index}"
            box = _parse_box(raw.get("bbox"), context)
            try:
                dets.append(StageOneDetection(box=box, label=raw.get("label"),
                                              score=raw.get("score", -1.0)))
            except (TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{context}: {exc}") from exc
        try:
            records.append(StageOneRecord(
                id=image_id,
                width=int(_entry_field(entry, "width", image_id)),
                height=int(_entry_field(entry, "height", image_id)),
                path=str(entry.get("path", "")),
                detections=tuple(dets),
            ))
        except ValueError as exc:
            raise DatasetFormatError(f"image {image_id!r}: {exc}") from exc
    return records


def filter_by_score(dets, threshold: float = DEFAULT_SCORE_THRESHOLD) -> list:
    """Keep detections whose score is at least ``threshold`` (inclusive), in order."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"score threshold {threshold} outside [0, 1]")
    return [det for det in dets if det.score >= threshold]


def two_stage_classify(stage1, image: np.ndarray, classifier: ForestModel) -> list[Detection]:
    """Refine coarse detections into the full class set.

    rbc detections pass through with their score; each "other" detection is
    feature-extracted over its box and classified, and its score becomes
    the stage-one score times the classifier probability.  Boxes are never
    modified.
    """
    height, width = np.asarray(image).shape[:2]
    out: list[Detection] = []
    for index, det in enumerate(stage1):
        _check_box_in_bounds(det.box, width, height, f"stage-one detection {index}")
        if det.label == "rbc":
            out.append(Detection(box=det.box, label="rbc", score=det.score))
            continue
        label, probs = predict(classifier, extract_features(image, det.box))
        out.append(Detection(box=det.box, label=label,
                             score=det.score * float(probs.max())))
    return out


@dataclass(frozen=True)
class BaselineParams:
    """Knobs for the segmentation + forest baseline."""

    min_area: int = 64
    max_area: int | None = None
    iou_threshold: float = 0.4
    include_difficult: bool = False
    forest: ForestParams = ForestParams(n_trees=200)


def training_examples(record: ImageRecord, image: np.ndarray, params: BaselineParams):
    """(features, label) pairs for one image: segment, keep objects whose box
    overlaps an annotation above the IoU threshold, label them from it.

    Mis-segmentations (no sufficient overlap) are dropped, as are matches to
    difficult annotations unless ``include_difficult`` is set.
    """
    objects = segment(image, params.min_area, params.max_area)
    match = match_by_best_overlap([o.box for o in objects], record.objects,
                                  params.iou_threshold)
    pairs = []
    for obj_index, gt_index, _ in match.pairs:
        gt = record.objects[gt_index]
        if gt.difficult and not params.include_difficult:
            continue
        pairs.append((extract_features(image, objects[obj_index]), gt.label))
    return pairs


def train_baseline(samples, params: BaselineParams) -> ForestModel:
    """Train the baseline classifier from (ImageRecord, image array) samples."""
    features = []
    labels = []
    for record, image in samples:
        for vector, label in training_examples(record, image, params):
            features.append(vector)
            labels.append(label)
    if len(features) < 2:
        raise ValueError("fewer than 2 usable training cells; check segmentation parameters")
    return train_forest(np.vstack(features), labels, params.forest)


def run_baseline(image: np.ndarray, model: ForestModel,
                 min_area: int = 64, max_area: int | None = None) -> list[Detection]:
    """Detect cells in one image with the trained baseline.

    Each segmented object becomes a detection whose score is the predicted
    class probability.  Touching cells merge and fragmented stain splits,
    so counts can deviate from truth; the matcher treats those as misses
    and false positives.
    """
    detections = []
    for obj in segment(image, min_area, max_area):
        label, probs = predict(model, extract_features(image, obj))
        detections.append(Detection(box=obj.box, label=label, score=float(probs.max())))
    return detections
