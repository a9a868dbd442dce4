"""Box overlap geometry and greedy one-to-one matching of predictions to annotations.

Matching ignores class labels; label agreement is judged afterwards by the
metrics module so that misclassified-but-localized cells still count as
matched.  The overlap threshold is strict: a pair is accepted only when its
IoU exceeds the threshold.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from smearkit import _kernels
from smearkit.data import BoundingBox


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area of two boxes, in [0, 1]."""
    ix = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    iy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class MatchResult:
    """One-to-one pairing of detections and ground truth at an IoU threshold.

    ``pairs`` holds (detection index, ground-truth index, iou) triples; the
    unmatched index lists are the false positives / false negatives.  Every
    input index appears exactly once across the three fields.
    """

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_detections: tuple[int, ...]
    unmatched_ground_truth: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "pairs": [[d, g, v] for d, g, v in self.pairs],
            "unmatched_detections": list(self.unmatched_detections),
            "unmatched_ground_truth": list(self.unmatched_ground_truth),
        }


def _box_array(boxes) -> np.ndarray:
    out = np.empty((len(boxes), 4), dtype=np.float64)
    for i, box in enumerate(boxes):
        out[i, 0] = box.xmin
        out[i, 1] = box.ymin
        out[i, 2] = box.xmax
        out[i, 3] = box.ymax
    return out


def _check_threshold(threshold: float):
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold {threshold} outside (0, 1)")


def _result(pairs, n_det: int, n_gt: int) -> MatchResult:
    matched_d = {d for d, _, _ in pairs}
    matched_g = {g for _, g, _ in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_detections=tuple(i for i in range(n_det) if i not in matched_d),
        unmatched_ground_truth=tuple(j for j in range(n_gt) if j not in matched_g),
    )


def match_by_best_overlap(boxes, gts, threshold: float = 0.4) -> MatchResult:
    """Greedy IoU-descending matching of unscored boxes to ground truth.

    All candidate pairs with iou strictly above ``threshold`` are visited in
    descending IoU order (ties: lower box index, then lower ground-truth
    index) and accepted when both sides are still free.
    """
    _check_threshold(threshold)
    mat = _kernels.iou_matrix(_box_array(boxes), _box_array([g.box for g in gts]))
    di, gi = np.nonzero(mat > threshold)
    candidates = sorted(zip(di.tolist(), gi.tolist()), key=lambda c: (-mat[c[0], c[1]], c[0], c[1]))
    taken_d: set = set()
    taken_g: set = set()
    pairs = []
    for d, g in candidates:
        if d in taken_d or g in taken_g:
            continue
        taken_d.add(d)
        taken_g.add(g)
        pairs.append((d, g, float(mat[d, g])))
    pairs.sort(key=lambda p: p[0])
    return _result(pairs, len(boxes), len(gts))


def match_detections(dets, gts, threshold: float = 0.4) -> MatchResult:
    """Greedy score-descending matching of scored detections to ground truth.

    Detections are processed by descending score; score ties go to the
    detection with the higher best-available IoU, then to the lower input
    index.  Each detection claims the free ground-truth object of highest
    IoU, provided that IoU strictly exceeds ``threshold`` (equal IoUs
    resolve to the lower ground-truth index).
    """
    _check_threshold(threshold)
    mat = _kernels.iou_matrix(_box_array([d.box for d in dets]), _box_array([g.box for g in gts]))
    best_static = mat.max(axis=1) if len(gts) else np.zeros(len(dets))
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, -best_static[i], i))
    free = np.ones(len(gts), dtype=bool)
    pairs = []
    for d in order:
        if not free.any():
            break
        row = np.where(free, mat[d], -1.0)
        g = int(np.argmax(row))
        if row[g] > threshold:
            free[g] = False
            pairs.append((d, g, float(mat[d, g])))
    pairs.sort(key=lambda p: p[0])
    return _result(pairs, len(dets), len(gts))
