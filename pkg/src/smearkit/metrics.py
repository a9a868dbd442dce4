"""Evaluation metrics over matched detections and expert annotations.

Conventions, fixed here so numbers are comparable across runs:

* Difficult annotations are excluded everywhere: they never enter accuracy
  denominators, F1 counts, or the confusion matrix, and a detection matched
  to a difficult annotation is ignored rather than penalized.  Count tables
  are the one exception; they report difficult objects in their own row.
* Accuracy counts a ground-truth object as correct only when it is matched
  to a detection carrying the same label; unmatched objects count against.
  Unmatched detections do not enter the accuracy denominator (they remain
  visible as the confusion matrix's spurious row).
* Per-class F1 treats matched pairs with agreeing labels as true positives;
  every other detection of the class is a false positive and every other
  non-difficult annotation of the class a false negative.  F1 is 0 when
  precision + recall is 0 and not applicable when the class is absent from
  both sides.

All functions are pure and order-invariant over their input object lists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from smearkit.data import CLASSES, DIFFICULT, Dataset
from smearkit.matching import MatchResult, match_by_best_overlap

MISSED = "missed"
SPURIOUS = "spurious"


class UndefinedMetricError(ValueError):
    """A metric's denominator is empty, so no value exists (not even 0)."""


@dataclass(frozen=True)
class CountTable:
    """Per-class counts for one or more sources, in a fixed row order.

    ``columns`` names the sources; ``values[row][col]`` are the cells.
    Cells are usually ints but may be strings when a table is rendered from
    supplied values (e.g. an F1 column with a blank entry).
    """

    rows: tuple[str, ...]
    columns: tuple[str, ...]
    values: tuple[tuple, ...]

    def __post_init__(self):
        if len(self.values) != len(self.rows):
            raise ValueError("one value row per table row required")
        for row in self.values:
            if len(row) != len(self.columns):
                raise ValueError("one cell per column required")

    def cell(self, row: str, column: str):
        return self.values[self.rows.index(row)][self.columns.index(column)]

    def column(self, column: str) -> dict:
        j = self.columns.index(column)
        return {row: self.values[i][j] for i, row in enumerate(self.rows)}

    @classmethod
    def combine(cls, tables) -> "CountTable":
        """Join single-source tables side by side; rows must agree."""
        tables = list(tables)
        rows = tables[0].rows
        for table in tables[1:]:
            if table.rows != rows:
                raise ValueError("tables have mismatched rows")
        return cls(
            rows=rows,
            columns=tuple(c for t in tables for c in t.columns),
            values=tuple(
                tuple(v for t in tables for v in t.values[i]) for i in range(len(rows))
            ),
        )


def count_objects(objs, source: str = "count") -> CountTable:
    """Count objects per class into a one-column table.

    Difficult annotations land in the ``difficult`` row instead of their
    class row; detections have no difficult flag, so that row is 0.
    """
    counts = {key: 0 for key in CLASSES + (DIFFICULT,)}
    for obj in objs:
        counts[DIFFICULT if getattr(obj, "difficult", False) else obj.label] += 1
    rows = CLASSES + (DIFFICULT,)
    return CountTable(rows=rows, columns=(source,),
                      values=tuple((counts[row],) for row in rows))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Class-vs-class counts of matched pairs with margins for the unmatched.

    Rows are annotation classes plus ``spurious`` (unmatched detections);
    columns are predicted classes plus ``missed`` (unmatched annotations).
    Difficult annotations and anything matched to them are excluded, so the
    total mass equals the number of non-difficult annotations plus the
    number of unmatched detections.
    """

    classes: tuple[str, ...]
    matrix: np.ndarray     # (len(classes)+1, len(classes)+1) int64

    @property
    def row_names(self) -> tuple[str, ...]:
        return self.classes + (SPURIOUS,)

    @property
    def column_names(self) -> tuple[str, ...]:
        return self.classes + (MISSED,)

    def cell(self, row: str, column: str) -> int:
        return int(self.matrix[self.row_names.index(row), self.column_names.index(column)])

    def total(self) -> int:
        return int(self.matrix.sum())


def confusion(match: MatchResult, dets, gts, classes=CLASSES) -> ConfusionMatrix:
    """Build the confusion matrix for one matched scene."""
    index = {label: i for i, label in enumerate(classes)}
    n = len(classes)
    matrix = np.zeros((n + 1, n + 1), dtype=np.int64)
    ignored_dets = set()
    for d, g, _ in match.pairs:
        if gts[g].difficult:
            ignored_dets.add(d)
            continue
        matrix[index[gts[g].label], index[dets[d].label]] += 1
    for g in match.unmatched_ground_truth:
        if not gts[g].difficult:
            matrix[index[gts[g].label], n] += 1
    for d in match.unmatched_detections:
        if d not in ignored_dets:
            matrix[n, index[dets[d].label]] += 1
    return ConfusionMatrix(classes=tuple(classes), matrix=matrix)


def accuracy_excluding(match: MatchResult, dets, gts, excluded=frozenset({"rbc"})):
    """Fraction of non-excluded, non-difficult annotations matched with the
    correct label; unmatched ones count as incorrect.

    Raises UndefinedMetricError when no annotation qualifies.
    """
    denominator = 0
    numerator = 0
    matched = {g: d for d, g, _ in match.pairs}
    for g, gt in enumerate(gts):
        if gt.difficult or gt.label in excluded:
            continue
        denominator += 1
        d = matched.get(g)
        if d is not None and dets[d].label == gt.label:
            numerator += 1
    if denominator == 0:
        raise UndefinedMetricError("no non-excluded, non-difficult annotations to score")
    return numerator / denominator


@dataclass(frozen=True)
class ClassScore:
    """Precision, recall, and F1 with the counts behind them."""

    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _pair_counts(match: MatchResult, det_labels, det_difficult, gt_labels, gt_difficult,
                 classes) -> dict:
    """tp/fp/fn per class; objects flagged difficult (and their partners) are ignored."""
    counts = {c: [0, 0, 0] for c in classes}
    in_tp_d: set = set()
    in_tp_g: set = set()
    ignored_d: set = set()
    ignored_g: set = set()
    for d, g, _ in match.pairs:
        if gt_difficult[g] or det_difficult[d]:
            ignored_d.add(d)
            ignored_g.add(g)
            continue
        if det_labels[d] == gt_labels[g]:
            counts[det_labels[d]][0] += 1
            in_tp_d.add(d)
            in_tp_g.add(g)
    for d, label in enumerate(det_labels):
        if d not in in_tp_d and d not in ignored_d and not det_difficult[d]:
            counts[label][1] += 1
    for g, label in enumerate(gt_labels):
        if g not in in_tp_g and g not in ignored_g and not gt_difficult[g]:
            counts[label][2] += 1
    return counts


def scores_from_counts(counts: dict) -> dict:
    """ClassScore per class from {class: [tp, fp, fn]}; absent classes map to None."""
    out = {}
    for label, (tp, fp, fn) in counts.items():
        if tp + fp + fn == 0:
            out[label] = None
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[label] = ClassScore(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)
    return out


def f1_counts(match: MatchResult, dets, gts, classes=CLASSES) -> dict:
    """Raw per-class [tp, fp, fn] for one scene (summable across scenes)."""
    return _pair_counts(
        match,
        [d.label for d in dets],
        [getattr(d, "difficult", False) for d in dets],
        [g.label for g in gts],
        [g.difficult for g in gts],
        classes,
    )


def per_class_f1(match: MatchResult, dets, gts, classes=CLASSES) -> dict:
    """Precision / recall / F1 per class for one matched scene."""
    return scores_from_counts(f1_counts(match, dets, gts, classes))


def add_counts(total: dict, part: dict) -> dict:
    for label, (tp, fp, fn) in part.items():
        cell = total.setdefault(label, [0, 0, 0])
        cell[0] += tp
        cell[1] += fp
        cell[2] += fn
    return total


@dataclass(frozen=True, eq=False)
class AgreementResult:
    """Inter-annotator comparison: side-by-side counts and per-class scores."""

    table: CountTable
    scores: dict


def annotator_agreement(ann_a: Dataset, ann_b: Dataset, threshold: float = 0.4) -> AgreementResult:
    """Compare two independent annotation passes over the same images.

    Per image, A's objects are matched to B's as unscored boxes; per-class
    F1 treats A as the reference.  Difficult objects on either side are
    excluded from the scores but reported in the count table.
    """
    a_by_id = ann_a.by_id()
    b_by_id = ann_b.by_id()
    if set(a_by_id) != set(b_by_id):
        only_a = sorted(set(a_by_id) - set(b_by_id))
        only_b = sorted(set(b_by_id) - set(a_by_id))
        raise ValueError(f"image id sets differ (only in A: {only_a}, only in B: {only_b})")
    totals: dict = {}
    for image_id in sorted(a_by_id):
        a_objs = a_by_id[image_id].objects
        b_objs = b_by_id[image_id].objects
        match = match_by_best_overlap([b.box for b in b_objs], a_objs, threshold)
        part = _pair_counts(
            match,
            [b.label for b in b_objs],
            [b.difficult for b in b_objs],
            [a.label for a in a_objs],
            [a.difficult for a in a_objs],
            CLASSES,
        )
        add_counts(totals, part)
    table = CountTable.combine([
        count_objects([o for r in ann_a.records for o in r.objects], "Annotator 1 Count"),
        count_objects([o for r in ann_b.records for o in r.objects], "Annotator 2 Count"),
    ])
    return AgreementResult(table=table, scores=scores_from_counts(totals))


# ---------------------------------------------------------------------------
# whole-run aggregation used by the eval command


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    counts: CountTable
    confusion: ConfusionMatrix
    scores: dict
    accuracy: float | None
    n_images: int
    n_matched: int
    n_spurious: int
    n_missed: int


def evaluate_detections(gt: Dataset, detections_by_image: dict,
                        iou_threshold: float = 0.4) -> EvaluationResult:
    """Aggregate matching-based metrics over a whole dataset.

    ``detections_by_image`` maps image id to its (already score-filtered)
    detections; images without an entry count as having none.  Detection
    ids not present in the ground truth are an error.
    """
    from smearkit.matching import match_detections

    unknown = sorted(set(detections_by_image) - {r.id for r in gt.records})
    if unknown:
        raise ValueError(f"detections reference unknown image ids: {unknown}")
    totals: dict = {}
    matrix = np.zeros((len(CLASSES) + 1, len(CLASSES) + 1), dtype=np.int64)
    accuracy_num = 0
    accuracy_den = 0
    n_matched = n_spurious = n_missed = 0
    all_dets = []
    for record in gt.records:
        dets = list(detections_by_image.get(record.id, []))
        all_dets.extend(dets)
        match = match_detections(dets, record.objects, iou_threshold)
        add_counts(totals, f1_counts(match, dets, record.objects))
        matrix += confusion(match, dets, record.objects).matrix
        matched = {g: d for d, g, _ in match.pairs}
        for g, gt_obj in enumerate(record.objects):
            if gt_obj.difficult or gt_obj.label == "rbc":
                continue
            accuracy_den += 1
            d = matched.get(g)
            if d is not None and dets[d].label == gt_obj.label:
                accuracy_num += 1
        n_matched += len(match.pairs)
        n_spurious += len(match.unmatched_detections)
        n_missed += len(match.unmatched_ground_truth)
    counts = CountTable.combine([
        count_objects(all_dets, "Model Count"),
        count_objects([o for r in gt.records for o in r.objects], "Ground Truth Count"),
    ])
    return EvaluationResult(
        counts=counts,
        confusion=ConfusionMatrix(classes=CLASSES, matrix=matrix),
        scores=scores_from_counts(totals),
        accuracy=(accuracy_num / accuracy_den) if accuracy_den else None,
        n_images=len(gt.records),
        n_matched=n_matched,
        n_spurious=n_spurious,
        n_missed=n_missed,
    )
