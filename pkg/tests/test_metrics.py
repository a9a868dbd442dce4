"""Count tables, confusion matrices, accuracy, per-class F1, agreement."""

import numpy as np
import pytest

from smearkit.data import (
    CLASSES,
    BoundingBox,
    Dataset,
    Detection,
    GroundTruthObject,
    ImageRecord,
)
from smearkit.matching import match_by_best_overlap, match_detections
from smearkit.metrics import (
    CountTable,
    UndefinedMetricError,
    accuracy_excluding,
    annotator_agreement,
    confusion,
    count_objects,
    evaluate_detections,
    per_class_f1,
)

# fixture reproducing a published-style survey table (counts supplied, not
# recomputed; the underlying boxes are not available)
SURVEY_GT = {"rbc": 19604, "trophozoite": 561, "schizont": 28, "ring": 88,
             "gametocyte": 75, "leukocyte": 28, "difficult": 218}


def gt(x0, y0, x1, y1, label="ring", difficult=False):
    return GroundTruthObject(BoundingBox(x0, y0, x1, y1), label, difficult)


def det(x0, y0, x1, y1, label="ring", score=0.9):
    return Detection(BoundingBox(x0, y0, x1, y1), label, score)


def spaced_boxes(n, side=10.0, gap=30.0):
    return [(i * gap, 0.0, i * gap + side, side) for i in range(n)]


class TestCountObjects:
    def test_survey_counts(self):
        objects = []
        for label, count in SURVEY_GT.items():
            for _ in range(count):
                objects.append(gt(0, 0, 1, 1, "ring", True) if label == "difficult"
                               else gt(0, 0, 1, 1, label))
        table = count_objects(objects, "Ground Truth Count")
        assert table.column("Ground Truth Count") == SURVEY_GT

    def test_empty(self):
        table = count_objects([])
        assert all(v == 0 for v in table.column("count").values())

    def test_simple_counting(self):
        table = count_objects([gt(0, 0, 1, 1, "ring"), gt(0, 0, 1, 1, "ring"),
                               gt(2, 2, 3, 3, "ring")])
        assert table.cell("ring", "count") == 3


class TestConfusion:
    def test_perfect_matching_is_diagonal(self):
        boxes = spaced_boxes(6)
        gts = [gt(*b, label=c) for b, c in zip(boxes, CLASSES)]
        dets = [det(*b, label=c) for b, c in zip(boxes, CLASSES)]
        match = match_detections(dets, gts)
        cm = confusion(match, dets, gts)
        for label in CLASSES:
            assert cm.cell(label, label) == 1
        assert cm.total() == 6

    def test_single_mislabel(self):
        gts = [gt(0, 0, 10, 10, "ring")]
        dets = [det(0, 0, 10, 10, "trophozoite")]
        cm = confusion(match_detections(dets, gts), dets, gts)
        assert cm.cell("ring", "trophozoite") == 1
        assert cm.total() == 1

    def test_missed_and_spurious(self):
        boxes = spaced_boxes(3)
        gts = [gt(*b, label="ring") for b in boxes]
        dets = [det(*boxes[0], label="ring"), det(*boxes[1], label="ring"),
                det(200, 200, 210, 210, label="gametocyte")]
        cm = confusion(match_detections(dets, gts), dets, gts)
        assert cm.cell("ring", "ring") == 2
        assert cm.cell("ring", "missed") == 1
        assert cm.cell("spurious", "gametocyte") == 1
        assert cm.total() == 4

    def test_difficult_excluded_entirely(self):
        gts = [gt(0, 0, 10, 10, "ring", difficult=True), gt(40, 0, 50, 10, "ring")]
        dets = [det(0, 0, 10, 10, "ring"), det(40, 0, 50, 10, "ring")]
        cm = confusion(match_detections(dets, gts), dets, gts)
        # mass = non-difficult annotations (1) + unmatched detections (0)
        assert cm.total() == 1
        assert cm.cell("ring", "ring") == 1

    def test_mass_balance_randomized(self):
        rng = np.random.default_rng(20)
        for _ in range(60):
            n_gt = int(rng.integers(0, 10))
            n_det = int(rng.integers(0, 10))
            gts = [gt(float(x), 0, float(x) + 8, 8,
                      CLASSES[int(rng.integers(0, 6))], bool(rng.integers(0, 4) == 0))
                   for x in rng.uniform(0, 300, n_gt)]
            dets = [det(float(x), 0, float(x) + 8, 8,
                        CLASSES[int(rng.integers(0, 6))], float(rng.uniform(0, 1)))
                    for x in rng.uniform(0, 300, n_det)]
            match = match_detections(dets, gts)
            cm = confusion(match, dets, gts)
            matched_to_difficult = sum(1 for d, g, _ in match.pairs if gts[g].difficult)
            non_difficult = sum(1 for g in gts if not g.difficult)
            assert cm.total() == non_difficult + len(match.unmatched_detections)
            assert cm.matrix.min() >= 0
            # cross-check: accuracy equals diagonal over row mass on the
            # non-excluded annotation rows
            rows = [c for c in CLASSES if c != "rbc"]
            diag = sum(cm.cell(c, c) for c in rows)
            row_mass = sum(cm.cell(c, col) for c in rows for col in cm.column_names)
            if row_mass:
                assert accuracy_excluding(match, dets, gts) == pytest.approx(diag / row_mass)


class TestAccuracy:
    def test_all_correct(self):
        boxes = spaced_boxes(3)
        gts = [gt(*b, label="ring") for b in boxes]
        dets = [det(*b, label="ring") for b in boxes]
        assert accuracy_excluding(match_detections(dets, gts), dets, gts) == 1.0

    def test_half_fixture(self):
        # 4 qualifying annotations: 2 correct, 1 mislabeled, 1 missed -> 0.5
        boxes = spaced_boxes(4)
        gts = [gt(*boxes[0], label="ring"), gt(*boxes[1], label="trophozoite"),
               gt(*boxes[2], label="schizont"), gt(*boxes[3], label="gametocyte")]
        dets = [det(*boxes[0], label="ring"), det(*boxes[1], label="trophozoite"),
                det(*boxes[2], label="leukocyte")]
        assert accuracy_excluding(match_detections(dets, gts), dets, gts) == 0.5

    def test_excluded_classes_ignored(self):
        boxes = spaced_boxes(2)
        gts = [gt(*boxes[0], label="rbc"), gt(*boxes[1], label="ring")]
        dets = [det(*boxes[1], label="ring")]
        assert accuracy_excluding(match_detections(dets, gts), dets, gts) == 1.0

    def test_undefined_when_no_denominator(self):
        gts = [gt(0, 0, 5, 5, "rbc"), gt(10, 10, 15, 15, "ring", difficult=True)]
        with pytest.raises(UndefinedMetricError):
            accuracy_excluding(match_detections([], gts), [], gts)


class TestPerClassF1:
    def test_two_rings_one_found(self):
        boxes = spaced_boxes(2)
        gts = [gt(*b, label="ring") for b in boxes]
        dets = [det(*boxes[0], label="ring")]
        scores = per_class_f1(match_detections(dets, gts), dets, gts)
        ring = scores["ring"]
        assert ring.precision == 1.0
        assert ring.recall == 0.5
        assert ring.f1 == pytest.approx(2 / 3)

    def test_identical_sets(self):
        boxes = spaced_boxes(4)
        labels = ["ring", "ring", "trophozoite", "leukocyte"]
        gts = [gt(*b, label=c) for b, c in zip(boxes, labels)]
        dets = [det(*b, label=c) for b, c in zip(boxes, labels)]
        scores = per_class_f1(match_detections(dets, gts), dets, gts)
        for label in set(labels):
            assert scores[label].f1 == 1.0

    def test_absent_class_not_applicable(self):
        gts = [gt(0, 0, 10, 10, "ring")]
        dets = [det(0, 0, 10, 10, "ring")]
        scores = per_class_f1(match_detections(dets, gts), dets, gts)
        assert scores["schizont"] is None

    def test_label_disagreement(self):
        gts = [gt(0, 0, 10, 10, "ring")]
        dets = [det(0, 0, 10, 10, "gametocyte")]
        match = match_detections(dets, gts)
        assert len(match.pairs) == 1          # localized, labels disagree
        scores = per_class_f1(match, dets, gts)
        assert scores["ring"].f1 == 0.0
        assert scores["gametocyte"].f1 == 0.0

    def test_symmetry_when_sides_swap(self):
        rng = np.random.default_rng(30)
        for _ in range(30):
            n_a = int(rng.integers(1, 8))
            n_b = int(rng.integers(1, 8))
            a = [gt(float(x), 0, float(x) + 9, 9, CLASSES[int(rng.integers(0, 6))])
                 for x in rng.uniform(0, 200, n_a)]
            b = [gt(float(x), 0, float(x) + 9, 9, CLASSES[int(rng.integers(0, 6))])
                 for x in rng.uniform(0, 200, n_b)]
            forward = per_class_f1(match_by_best_overlap([o.box for o in b], a), b, a)
            backward = per_class_f1(match_by_best_overlap([o.box for o in a], b), a, b)
            for label in CLASSES:
                f_fwd = forward[label].f1 if forward[label] else None
                f_bwd = backward[label].f1 if backward[label] else None
                assert f_fwd == pytest.approx(f_bwd) if f_fwd is not None else f_bwd is None


def one_image_dataset(objects, image_id="im0", size=400):
    return Dataset(records=(ImageRecord(id=image_id, width=size, height=size,
                                        path="", objects=tuple(objects)),))


class TestAgreement:
    def test_identical_annotations(self):
        boxes = spaced_boxes(5)
        objs = [gt(*b, label=c) for b, c in zip(boxes, ["ring", "ring", "trophozoite",
                                                        "leukocyte", "schizont"])]
        result = annotator_agreement(one_image_dataset(objs), one_image_dataset(objs))
        for label in ("ring", "trophozoite", "leukocyte", "schizont"):
            assert result.scores[label].f1 == 1.0
        assert result.table.cell("ring", "Annotator 1 Count") == 2
        assert result.table.cell("ring", "Annotator 2 Count") == 2

    def test_label_disagreement_recorded(self):
        a = one_image_dataset([gt(0, 0, 10, 10, "ring")])
        b = one_image_dataset([gt(0, 0, 10, 10, "gametocyte")])
        result = annotator_agreement(a, b)
        assert result.scores["ring"].f1 == 0.0
        assert result.scores["gametocyte"].f1 == 0.0
        assert result.scores["ring"].fn == 1
        assert result.scores["gametocyte"].fp == 1

    def test_difficult_counted_but_not_scored(self):
        boxes = spaced_boxes(2)
        a = one_image_dataset([gt(*boxes[0], label="ring", difficult=True),
                               gt(*boxes[1], label="ring")])
        b = one_image_dataset([gt(*boxes[0], label="ring"), gt(*boxes[1], label="ring")])
        result = annotator_agreement(a, b)
        assert result.table.cell("difficult", "Annotator 1 Count") == 1
        # the difficult object and its partner are ignored by the scores
        assert result.scores["ring"].tp == 1
        assert result.scores["ring"].fp == 0

    def test_mismatched_ids_rejected(self):
        a = one_image_dataset([gt(0, 0, 5, 5)], image_id="x")
        b = one_image_dataset([gt(0, 0, 5, 5)], image_id="y")
        with pytest.raises(ValueError, match="image id sets differ"):
            annotator_agreement(a, b)


class TestEvaluateDetections:
    def test_aggregates_across_images(self):
        boxes = spaced_boxes(2)
        records = []
        dets_by_image = {}
        for i in range(3):
            records.append(ImageRecord(
                id=f"im{i}", width=400, height=400, path="",
                objects=(gt(*boxes[0], label="ring"), gt(*boxes[1], label="trophozoite"))))
            dets_by_image[f"im{i}"] = [det(*boxes[0], label="ring")]
        result = evaluate_detections(Dataset(records=tuple(records)), dets_by_image)
        assert result.n_images == 3
        assert result.n_matched == 3
        assert result.n_missed == 3
        assert result.accuracy == pytest.approx(0.5)
        assert result.scores["ring"].f1 == 1.0
        assert result.counts.cell("ring", "Model Count") == 3
        assert result.counts.cell("trophozoite", "Ground Truth Count") == 3

    def test_unknown_image_id_rejected(self):
        dataset = one_image_dataset([gt(0, 0, 5, 5)])
        with pytest.raises(ValueError, match="unknown image ids"):
            evaluate_detections(dataset, {"nope": []})


class TestCountTable:
    def test_combine_and_cell(self):
        left = count_objects([gt(0, 0, 1, 1, "ring")], "A")
        right = count_objects([gt(0, 0, 1, 1, "rbc")], "B")
        both = CountTable.combine([left, right])
        assert both.columns == ("A", "B")
        assert both.cell("ring", "A") == 1
        assert both.cell("ring", "B") == 0

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            CountTable(rows=("a",), columns=("x",), values=((1, 2),))
