"""Two-stage classification flow and the segmentation + forest baseline."""

import json

import numpy as np
import pytest
from conftest import synth_scene

from smearkit.data import BoundingBox, DatasetFormatError, Detection
from smearkit.forest import ForestParams, train_forest
from smearkit.features import extract_features
from smearkit.pipeline import (
    BaselineParams,
    NON_RBC_CLASSES,
    StageOneDetection,
    filter_by_score,
    parse_stage_one,
    run_baseline,
    train_baseline,
    two_stage_classify,
    training_examples,
)


class TestFilterByScore:
    def test_boundary_is_inclusive(self):
        dets = [StageOneDetection(BoundingBox(0, 0, 5, 5), "other", s)
                for s in (0.9, 0.65, 0.64)]
        kept = filter_by_score(dets, 0.65)
        assert [d.score for d in kept] == [0.9, 0.65]

    def test_zero_threshold_is_identity(self):
        dets = [StageOneDetection(BoundingBox(0, 0, 5, 5), "rbc", s)
                for s in (0.1, 0.5)]
        assert filter_by_score(dets, 0.0) == dets

    def test_threshold_above_one_rejected(self):
        with pytest.raises(ValueError):
            filter_by_score([], 1.0 + 1e-9)

    def test_order_preserved(self):
        dets = [StageOneDetection(BoundingBox(i, 0, i + 5, 5), "other", 0.7 + 0.01 * i)
                for i in range(5)]
        assert filter_by_score(dets, 0.7) == dets


class TestStageOneParsing:
    def test_parse(self):
        payload = [{"id": "a", "width": 100, "height": 100, "path": "a.png",
                    "objects": [{"bbox": [0, 0, 10, 10], "label": "other", "score": 0.8},
                                {"bbox": [20, 20, 30, 30], "label": "rbc", "score": 0.9}]}]
        records = parse_stage_one(json.dumps(payload))
        assert records[0].detections[0].label == "other"

    def test_fine_label_rejected(self):
        payload = [{"id": "a", "width": 100, "height": 100,
                    "objects": [{"bbox": [0, 0, 10, 10], "label": "ring", "score": 0.8}]}]
        with pytest.raises(DatasetFormatError, match="rbc"):
            parse_stage_one(json.dumps(payload))


def train_archetype_classifier(seeds=(500, 501, 502), n_trees=60):
    """Train a non-rbc classifier on annotated boxes of synthetic scenes."""
    features, labels = [], []
    for seed in seeds:
        record, image = synth_scene(f"train{seed}", 256, 256,
                                    list(NON_RBC_CLASSES) * 2, seed=seed)
        for obj in record.objects:
            features.append(extract_features(image, obj.box))
            labels.append(obj.label)
    return train_forest(np.vstack(features), labels,
                        ForestParams(n_trees=n_trees, seed=0),
                        classes=NON_RBC_CLASSES)


class TestTwoStage:
    def test_rbc_pass_through(self):
        record, image = synth_scene("s", 256, 256, ["rbc", "rbc", "rbc"], seed=7)
        model = train_archetype_classifier()
        stage1 = [StageOneDetection(o.box, "rbc", 0.8) for o in record.objects]
        out = two_stage_classify(stage1, image, model)
        assert [d.label for d in out] == ["rbc", "rbc", "rbc"]
        assert [d.score for d in out] == [0.8, 0.8, 0.8]
        assert [d.box for d in out] == [s.box for s in stage1]

    def test_other_cells_recover_their_class(self):
        model = train_archetype_classifier()
        record, image = synth_scene("probe", 256, 256, list(NON_RBC_CLASSES), seed=900)
        stage1 = [StageOneDetection(o.box, "other", 0.9) for o in record.objects]
        out = two_stage_classify(stage1, image, model)
        correct = sum(1 for d, o in zip(out, record.objects) if d.label == o.label)
        assert correct >= len(record.objects) - 1
        for d, s in zip(out, stage1):
            assert d.box == s.box
            assert 0.0 <= d.score <= s.score    # stage scores multiply

    def test_empty_input(self):
        model = train_archetype_classifier()
        image = np.full((64, 64, 3), 240, dtype=np.uint8)
        assert two_stage_classify([], image, model) == []

    def test_box_outside_image_rejected(self):
        model = train_archetype_classifier()
        image = np.full((64, 64, 3), 240, dtype=np.uint8)
        bad = [StageOneDetection(BoundingBox(0, 0, 100, 100), "other", 0.9)]
        with pytest.raises(ValueError, match="outside image bounds"):
            two_stage_classify(bad, image, model)


class TestBaseline:
    def make_training_scenes(self, n=4):
        scenes = []
        for i in range(n):
            labels = ["rbc", "rbc", "ring", "trophozoite", "schizont", "gametocyte",
                      "leukocyte"]
            scenes.append(synth_scene(f"t{i}", 300, 300, labels, seed=700 + i))
        return scenes

    def test_training_examples_use_matched_labels(self):
        record, image = synth_scene("x", 256, 256, ["rbc", "ring", "schizont"], seed=7)
        pairs = training_examples(record, image, BaselineParams(min_area=50))
        labels = sorted(label for _, label in pairs)
        assert labels == ["rbc", "ring", "schizont"]

    def test_difficult_cells_skipped(self):
        record, image = synth_scene("x", 256, 256, ["rbc", "ring"], seed=8, difficult=(1,))
        params = BaselineParams(min_area=50)
        assert sorted(l for _, l in training_examples(record, image, params)) == ["rbc"]
        params_incl = BaselineParams(min_area=50, include_difficult=True)
        assert sorted(l for _, l in training_examples(record, image, params_incl)) == ["rbc", "ring"]

    def test_end_to_end_on_archetypes(self):
        params = BaselineParams(min_area=50, forest=ForestParams(n_trees=80, seed=1))
        model = train_baseline(self.make_training_scenes(), params)
        record, image = synth_scene("probe", 300, 300,
                                    ["rbc", "ring", "trophozoite", "schizont", "gametocyte"],
                                    seed=910)
        detections = run_baseline(image, model, min_area=50)
        assert len(detections) == 5
        by_position = {}
        for d in detections:
            assert isinstance(d, Detection)
            assert 0.0 <= d.score <= 1.0
            by_position[round(d.box.xmin, -1), round(d.box.ymin, -1)] = d.label
        correct = sum(1 for o in record.objects
                      if by_position.get((round(o.box.xmin, -1), round(o.box.ymin, -1)))
                      == o.label)
        assert correct >= 4

    def test_blank_image_yields_nothing(self):
        params = BaselineParams(min_area=50, forest=ForestParams(n_trees=10, seed=1))
        model = train_baseline(self.make_training_scenes(2), params)
        blank = np.full((128, 128, 3), 240, dtype=np.uint8)
        with pytest.warns(UserWarning):
            assert run_baseline(blank, model, min_area=50) == []

    def test_merged_cells_undercount(self):
        params = BaselineParams(min_area=50, forest=ForestParams(n_trees=10, seed=1))
        model = train_baseline(self.make_training_scenes(2), params)
        # two overlapping dark disks segment as one object
        image = np.full((128, 128, 3), 240, dtype=np.uint8)
        yy, xx = np.mgrid[0:128, 0:128]
        for cx in (50, 72):
            image[(xx - cx) ** 2 + (yy - 60) ** 2 <= 14 ** 2] = (70, 95, 170)
        detections = run_baseline(image, model, min_area=50)
        assert len(detections) == 1   # fewer detections than true cells
