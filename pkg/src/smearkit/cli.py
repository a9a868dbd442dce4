"""Command-line workflows tying the library together.

Subcommands: validate, stats, split, crops, segment, features, train,
classify, match, eval, agree, tsne, report.  Every file-writing command
takes ``--out-dir`` and echoes its effective configuration (minus the
output location) into ``run_config.json`` there, and all randomness flows
from the single ``--seed`` flag, so a run is reproducible byte for byte
from its inputs plus that file.

Exit codes: 0 success, 1 validation or processing failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from smearkit import __version__
from smearkit.crops import balance_crops, crop_pixels, generate_crops
from smearkit.data import (
    Dataset,
    DatasetFormatError,
    DetectionRecord,
    ImageRecord,
    class_distribution,
    parse_dataset,
    parse_detections,
    serialize_dataset,
    serialize_detections,
    split_dataset,
)
from smearkit.features import extract_features, read_features_csv, write_features_csv
from smearkit.forest import (
    ForestParams,
    ModelFormatError,
    load_model,
    save_model,
    train_forest,
)
from smearkit.matching import match_detections
from smearkit.metrics import (
    CountTable,
    UndefinedMetricError,
    annotator_agreement,
    evaluate_detections,
)
from smearkit.pipeline import filter_by_score, parse_stage_one, two_stage_classify
from smearkit.report import (
    count_table_csv,
    count_table_text,
    confusion_csv,
    f1_percent,
    read_count_table_csv,
    scores_to_dict,
    svg_scatter,
)
from smearkit.segmentation import segment
from smearkit.tsne import embed


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _resolve(path: str, images_dir: str | None) -> Path:
    p = Path(path)
    if not p.is_absolute() and images_dir:
        return Path(images_dir) / p
    return p


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(1)[0])


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "out_dir"}
    config = {"command": args.command}
    for key, value in sorted(vars(args).items()):
        if key in skip or key == "command":
            continue
        config[key] = str(value) if isinstance(value, Path) else value
    return config


def _emit(args: argparse.Namespace, files: dict) -> Path:
    """Write output files plus the echoed run configuration."""
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = dict(files)
    payload["run_config.json"] = json.dumps(_config_dict(args), indent=2) + "\n"
    for name, content in payload.items():
        target = out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, bytes):
            target.write_bytes(content)
        else:
            target.write_text(content, encoding="utf-8")
    return out_dir


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


# ---------------------------------------------------------------------------
# command handlers


def cmd_validate(args) -> int:
    if not args.annotations and not args.detections:
        print("error: validate needs --annotations and/or --detections", file=sys.stderr)
        return 2
    if args.annotations:
        dataset = parse_dataset(_read(args.annotations))
        dist = class_distribution(dataset)
        print(f"ok: {len(dataset)} image(s), {dist.total} object(s)")
        for label, count in dist.counts.items():
            print(f"  {label}: {count}")
    if args.detections:
        records = parse_detections(_read(args.detections))
        total = sum(len(r.detections) for r in records)
        print(f"ok: {len(records)} image(s), {total} detection(s)")
    return 0


def cmd_stats(args) -> int:
    dataset = parse_dataset(_read(args.annotations))
    dist = class_distribution(dataset)
    rows = tuple(dist.counts)
    table = CountTable(
        rows=rows,
        columns=("count", "fraction"),
        values=tuple((dist.counts[r], f"{dist.fractions[r]:.6f}") for r in rows),
    )
    print(count_table_text(table), end="")
    if args.out_dir:
        _emit(args, {"stats.csv": count_table_csv(table)})
    return 0


def cmd_split(args) -> int:
    dataset = parse_dataset(_read(args.annotations))
    train, val = split_dataset(dataset, args.val_fraction, args.seed)
    _emit(args, {
        "train.json": serialize_dataset(train),
        "val.json": serialize_dataset(val),
    })
    print(f"split {len(dataset)} images into {len(train)} train / {len(val)} val")
    return 0


def cmd_crops(args) -> int:
    dataset = parse_dataset(_read(args.annotations))
    files: dict = {}
    crop_records = []
    for index, record in enumerate(dataset.records):
        image = _load_image(_resolve(record.path, args.images_dir))
        crops = generate_crops(record, size=args.size, multiplier=args.multiplier,
                               max_crops=args.max_crops, seed=_child_seed(args.seed, index))
        if args.balance:
            crops = balance_crops(crops, difficult_counts=args.difficult_rare)
        for j, crop in enumerate(crops):
            crop_id = f"{record.id}_c{j:04d}_r{crop.orientation:03d}"
            png_name = f"images/{crop_id}.png"
            files[png_name] = _png_bytes(crop_pixels(image, crop))
            crop_records.append(ImageRecord(id=crop_id, width=crop.size, height=crop.size,
                                            path=png_name, objects=crop.objects))
    files["crops.json"] = serialize_dataset(Dataset(records=tuple(crop_records)))
    _emit(args, files)
    print(f"wrote {len(crop_records)} crops from {len(dataset)} images")
    return 0


def _png_bytes(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(array)).save(buffer, format="PNG")
    return buffer.getvalue()


def cmd_segment(args) -> int:
    dataset = parse_dataset(_read(args.annotations))
    entries = []
    total = 0
    for record in dataset.records:
        image = _load_image(_resolve(record.path, args.images_dir))
        objects = segment(image, args.min_area, args.max_area)
        total += len(objects)
        entries.append({
            "id": record.id,
            "width": record.width,
            "height": record.height,
            "path": record.path,
            "objects": [{"bbox": list(o.box.as_tuple()), "area": o.area} for o in objects],
        })
    _emit(args, {"segments.json": json.dumps(entries, indent=2) + "\n"})
    print(f"segmented {total} object(s) in {len(dataset)} image(s)")
    return 0


def cmd_features(args) -> int:
    dataset = parse_dataset(_read(args.annotations))
    rows = []
    for record in dataset.records:
        image = _load_image(_resolve(record.path, args.images_dir))
        if args.from_segmentation:
            for index, obj in enumerate(segment(image, args.min_area, args.max_area)):
                rows.append((record.id, index, obj.box, None, extract_features(image, obj)))
        else:
            for index, obj in enumerate(record.objects):
                if obj.difficult and not args.include_difficult:
                    continue
                rows.append((record.id, index, obj.box, obj.label,
                             extract_features(image, obj.box)))
    _emit(args, {"features.csv": write_features_csv(rows)})
    print(f"wrote {len(rows)} feature row(s)")
    return 0


def cmd_train(args) -> int:
    rows = read_features_csv(Path(args.features).read_text(encoding="utf-8"))
    unlabeled = [(r[0], r[1]) for r in rows if r[3] is None]
    if unlabeled:
        raise ValueError(f"{len(unlabeled)} feature row(s) without labels, e.g. {unlabeled[0]}")
    classes = tuple(args.classes.split(",")) if args.classes else None
    if classes:
        rows = [r for r in rows if r[3] in classes]
    if not rows:
        raise ValueError("no training rows left after class filtering")
    params = ForestParams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_leaf,
        class_weight=None if args.class_weight == "none" else args.class_weight,
        seed=args.seed,
    )
    model = train_forest(np.vstack([r[4] for r in rows]), [r[3] for r in rows],
                         params, classes=classes)
    _emit(args, {"model.json": save_model(model)})
    print(f"trained {params.n_trees} trees on {len(rows)} cells, classes: {', '.join(model.classes)}")
    return 0


def cmd_classify(args) -> int:
    records = parse_stage_one(_read(args.stage1))
    model = load_model(_read(args.model))
    out = []
    total = 0
    for record in records:
        image = _load_image(_resolve(record.path, args.images_dir))
        kept = filter_by_score(record.detections, args.score)
        fine = two_stage_classify(kept, image, model)
        total += len(fine)
        out.append(DetectionRecord(id=record.id, width=record.width, height=record.height,
                                   path=record.path, detections=tuple(fine)))
    _emit(args, {"detections.json": serialize_detections(out)})
    print(f"classified {total} detection(s) in {len(records)} image(s)")
    return 0


def _detections_by_image(gt: Dataset, det_records, score: float) -> dict:
    known = {r.id for r in gt.records}
    unknown = sorted({r.id for r in det_records} - known)
    if unknown:
        raise ValueError(f"detections reference unknown image ids: {unknown}")
    return {r.id: filter_by_score(r.detections, score) for r in det_records}


def cmd_match(args) -> int:
    gt = parse_dataset(_read(args.gt))
    by_image = _detections_by_image(gt, parse_detections(_read(args.dets)), args.score)
    entries = []
    for record in gt.records:
        dets = by_image.get(record.id, [])
        result = match_detections(dets, record.objects, args.iou)
        entries.append({"id": record.id, **result.to_dict()})
    _emit(args, {"matches.json": json.dumps(entries, indent=2) + "\n"})
    print(f"matched {len(gt)} image(s)")
    return 0


def cmd_eval(args) -> int:
    gt = parse_dataset(_read(args.gt))
    by_image = _detections_by_image(gt, parse_detections(_read(args.dets)), args.score)
    result = evaluate_detections(gt, by_image, iou_threshold=args.iou)
    metrics_payload = {
        "iou_threshold": args.iou,
        "score_threshold": args.score,
        "images": result.n_images,
        "matched": result.n_matched,
        "spurious": result.n_spurious,
        "missed": result.n_missed,
        "accuracy_excluding_rbc_and_difficult": result.accuracy,
        "per_class": scores_to_dict(result.scores),
    }
    _emit(args, {
        "counts.csv": count_table_csv(result.counts),
        "confusion.csv": confusion_csv(result.confusion),
        "metrics.json": json.dumps(metrics_payload, indent=2) + "\n",
    })
    print(count_table_text(result.counts), end="")
    if result.accuracy is None:
        print("accuracy (excluding rbc and difficult): undefined (no qualifying annotations)")
    else:
        print(f"accuracy (excluding rbc and difficult): {result.accuracy:.4f}")
    return 0


def cmd_agree(args) -> int:
    ann_a = parse_dataset(_read(args.a))
    ann_b = parse_dataset(_read(args.b))
    result = annotator_agreement(ann_a, ann_b, threshold=args.iou)
    f1_cells = []
    for row in result.table.rows:
        f1_cells.append(("--",) if row == "difficult" else (f1_percent(result.scores.get(row)),))
    table = CountTable.combine([
        result.table,
        CountTable(rows=result.table.rows, columns=("F1 score (%)",), values=tuple(f1_cells)),
    ])
    _emit(args, {
        "agreement.csv": count_table_csv(table),
        "agreement.json": json.dumps({
            "iou_threshold": args.iou,
            "per_class": scores_to_dict(result.scores),
        }, indent=2) + "\n",
    })
    print(count_table_text(table), end="")
    return 0


def cmd_tsne(args) -> int:
    rows = read_features_csv(Path(args.features).read_text(encoding="utf-8"))
    if len(rows) < 3:
        raise ValueError(f"need at least 3 feature rows, got {len(rows)}")
    X = np.vstack([r[4] for r in rows])
    labels = [r[3] for r in rows]
    embedding = embed(
        X,
        perplexity=args.perplexity,
        n_iter=args.iters,
        learning_rate=args.learning_rate,
        exaggeration=args.exaggeration,
        seed=args.seed,
        labels=labels,
    )
    coord_lines = ["image_id,object_index,label,x,y"]
    for row, (x, y) in zip(rows, embedding.coords):
        coord_lines.append(f"{row[0]},{row[1]},{row[3] or ''},{float(x)!r},{float(y)!r}")
    trace_lines = ["iteration,kl"] + [
        f"{i},{float(v)!r}" for i, v in enumerate(embedding.kl_trace)
    ]
    _emit(args, {
        "coords.csv": "\n".join(coord_lines) + "\n",
        "kl_trace.csv": "\n".join(trace_lines) + "\n",
        "embedding.svg": svg_scatter(embedding.coords, labels),
    })
    print(f"embedded {len(rows)} points; KL {embedding.kl_trace[0]:.4f} -> {embedding.kl_trace[-1]:.4f}")
    return 0


def cmd_report(args) -> int:
    files: dict = {}
    if args.counts:
        table = read_count_table_csv(Path(args.counts).read_text(encoding="utf-8"))
        files["counts_table.csv"] = count_table_csv(table)
        files["counts_table.txt"] = count_table_text(table)
        print(count_table_text(table), end="")
    if args.confusion:
        grid = [line for line in csv.reader(io.StringIO(Path(args.confusion).read_text(encoding="utf-8"))) if line]
        if not grid:
            raise ValueError("confusion CSV is empty")
        table = CountTable(
            rows=tuple(line[0] for line in grid[1:]),
            columns=tuple(grid[0][1:]),
            values=tuple(tuple(line[1:]) for line in grid[1:]),
        )
        files["confusion_table.csv"] = count_table_csv(table).replace("class,", grid[0][0] + ",", 1)
        files["confusion_table.txt"] = count_table_text(table)
    if args.tsne_coords:
        reader = csv.reader(io.StringIO(Path(args.tsne_coords).read_text(encoding="utf-8")))
        header = next(reader, None)
        if header != ["image_id", "object_index", "label", "x", "y"]:
            raise ValueError("not a coordinates CSV produced by the tsne command")
        labels = []
        points = []
        for line in reader:
            if not line:
                continue
            labels.append(line[2])
            points.append((float(line[3]), float(line[4])))
        files["embedding.svg"] = svg_scatter(np.array(points), labels)
    if not files:
        raise ValueError("empty report: provide --counts, --confusion, and/or --tsne-coords")
    _emit(args, files)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smearkit",
        description="Blood-smear object detection toolkit: data validation, "
                    "crop generation, baseline training, matching, metrics, and plots.",
    )
    parser.add_argument("--version", action="version", version=f"smearkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out_dir=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func, command=name)
        if out_dir:
            p.add_argument("--out-dir", required=True, help="directory for outputs and run_config.json")
        return p

    p = add("validate", cmd_validate, "check an annotation or detection file", out_dir=False)
    p.add_argument("--annotations", help="annotation JSON file")
    p.add_argument("--detections", help="detection JSON file")

    p = add("stats", cmd_stats, "per-class counts and fractions", out_dir=False)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", help="optionally write stats.csv here")

    p = add("split", cmd_split, "random image-level train/val split")
    p.add_argument("--annotations", required=True)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)

    p = add("crops", cmd_crops, "generate balanced training crops as PNGs + annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images-dir", help="base directory for relative image paths")
    p.add_argument("--size", type=int, default=448)
    p.add_argument("--multiplier", type=float, default=2.0)
    p.add_argument("--max-crops", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balance", action=argparse.BooleanOptionalAction, default=True,
                   help="drop rbc-only crops and rotation-augment rare-class crops")
    p.add_argument("--difficult-rare", action=argparse.BooleanOptionalAction, default=True,
                   help="difficult non-rbc cells count as rare for balancing")

    p = add("segment", cmd_segment, "threshold-segment cells, writing boxes per image")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images-dir")
    p.add_argument("--min-area", type=int, default=64)
    p.add_argument("--max-area", type=int, default=None)

    p = add("features", cmd_features, "per-cell feature CSV from annotations or segmentation")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images-dir")
    p.add_argument("--from-segmentation", action="store_true",
                   help="measure segmented objects instead of annotated boxes")
    p.add_argument("--include-difficult", action="store_true")
    p.add_argument("--min-area", type=int, default=64)
    p.add_argument("--max-area", type=int, default=None)

    p = add("train", cmd_train, "train the random-forest classifier from a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--trees", type=int, default=1000)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--class-weight", choices=("none", "balanced"), default="balanced")
    p.add_argument("--classes", help="comma-separated class order / filter")
    p.add_argument("--seed", type=int, default=0)

    p = add("classify", cmd_classify, "refine rbc/other stage-one detections with a model")
    p.add_argument("--stage1", required=True, help="stage-one detections JSON")
    p.add_argument("--images-dir")
    p.add_argument("--model", required=True)
    p.add_argument("--score", type=float, default=0.65, help="stage-one score threshold")

    p = add("match", cmd_match, "audit greedy IoU matching per image")
    p.add_argument("--gt", required=True)
    p.add_argument("--dets", required=True)
    p.add_argument("--iou", type=float, default=0.4)
    p.add_argument("--score", type=float, default=0.0)

    p = add("eval", cmd_eval, "count tables, confusion matrix, accuracy, per-class F1")
    p.add_argument("--gt", required=True)
    p.add_argument("--dets", required=True)
    p.add_argument("--iou", type=float, default=0.4)
    p.add_argument("--score", type=float, default=0.65)

    p = add("agree", cmd_agree, "inter-annotator counts and per-class F1")
    p.add_argument("--a", required=True, help="annotator 1 file (reference)")
    p.add_argument("--b", required=True, help="annotator 2 file")
    p.add_argument("--iou", type=float, default=0.4)

    p = add("tsne", cmd_tsne, "embed a feature CSV to 2-D and plot it")
    p.add_argument("--features", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--exaggeration", type=float, default=12.0)
    p.add_argument("--seed", type=int, default=0)

    p = add("report", cmd_report, "render metric files into tables and plots")
    p.add_argument("--counts", help="count-table CSV to render")
    p.add_argument("--confusion", help="confusion CSV to render")
    p.add_argument("--tsne-coords", help="coordinates CSV to render as SVG")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (DatasetFormatError, ModelFormatError, UndefinedMetricError,
            ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
