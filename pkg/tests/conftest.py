"""Shared test fixtures: synthetic blood-smear scenes with known annotations.

Cells are drawn as colored disks with class-specific sizes and colors (rings
get a dark rim) on a bright noisy background, so segmentation, feature
extraction, and classification all have real signal to work with.  Scenes
are deterministic per seed.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from smearkit.data import (
    BoundingBox,
    Dataset,
    GroundTruthObject,
    ImageRecord,
    serialize_dataset,
)

# luminances kept within ~75-150 so a global threshold separates every cell
# from the bright background; hue and size differences carry the class signal
CELL_STYLES = {
    "rbc": ((10, 13), (195, 120, 130)),
    "leukocyte": ((16, 19), (120, 100, 185)),
    "gametocyte": ((13, 15), (100, 75, 135)),
    "ring": ((9, 11), (175, 130, 170)),
    "trophozoite": ((12, 14), (70, 95, 170)),
    "schizont": ((13, 16), (95, 65, 85)),
}
RING_RIM = (105, 60, 110)


def draw_cell(image: np.ndarray, cx: float, cy: float, radius: int, label: str,
              rng: np.random.Generator) -> None:
    height, width = image.shape[:2]
    yy, xx = np.mgrid[0:height, 0:width]
    dist2 = (xx - cx) ** 2 + (yy - cy) ** 2
    color = np.array(CELL_STYLES[label][1], dtype=np.int16)
    color = np.clip(color + rng.integers(-8, 9, size=3), 0, 255)
    image[dist2 <= radius ** 2] = color
    if label == "ring":
        rim = dist2 <= radius ** 2
        rim &= dist2 >= (radius - 3) ** 2
        image[rim] = RING_RIM


def synth_scene(image_id: str, width: int, height: int, labels, seed: int,
                difficult=(), path: str = "") -> tuple[ImageRecord, np.ndarray]:
    """Draw the requested cells at non-overlapping random positions.

    Returns the annotated record and the uint8 RGB image.  ``difficult``
    lists indices of cells to flag.
    """
    rng = np.random.default_rng(seed)
    image = np.clip(rng.normal(245.0, 2.0, size=(height, width, 3)), 0, 255).astype(np.uint8)
    placed: list[tuple[float, float, int]] = []
    objects = []
    for index, label in enumerate(labels):
        r_lo, r_hi = CELL_STYLES[label][0]
        radius = int(rng.integers(r_lo, r_hi + 1))
        for _ in range(200):
            cx = float(rng.uniform(radius + 2, width - radius - 2))
            cy = float(rng.uniform(radius + 2, height - radius - 2))
            if all((cx - px) ** 2 + (cy - py) ** 2 > (radius + pr + 6) ** 2
                   for px, py, pr in placed):
                break
        else:
            raise RuntimeError(f"could not place cell {index} without overlap")
        placed.append((cx, cy, radius))
        draw_cell(image, cx, cy, radius, label, rng)
        objects.append(GroundTruthObject(
            box=BoundingBox(cx - radius, cy - radius, cx + radius, cy + radius),
            label=label,
            difficult=index in difficult,
        ))
    record = ImageRecord(id=image_id, width=width, height=height, path=path,
                         objects=tuple(objects))
    return record, image


def write_corpus(directory: Path, scenes) -> tuple[Path, Path]:
    """Save scenes as PNGs plus a gt.json; returns (annotation path, images dir)."""
    images_dir = directory / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for record, image in scenes:
        name = f"{record.id}.png"
        Image.fromarray(image).save(images_dir / name)
        records.append(ImageRecord(id=record.id, width=record.width, height=record.height,
                                   path=name, objects=record.objects))
    gt_path = directory / "gt.json"
    gt_path.write_bytes(serialize_dataset(Dataset(records=tuple(records))))
    return gt_path, images_dir


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six 256x256 scenes with a mix of all classes, saved to disk."""
    base = tmp_path_factory.mktemp("corpus")
    mixes = [
        ["rbc"] * 5 + ["ring", "trophozoite", "schizont"],
        ["rbc"] * 4 + ["gametocyte", "leukocyte", "ring"],
        ["rbc"] * 6 + ["trophozoite", "trophozoite"],
        ["rbc"] * 3 + ["schizont", "ring", "gametocyte", "leukocyte"],
        ["rbc"] * 5 + ["trophozoite", "ring", "ring"],
        ["rbc"] * 4 + ["schizont", "gametocyte", "trophozoite"],
    ]
    scenes = [
        synth_scene(f"im{i:02d}", 256, 256, mix, seed=100 + i,
                    difficult=(len(mix) - 1,) if i % 3 == 0 else ())
        for i, mix in enumerate(mixes)
    ]
    gt_path, images_dir = write_corpus(base, scenes)
    return {"dir": base, "gt": gt_path, "images": images_dir, "scenes": scenes}
