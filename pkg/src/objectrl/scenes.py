"""Synthetic scenes with exact ground truth, and the dataset manifest format.

Scenes are filled rectangles and ellipses on a lightly textured background.
Default intensities are calibrated so an undistorted scene sits close to the
builtin detector profiles' preferred statistics (mean near 128, std near 48).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import BBox, GroundTruthBox
from .imaging import ImageBuffer, load_image, save_image

SHAPE_LABELS = ("rect", "ellipse")


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the synthetic scene generator."""

    width: int = 128
    height: int = 128
    min_objects: int = 1
    max_objects: int = 4
    min_object_size: int = 18
    max_object_size: int = 52
    background_range: tuple[int, int] = (114, 142)
    background_noise: int = 48
    shape_labels: tuple[str, ...] = SHAPE_LABELS

    def __post_init__(self):
        if self.min_objects < 0 or self.max_objects < self.min_objects:
            raise ValueError("need 0 <= min_objects <= max_objects")
        if not 4 <= self.min_object_size <= self.max_object_size:
            raise ValueError("need 4 <= min_object_size <= max_object_size")
        if self.max_object_size > min(self.width, self.height):
            raise ValueError("objects cannot exceed the canvas")
        lo, hi = self.background_range
        if not 0 <= lo <= hi <= 255:
            raise ValueError("background_range must lie within [0, 255]")
        if not self.shape_labels:
            raise ValueError("need at least one shape label")


@dataclass
class DatasetItem:
    """One annotated image: identifier, pixels, and exact ground truths."""

    image_id: str
    image: ImageBuffer
    gts: list[GroundTruthBox]


def generate_scene(
    spec: SceneSpec, rng: np.random.Generator
) -> tuple[ImageBuffer, list[GroundTruthBox]]:
    """Render one scene; deterministic for a given generator state.

    Object intensities alternate brighter/darker than the background so
    the scene mean stays close to the background level while the contrast
    comes from the shapes and the background texture.
    """
    h, w = spec.height, spec.width
    base = int(rng.integers(spec.background_range[0], spec.background_range[1] + 1))
    canvas = np.empty((h, w, 3), dtype=np.float64)
    for c in range(3):
        canvas[:, :, c] = base + int(rng.integers(-5, 6))
    if spec.background_noise > 0:
        noise = rng.integers(
            -spec.background_noise, spec.background_noise + 1, size=(h, w, 3)
        )
        canvas += noise

    count = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    yy, xx = np.mgrid[0:h, 0:w]
    boxes: list[GroundTruthBox] = []
    for index in range(count):
        ow = int(rng.integers(spec.min_object_size, spec.max_object_size + 1))
        oh = int(rng.integers(spec.min_object_size, spec.max_object_size + 1))
        x1 = int(rng.integers(0, w - ow + 1))
        y1 = int(rng.integers(0, h - oh + 1))
        label = spec.shape_labels[int(rng.integers(len(spec.shape_labels)))]

        # Alternate the luminance sign so objects roughly cancel in the mean.
        sign = 1.0 if index % 2 == 0 else -1.0
        offset = sign * float(rng.integers(75, 131))
        color = np.clip(base + offset + rng.integers(-35, 36, size=3), 0, 255)

        if label == "ellipse":
            cx, cy = x1 + ow / 2.0, y1 + oh / 2.0
            mask = ((xx + 0.5 - cx) / (ow / 2.0)) ** 2 + (
                (yy + 0.5 - cy) / (oh / 2.0)
            ) ** 2 <= 1.0
        else:
            mask = (xx >= x1) & (xx < x1 + ow) & (yy >= y1) & (yy < y1 + oh)
        canvas[mask] = color
        boxes.append(
            GroundTruthBox(
                box=BBox(x1=float(x1), y1=float(y1), x2=float(x1 + ow), y2=float(y1 + oh)),
                label=label,
            )
        )

    image = ImageBuffer(np.clip(canvas, 0, 255).astype(np.uint8))
    return image, boxes


def generate_dataset(
    spec: SceneSpec, count: int, rng: np.random.Generator, prefix: str = "scene"
) -> list[DatasetItem]:
    items = []
    for i in range(count):
        image, gts = generate_scene(spec, rng)
        items.append(DatasetItem(image_id=f"{prefix}_{i:05d}", image=image, gts=gts))
    return items


def write_dataset(items: list[DatasetItem], out_dir) -> Path:
    """Write PNG files plus a `dataset.json` manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for item in items:
        filename = f"{item.image_id}.png"
        save_image(item.image, out_dir / filename)
        records.append(
            {
                "file": filename,
                "boxes": [
                    {
                        "x1": gt.box.x1,
                        "y1": gt.box.y1,
                        "x2": gt.box.x2,
                        "y2": gt.box.y2,
                        "label": gt.label,
                    }
                    for gt in item.gts
                ],
            }
        )
    manifest = out_dir / "dataset.json"
    manifest.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_dataset(manifest_path) -> list[DatasetItem]:
    """Load a `dataset.json` manifest; image paths resolve beside the manifest."""
    manifest_path = Path(manifest_path)
    records = json.loads(manifest_path.read_text(encoding="utf-8"))
    if not isinstance(records, list):
        raise ValueError(f"{manifest_path} does not contain a record list")
    base = manifest_path.parent
    items = []
    for record in records:
        gts = [
            GroundTruthBox(
                box=BBox(
                    x1=float(b["x1"]),
                    y1=float(b["y1"]),
                    x2=float(b["x2"]),
                    y2=float(b["y2"]),
                ),
                label=str(b["label"]),
            )
            for b in record["boxes"]
        ]
        items.append(
            DatasetItem(
                image_id=Path(record["file"]).stem,
                image=load_image(base / record["file"]),
                gts=gts,
            )
        )
    return items
