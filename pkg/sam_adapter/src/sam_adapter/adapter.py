"""Tile a slide image, run an automatic mask generator, emit interchange files.

The output is the mask interchange layout consumed by the measurement
pipeline: `manifest.json` plus one `<tile>.lmh`/`<tile>.lmp` pair per tile
(little-endian u16 label payloads, row-major). The mask generator is
injectable so the tiling and rasterization logic stays testable without
model weights; the default generator wraps SegmentAnything's automatic
mask generator with the checkpoint and variant from the config.

Rasterization resolves overlapping masks in favor of the smaller mask, so
nested structures (organoid lumens) survive as distinct labels for the
downstream containment merge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

MAX_LABELS = 0xFFFF


class AdapterError(Exception):
    """Base class for adapter failures."""


class ModelLoadFailure(AdapterError):
    pass


class ImageReadFailure(AdapterError):
    pass


class MaskGenerator(Protocol):
    def generate(self, image_rgb: np.ndarray) -> list[dict]:
        """Return masks as dicts with a boolean 'segmentation' (H, W) array;
        an optional 'area' field overrides the pixel count."""
        ...


GeneratorFactory = Callable[["AdapterConfig"], MaskGenerator]

SAM_VARIANTS = ("vit_b", "vit_l", "vit_h")


@dataclass(frozen=True)
class AdapterConfig:
    input_image_path: str
    output_dir: str
    checkpoint_path: str = ""
    model_variant: str = "vit_h"
    tile_width: int = 1024
    tile_height: int = 1024
    slide_id: str = "slide"
    group_label: str = "ungrouped"
    points_per_side: int = 32

    def __post_init__(self):
        if self.model_variant not in SAM_VARIANTS:
            raise AdapterError(
                f"model_variant must be one of {SAM_VARIANTS}, got {self.model_variant!r}"
            )
        if self.tile_width <= 0 or self.tile_height <= 0:
            raise AdapterError(
                f"tile dimensions must be positive, got {self.tile_width}x{self.tile_height}"
            )


def load_image(path: str | Path) -> np.ndarray:
    try:
        from PIL import Image

        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except FileNotFoundError as e:
        raise ImageReadFailure(f"image not found: {path}") from e
    except Exception as e:  # PIL raises a zoo of decode errors
        raise ImageReadFailure(f"cannot read image {path}: {e}") from e


def tile_origins(
    image_width: int, image_height: int, tile_width: int, tile_height: int
) -> list[tuple[int, int]]:
    """Row-major grid of uniform tiles covering the image exactly.

    When a dimension is not a multiple of the tile size, the final
    column/row is clamped inward, overlapping its neighbour at the seam.
    """
    if image_width < tile_width or image_height < tile_height:
        raise AdapterError(
            f"image {image_width}x{image_height} is smaller than one "
            f"{tile_width}x{tile_height} tile"
        )

    def starts(extent: int, step: int) -> list[int]:
        out = list(range(0, extent - step + 1, step))
        if out[-1] + step < extent:
            out.append(extent - step)
        return out

    return [
        (ox, oy)
        for oy in starts(image_height, tile_height)
        for ox in starts(image_width, tile_width)
    ]


def rasterize_masks(masks: list[dict], tile_width: int, tile_height: int) -> np.ndarray:
    """Paint masks as labels 1..n ordered by descending area.

    Painting large-to-small means a smaller overlapping mask overwrites the
    larger one, keeping nested detections distinct.
    """
    if len(masks) > MAX_LABELS:
        raise AdapterError(f"{len(masks)} masks exceed the 16-bit label budget")
    labels = np.zeros((tile_height, tile_width), dtype=np.uint16)
    sized = []
    for i, mask in enumerate(masks):
        seg = np.asarray(mask["segmentation"], dtype=bool)
        if seg.shape != (tile_height, tile_width):
            raise AdapterError(
                f"mask shape {seg.shape} does not match tile {tile_height}x{tile_width}"
            )
        area = int(mask.get("area", seg.sum()))
        sized.append((area, i, seg))
    sized.sort(key=lambda m: (-m[0], m[1]))
    for label, (_, _, seg) in enumerate(sized, start=1):
        labels[seg] = label
    return labels


def _write_label_map(labels: np.ndarray, path_stem: Path) -> None:
    h, w = labels.shape
    path_stem.with_suffix(".lmh").write_text(
        json.dumps({"width": w, "height": h}), encoding="utf-8"
    )
    path_stem.with_suffix(".lmp").write_bytes(
        np.ascontiguousarray(labels, dtype="<u2").tobytes()
    )


def _sam_generator(config: AdapterConfig) -> MaskGenerator:
    try:
        import torch
        from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
    except ImportError as e:
        raise ModelLoadFailure(
            "segment-anything (and torch) are not installed; "
            "install the [sam] extra to run real inference"
        ) from e
    if not Path(config.checkpoint_path).exists():
        raise ModelLoadFailure(f"checkpoint not found: {config.checkpoint_path}")
    try:
        model = sam_model_registry[config.model_variant](checkpoint=config.checkpoint_path)
        model.to("cuda" if torch.cuda.is_available() else "cpu")
        return SamAutomaticMaskGenerator(model, points_per_side=config.points_per_side)
    except Exception as e:
        raise ModelLoadFailure(f"cannot load {config.model_variant} model: {e}") from e


def segment_slide(
    config: AdapterConfig, generator_factory: GeneratorFactory = _sam_generator
) -> Path:
    """Tile the image, generate masks per tile, and write the interchange
    files. Returns the manifest path."""
    image = load_image(config.input_image_path)
    height, width = image.shape[:2]
    origins = tile_origins(width, height, config.tile_width, config.tile_height)
    generator = generator_factory(config)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tiles = []
    for ox, oy in origins:
        tile_id = f"x{ox:06d}_y{oy:06d}"
        crop = image[oy : oy + config.tile_height, ox : ox + config.tile_width]
        masks = generator.generate(crop)
        labels = rasterize_masks(masks, config.tile_width, config.tile_height)
        _write_label_map(labels, out_dir / tile_id)
        tiles.append(
            {
                "tile_id": tile_id,
                "origin_x": ox,
                "origin_y": oy,
                "label_map_path": f"{tile_id}.lmh",
            }
        )

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "slide_id": config.slide_id,
                "group_label": config.group_label,
                "tile_width": config.tile_width,
                "tile_height": config.tile_height,
                "tiles": tiles,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return manifest_path
