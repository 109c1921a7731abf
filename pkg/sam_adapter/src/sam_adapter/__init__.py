"""SegmentAnything batch adapter emitting the mask interchange format."""

from .adapter import (
    AdapterConfig,
    AdapterError,
    ImageReadFailure,
    ModelLoadFailure,
    rasterize_masks,
    segment_slide,
    tile_origins,
)

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "ImageReadFailure",
    "ModelLoadFailure",
    "rasterize_masks",
    "segment_slide",
    "tile_origins",
]
