"""Dependency-free raster encoders and the deterministic instance palette.

Overlays for golden-file QC are binary PPM (P6); crops served to the review
UI are PNG (browsers cannot display PPM). Both encoders are byte-stable for
identical inputs.
"""

from __future__ import annotations

import colorsys
import struct
import zlib

import numpy as np

GOLDEN_RATIO_CONJUGATE = 0.61803

WHITE = (255, 255, 255)
GRAY = (128, 128, 128)
PALE = (220, 220, 220)


def instance_color(local_label: int) -> tuple[int, int, int]:
    """Fully saturated hue keyed to the label, blended 50% over white."""
    hue = (local_label * GOLDEN_RATIO_CONJUGATE) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 1.0, 1.0)
    return tuple(int(round(255.0 * (0.5 * c + 0.5))) for c in (r, g, b))


def hatch_mask(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Diagonal stripe pattern used to gray out excluded instances."""
    return (xs + ys) % 4 < 2


def ppm_bytes(pixels: np.ndarray, comment: str = "") -> bytes:
    """Binary PPM (P6), 8-bit RGB, with an optional single comment line."""
    h, w, ch = pixels.shape
    assert ch == 3
    header = f"P6\n# {comment}\n{w} {h}\n255\n" if comment else f"P6\n{w} {h}\n255\n"
    return header.encode("ascii") + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def png_bytes(pixels: np.ndarray) -> bytes:
    """Minimal 8-bit RGB PNG encoder (filter 0, fixed zlib level)."""
    h, w, ch = pixels.shape
    assert ch == 3
    raw = np.ascontiguousarray(pixels, dtype=np.uint8)
    scanlines = b"".join(b"\x00" + raw[y].tobytes() for y in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)  # 8-bit truecolor
    idat = zlib.compress(scanlines, 6)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )
