"""sam-adapter: segment a slide image and emit manifest + label maps.

    sam-adapter --image slide.png --checkpoint sam_vit_h.pth \
        --variant vit_h --tile 1024 --out outdir/
"""

from __future__ import annotations

import argparse
import sys

from .adapter import AdapterConfig, AdapterError, segment_slide


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sam-adapter", description=__doc__)
    p.add_argument("--image", required=True, help="input slide image (any PIL-readable format)")
    p.add_argument("--checkpoint", required=True, help="model checkpoint path")
    p.add_argument("--variant", default="vit_h", choices=("vit_b", "vit_l", "vit_h"))
    p.add_argument("--tile", type=int, default=1024, help="tile edge length in pixels")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--slide-id", default="slide")
    p.add_argument("--group-label", default="ungrouped")
    p.add_argument("--points-per-side", type=int, default=32)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(
        input_image_path=args.image,
        output_dir=args.out,
        checkpoint_path=args.checkpoint,
        model_variant=args.variant,
        tile_width=args.tile,
        tile_height=args.tile,
        slide_id=args.slide_id,
        group_label=args.group_label,
        points_per_side=args.points_per_side,
    )
    try:
        manifest = segment_slide(config)
    except AdapterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
