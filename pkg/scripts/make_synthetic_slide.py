#!/usr/bin/env python3
"""Generate a synthetic slide (manifest + label maps) for pipeline experiments.

Example:
    python3 scripts/make_synthetic_slide.py --out /tmp/slide \
        --group "2pct-day18" --tiles 4 --instances 10 --radius-mean 14 --seed 7
"""

import argparse

from orgmorph.synth import make_synthetic_slide


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", required=True)
    p.add_argument("--slide-id", default="synthetic")
    p.add_argument("--group", default="groupA")
    p.add_argument("--tile-size", type=int, default=192)
    p.add_argument("--tiles", type=int, default=2)
    p.add_argument("--instances", type=int, default=6)
    p.add_argument("--radius-mean", type=float, default=12.0)
    p.add_argument("--radius-sd", type=float, default=1.0)
    p.add_argument("--mpp", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    manifest = make_synthetic_slide(
        args.out,
        slide_id=args.slide_id,
        group_label=args.group,
        tile_width=args.tile_size,
        tile_height=args.tile_size,
        n_tiles=args.tiles,
        n_instances_per_tile=args.instances,
        radius_mean=args.radius_mean,
        radius_sd=args.radius_sd,
        seed=args.seed,
        microns_per_pixel=args.mpp,
    )
    print(manifest)


if __name__ == "__main__":
    main()
