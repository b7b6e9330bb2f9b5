"""Command line: NIfTI volumes in, embedding store out."""
from __future__ import annotations

import argparse
import sys

from .errors import VolextractError
from .extract import ExtractorConfig, extract_to_store
from .models import MODEL_NAMES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="volextract",
        description="Extract slice embeddings from CT volumes into a .vge1 store",
    )
    p.add_argument("volumes", nargs="+", help="input .nii / .nii.gz files")
    p.add_argument("--model", choices=MODEL_NAMES, default="dinov2")
    p.add_argument("--out", required=True, help="output store path (.vge1)")
    p.add_argument("--masks", nargs="+", default=None, help="segmentation masks, one per volume")
    p.add_argument("--labels-out", default=None, help="slice label CSV (needs --masks)")
    p.add_argument(
        "--random-init", action="store_true",
        help="skip pretrained weights; seeded random initialization",
    )
    p.add_argument("--checkpoint", default=None, help="local state-dict file to load")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--axis", type=int, default=2, help="axial slice axis of the input array")
    p.add_argument("--interp", choices=["nearest", "bilinear", "bicubic"], default="bilinear")
    p.add_argument("--device", default="cpu")
    p.add_argument("--split", choices=["database", "query"], default="database")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.labels_out and not args.masks:
        print("--labels-out needs --masks", file=sys.stderr)
        return 2
    config = ExtractorConfig(
        model=args.model,
        pretrained=not args.random_init,
        checkpoint=args.checkpoint,
        device=args.device,
        batch_size=args.batch,
        axial_axis=args.axis,
        interp=args.interp,
        seed=args.seed,
        split=args.split,
    )
    try:
        store = extract_to_store(
            args.volumes, config, out_path=args.out,
            mask_paths=args.masks, labels_out=args.labels_out,
        )
    except (VolextractError, FileNotFoundError, IsADirectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(
        f"wrote {store.row_count} rows (dim {store.dim}) "
        f"for {len(store.volume_ids())} volumes to {args.out}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
