"""Command-line exporter.

``ovssx text-bank`` writes the (80, K, D) prompt-embedding bank;
``ovssx features`` writes per-image feature/label tensors and the manifest.
Exit codes: 0 success, 2 bad configuration, 3 missing input files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ExtractorConfig, export_features, export_text_bank


def _class_names(args) -> list[str]:
    if args.classes_file:
        return [line.strip() for line in Path(args.classes_file).read_text().splitlines()
                if line.strip()]
    return [c.strip() for c in args.classes.split(",") if c.strip()]


def _common_config(args, **extra) -> ExtractorConfig:
    return ExtractorConfig(
        class_names=_class_names(args),
        out_dir=args.out,
        model=args.model,
        embed_dim=args.dim,
        patch_size=args.patch_size,
        ignore_index=args.ignore_index,
        **extra,
    )


def cmd_text_bank(args) -> int:
    path = export_text_bank(_common_config(args))
    print(f"wrote {path}")
    return 0


def cmd_features(args) -> int:
    path = export_features(_common_config(
        args, image_dir=args.images, label_dir=args.labels,
        short_side=args.short_side, limit=args.limit))
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovssx",
                                     description="Feature and text-bank exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--classes", help="comma-separated class names")
        group.add_argument("--classes-file", help="file with one class name per line")
        p.add_argument("--model", default="hashproj",
                       help="'hashproj' or 'clip:<model-id>'")
        p.add_argument("--dim", type=int, default=512,
                       help="embedding dim (hashproj only)")
        p.add_argument("--patch-size", dest="patch_size", type=int, default=16)
        p.add_argument("--ignore-index", dest="ignore_index", type=int, default=255)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("text-bank", help="export the 80-template prompt embedding bank")
    common(p)
    p.set_defaults(func=cmd_text_bank)

    p = sub.add_parser("features", help="export dense image features and labels")
    common(p)
    p.add_argument("--images", required=True, help="directory of images (.npy or PIL-readable)")
    p.add_argument("--labels", help="directory of label maps matched by file stem")
    p.add_argument("--short-side", dest="short_side", type=int, default=None,
                   help="resize so the shortest image side equals this")
    p.add_argument("--limit", type=int, default=None, help="export at most N images")
    p.set_defaults(func=cmd_features)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
