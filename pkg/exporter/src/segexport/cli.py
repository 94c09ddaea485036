"""Command line for the exporter: fabricate checkpoints and export frames."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ExportSpec, export
from .models import MODEL_BUILDERS, make_checkpoint


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segexport",
        description="Export base-network predictions and intermediate activations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-checkpoint", help="write a seeded random state_dict")
    p.add_argument("--model", required=True, choices=sorted(MODEL_BUILDERS))
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export", help="export predictions and hooked activations")
    p.add_argument("--model", required=True, choices=sorted(MODEL_BUILDERS))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--layers", default="", help="comma-separated layer identifiers")
    p.add_argument("--out-dir", required=True)
    p.add_argument("frames", nargs="+", help="RGB PNG frames")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-checkpoint":
            path = make_checkpoint(args.model, args.num_classes, args.seed, args.out)
            print(f"checkpoint model={args.model} file={path}")
        else:
            layers = tuple(part.strip() for part in args.layers.split(",") if part.strip())
            spec = ExportSpec(model_name=args.model, checkpoint=Path(args.checkpoint),
                              num_classes=args.num_classes, layers=layers,
                              frames=tuple(Path(f) for f in args.frames),
                              out_dir=Path(args.out_dir))
            results = export(spec)
            print(f"export frames={len(results)} layers={len(layers)} dir={args.out_dir}")
        return 0
    except Exception as exc:
        print(f'error msg="{exc}"'.replace("\n", " "), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
