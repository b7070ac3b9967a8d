"""Command line: extract embeddings from an image directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractionManifest, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fseb-extract",
        description="Encode an image directory into an FSEB embedding store.",
    )
    parser.add_argument("--images", type=Path, required=True,
                        help="image root directory")
    parser.add_argument("--metadata", type=Path, required=True,
                        help="CSV with columns filename,species,split")
    parser.add_argument("--encoder", default="rp512",
                        help="rp512 (offline default) or hf-clip:<model_id>")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    parser.add_argument("--out", type=Path, required=True, help="output .fseb path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    manifest = ExtractionManifest(
        image_root=args.images,
        metadata_path=args.metadata,
        encoder=args.encoder,
        batch_size=args.batch_size,
        out_path=args.out,
    )
    try:
        result = extract(manifest)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.out}: n={result.n_records} dimension={result.dimension} "
        f"labels={len(result.labels)} skipped={len(result.skipped)}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
