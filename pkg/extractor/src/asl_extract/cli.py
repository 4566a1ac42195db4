"""CLI: extract --images <dir> --out <landmarks file> [--min-confidence 0.5]."""

from __future__ import annotations

import argparse
import sys

from .detectors import DetectorUnavailable, make_detector
from .extractor import extract_landmarks, format_summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract", description=__doc__)
    parser.add_argument("--images", required=True, help="root directory, one folder per class")
    parser.add_argument("--out", required=True, help="landmark file to write")
    parser.add_argument("--min-confidence", type=float, default=0.5)
    parser.add_argument(
        "--detector", choices=("mediapipe", "synthetic"), default="mediapipe",
        help="detection backend; 'synthetic' is a deterministic stub for smoke tests",
    )
    return parser


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        detector = make_detector(args.detector, args.min_confidence)
        summary = extract_landmarks(args.images, args.out, args.min_confidence, detector)
    except DetectorUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NotADirectoryError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_summary(summary))
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
