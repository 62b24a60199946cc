"""CLI: issfa-plots <run-dir> [--truth <dir>] [--out <dir>]."""

from __future__ import annotations

import argparse
import sys

from .artifacts import ArtifactError
from .figures import render_all


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="issfa-plots",
        description="Render trace, feature-mosaic, weight-histogram and "
                    "reconstruction-gallery figures from an issfa run directory.",
    )
    parser.add_argument("run_dir", help="run directory (trace.csv + metrics.json required)")
    parser.add_argument("--truth", default=None, help="data directory with ground truth")
    parser.add_argument("--out", default=None, help="output directory (default: run dir)")
    args = parser.parse_args(argv)
    try:
        written = render_all(args.run_dir, args.truth, args.out)
    except (ArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
