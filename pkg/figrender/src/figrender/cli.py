"""Batch entry point: `figrender plotspec.json [more.json ...]`."""

from __future__ import annotations

import argparse
import sys

from .render import render
from .specs import PlotSpec, PlotSpecError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figrender",
                                     description="render sandlab exports")
    parser.add_argument("specs", nargs="+", help="PlotSpec JSON paths")
    args = parser.parse_args(argv)
    for path in args.specs:
        try:
            spec = PlotSpec.from_json(path)
            result = render(spec)
        except (PlotSpecError, OSError) as exc:
            print(f"figrender: {path}: {exc}", file=sys.stderr)
            return 2
        print(f"{path}: wrote {result.output} ({result.marker_count} markers)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
