"""Command line for the figure renderer: figures <kind> --in DIR --out FILE."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FigureSpec, SchemaError, render

__all__ = ["main"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render turnpike figures from sweep CSV outputs.",
    )
    parser.add_argument("kind", choices=["deviation", "sweep"], help="figure to render")
    parser.add_argument("--in", dest="in_dir", required=True, help="directory with CSV outputs")
    parser.add_argument("--out", dest="out_path", required=True, help="image file to write")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)

    spec = FigureSpec(
        in_dir=Path(args.in_dir), kind=args.kind, out_path=Path(args.out_path), dpi=args.dpi
    )
    try:
        out = render(spec)
    except SchemaError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
