"""glyph-render: rasterize a vocabulary's characters into a PGM glyph bank."""

from __future__ import annotations

import argparse
import sys

from .render import CharsetError, RenderError, RenderJob, extract_charset, render_bank


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="glyph-render",
        description="Render characters from a font into 40x40 PGM glyph files.")
    parser.add_argument("--font", required=True, help="TTF/OTF font file")
    parser.add_argument("--charset", required=True,
                        help="vocabulary file (word<TAB>count per line)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--size", type=int, default=36, help="point size (default 36)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help or usage error
        code = int(exc.code or 0)
        return 1 if code else 0

    try:
        codepoints = extract_charset(args.charset)
        report = render_bank(RenderJob(args.font, codepoints, args.out,
                                       point_size=args.size))
    except (CharsetError, RenderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"rendered={len(report.rendered)} missing={len(report.missing)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
