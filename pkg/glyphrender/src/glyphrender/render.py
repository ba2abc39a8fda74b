"""Rasterize characters from a font into 40x40 binary PGM glyph files.

Output files follow the glyph-bank contract: "P5\\n40 40\\n255\\n" plus
exactly 1600 data bytes, named <uppercase hex codepoint>.pgm, with ink as
high intensity. Glyphs are anti-aliased, centered by ink bounding box,
and normalized so the brightest ink pixel is 255.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

CANVAS = 40
DEFAULT_POINT_SIZE = 36


class RenderError(Exception):
    """Font unusable or nothing renderable."""


class CharsetError(Exception):
    """Vocabulary file is malformed."""


@dataclass
class RenderJob:
    font_path: str
    codepoints: list[int]
    out_dir: str
    point_size: int = DEFAULT_POINT_SIZE
    canvas: int = field(default=CANVAS, init=False)


@dataclass
class RenderReport:
    rendered: list[int]
    missing: list[int]


def extract_charset(vocab_path) -> list[int]:
    """Sorted unique codepoints over all words of a vocabulary file
    (one "word<TAB>count" record per line)."""
    chars: set[int] = set()
    with open(vocab_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0]:
                raise CharsetError(f"{vocab_path}:{lineno}: expected 'word<TAB>count'")
            try:
                int(fields[1])
            except ValueError as exc:
                raise CharsetError(f"{vocab_path}:{lineno}: bad count {fields[1]!r}") from exc
            chars.update(ord(ch) for ch in fields[0])
    return sorted(chars)


def glyph_filename(codepoint: int) -> str:
    return f"{codepoint:04X}.pgm"


def write_pgm(path, pixels: np.ndarray) -> None:
    """Exact glyph-bank format: P5 header, maxval 255, 1600 raw bytes."""
    if pixels.shape != (CANVAS, CANVAS) or pixels.dtype != np.uint8:
        raise RenderError(f"internal: bad glyph array {pixels.shape} {pixels.dtype}")
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (CANVAS, CANVAS))
        fh.write(pixels.tobytes())


def _supported_codepoints(font_path) -> set[int]:
    try:
        with TTFont(font_path, fontNumber=0, lazy=True) as font:
            cmap = font.getBestCmap()
    except Exception as exc:
        raise RenderError(f"cannot read font {font_path}: {exc}") from exc
    return set(cmap)


def _rasterize(font: ImageFont.FreeTypeFont, codepoint: int) -> np.ndarray | None:
    """Render one character; None when the outline produces no ink."""
    scratch = CANVAS * 4
    image = Image.new("L", (scratch, scratch), 0)
    ImageDraw.Draw(image).text((CANVAS, CANVAS), chr(codepoint), fill=255, font=font)
    arr = np.asarray(image)
    ys, xs = np.nonzero(arr)
    if len(ys) == 0:
        return None
    crop = arr[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    h, w = crop.shape
    if h > CANVAS or w > CANVAS:
        scale = min(CANVAS / h, CANVAS / w)
        new_size = (max(1, int(w * scale)), max(1, int(h * scale)))
        crop = np.asarray(Image.fromarray(crop).resize(new_size, Image.LANCZOS))
        h, w = crop.shape
    out = np.zeros((CANVAS, CANVAS), dtype=np.float64)
    top, left = (CANVAS - h) // 2, (CANVAS - w) // 2
    out[top:top + h, left:left + w] = crop
    out *= 255.0 / out.max()  # full dynamic range across fonts
    return np.round(out).astype(np.uint8)


def render_bank(job: RenderJob) -> RenderReport:
    """Write one PGM per renderable codepoint plus a manifest.json listing
    rendered and missing codepoints (absent from the font, or inkless)."""
    if not os.path.isfile(job.font_path):
        raise RenderError(f"font not found: {job.font_path}")
    supported = _supported_codepoints(job.font_path)
    try:
        font = ImageFont.truetype(job.font_path, job.point_size)
    except OSError as exc:
        raise RenderError(f"cannot open font {job.font_path}: {exc}") from exc

    os.makedirs(job.out_dir, exist_ok=True)
    rendered, missing = [], []
    for cp in sorted(set(job.codepoints)):
        pixels = _rasterize(font, cp) if cp in supported else None
        if pixels is None:
            missing.append(cp)
            continue
        write_pgm(os.path.join(job.out_dir, glyph_filename(cp)), pixels)
        rendered.append(cp)

    if not rendered:
        raise RenderError(f"no renderable characters among {len(job.codepoints)} requested")

    manifest = {
        "font": os.path.basename(job.font_path),
        "point_size": job.point_size,
        "canvas": job.canvas,
        "rendered": [f"{cp:04X}" for cp in rendered],
        "missing": [f"{cp:04X}" for cp in missing],
    }
    with open(os.path.join(job.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return RenderReport(rendered, missing)
