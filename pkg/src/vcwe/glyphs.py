"""40x40 grayscale character images: loading, centering, synthesis.

Files are binary PGM (P5, maxval 255), one per character, named by the
uppercase hex codepoint (e.g. 4F11.pgm). Intensity convention: 0 is
background, 1 is ink, so the network sees strokes as positive signal.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import GlyphDimensionError, GlyphFormatError, GlyphStateError, MissingGlyphsError

GLYPH_SIZE = 40


def glyph_filename(codepoint: int) -> str:
    return f"{codepoint:04X}.pgm"


def _next_token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    # PGM headers allow whitespace and '#' comments between tokens
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise GlyphFormatError(f"{path}: truncated header")
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Parse a binary PGM into a float array scaled to [0,1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _next_token(buf, 0, path)
    if magic != b"P5":
        raise GlyphFormatError(f"{path}: expected P5 magic, found {magic!r}")
    fields = []
    for _ in range(3):
        token, pos = _next_token(buf, pos, path)
        if not token.isdigit():
            raise GlyphFormatError(f"{path}: non-numeric header field {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise GlyphFormatError(f"{path}: maxval must be 255, found {maxval}")
    if (width, height) != (GLYPH_SIZE, GLYPH_SIZE):
        raise GlyphDimensionError(f"{path}: expected {GLYPH_SIZE}x{GLYPH_SIZE}, "
                                  f"found {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    data = buf[pos:]
    if len(data) != width * height:
        raise GlyphFormatError(f"{path}: expected {width * height} data bytes, "
                               f"found {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64) / 255.0


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write intensities in [0,1] as a binary PGM (maxval 255)."""
    if pixels.shape != (GLYPH_SIZE, GLYPH_SIZE):
        raise GlyphDimensionError(f"cannot write shape {pixels.shape} as a glyph")
    if pixels.min() < 0.0 or pixels.max() > 1.0:
        raise ValueError("pixel intensities must lie in [0,1] before writing")
    raw = np.round(pixels * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (GLYPH_SIZE, GLYPH_SIZE))
        fh.write(raw.tobytes())


@dataclass
class GlyphBank:
    """Codepoint-indexed glyph images, optionally mean-centered."""

    images: dict[int, np.ndarray]
    mean: np.ndarray | None = field(default=None)

    @property
    def centered(self) -> bool:
        return self.mean is not None

    def __len__(self) -> int:
        return len(self.images)

    def __contains__(self, codepoint: int) -> bool:
        return codepoint in self.images

    def __getitem__(self, codepoint: int) -> np.ndarray:
        return self.images[codepoint]

    def missing(self, codepoints) -> list[int]:
        return sorted(cp for cp in set(codepoints) if cp not in self.images)

    def require_coverage(self, codepoints) -> None:
        gaps = self.missing(codepoints)
        if gaps:
            raise MissingGlyphsError(gaps)

    def center(self, mean: np.ndarray | None = None) -> "GlyphBank":
        """Return a bank with the mean image subtracted from every glyph.

        The mean is computed over this bank unless an explicit one is given
        (checkpoint resume must reuse the training-time mean).
        """
        if self.centered:
            raise GlyphStateError("glyph bank is already centered")
        if not self.images:
            raise GlyphStateError("cannot center an empty glyph bank")
        codepoints = sorted(self.images)
        if mean is None:
            mean = np.zeros((GLYPH_SIZE, GLYPH_SIZE))
            for cp in codepoints:
                mean += self.images[cp]
            mean /= len(codepoints)
        centered = {cp: self.images[cp] - mean for cp in codepoints}
        return GlyphBank(centered, mean)

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        if self.centered:
            raise GlyphStateError("only raw (uncentered) banks can be saved as PGM")
        for cp, pixels in self.images.items():
            write_pgm(os.path.join(directory, glyph_filename(cp)), pixels)


def load_glyph_bank(directory) -> GlyphBank:
    """Load every *.pgm file in the directory, keyed by hex-codepoint name."""
    images = {}
    for name in sorted(os.listdir(directory)):
        if not name.lower().endswith(".pgm"):
            continue
        stem = name[:-4]
        try:
            codepoint = int(stem, 16)
        except ValueError as exc:
            raise GlyphFormatError(f"{name}: filename is not a hex codepoint") from exc
        images[codepoint] = read_pgm(os.path.join(directory, name))
    return GlyphBank(images)


def center_bank(bank: GlyphBank) -> GlyphBank:
    """Functional form of GlyphBank.center()."""
    return bank.center()


def synth_glyph(codepoint: int, seed: int) -> np.ndarray:
    """Deterministic pseudo-glyph: a few random strokes seeded by
    (codepoint, seed). A stand-in for real font rendering in tests and
    the --synthetic-glyphs training path.

    Values are quantized to the 8-bit grid so banks round-trip through
    PGM files bit-exactly.
    """
    rng = np.random.default_rng([int(codepoint), int(seed)])
    img = np.zeros((GLYPH_SIZE, GLYPH_SIZE))
    for _ in range(int(rng.integers(2, 5))):  # horizontal strokes
        r = int(rng.integers(2, GLYPH_SIZE - 5))
        thickness = int(rng.integers(2, 4))
        a, b = np.sort(rng.integers(1, GLYPH_SIZE - 1, size=2))
        img[r:r + thickness, a:b + 2] = rng.uniform(0.55, 1.0)
    for _ in range(int(rng.integers(2, 5))):  # vertical strokes
        c = int(rng.integers(2, GLYPH_SIZE - 5))
        thickness = int(rng.integers(2, 4))
        a, b = np.sort(rng.integers(1, GLYPH_SIZE - 1, size=2))
        img[a:b + 2, c:c + thickness] = rng.uniform(0.55, 1.0)
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255.0) / 255.0


def synth_bank(codepoints, seed: int) -> GlyphBank:
    """A bank of synthetic glyphs for the given codepoints."""
    return GlyphBank({cp: synth_glyph(cp, seed) for cp in sorted(set(codepoints))})
