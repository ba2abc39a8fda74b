"""Offline glyph rasterizer producing the 40x40 PGM glyph-bank format."""

from .render import (
    CharsetError, RenderError, RenderJob, RenderReport, extract_charset,
    glyph_filename, render_bank,
)

__version__ = "0.1.0"
