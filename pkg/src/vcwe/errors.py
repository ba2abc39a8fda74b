"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/validation problems exit 1,
data/coverage problems exit 2, numeric failures exit 3.
"""


class VcweError(Exception):
    """Base class for all errors raised by this package."""


class TextDecodeError(VcweError):
    """Corpus bytes are not valid UTF-8; carries the offending byte offset."""

    def __init__(self, offset: int, reason: str):
        self.offset = offset
        super().__init__(f"invalid UTF-8 at byte offset {offset}: {reason}")


class EmptyVocabularyError(VcweError):
    """No word survived the min-count threshold."""


class GlyphFormatError(VcweError):
    """A glyph file is not a well-formed binary PGM."""


class GlyphDimensionError(VcweError):
    """A glyph image does not have the required 40x40 shape."""


class GlyphStateError(VcweError):
    """Glyph bank used in the wrong state (e.g. centered twice)."""


class MissingGlyphsError(VcweError):
    """Vocabulary characters absent from the glyph bank."""

    def __init__(self, codepoints):
        self.codepoints = sorted(codepoints)
        listing = " ".join(f"U+{cp:04X}" for cp in self.codepoints)
        super().__init__(f"{len(self.codepoints)} character(s) missing from glyph bank: {listing}")


class ShapeError(VcweError):
    """Tensor operands have incompatible shapes."""


class NumericError(VcweError):
    """A non-finite value (NaN/Inf) appeared where finite values are required."""


class CheckpointFormatError(VcweError):
    """Checkpoint file is malformed or truncated."""


class CheckpointVersionError(VcweError):
    """Checkpoint magic/version does not match this code."""


class EmbeddingFormatError(VcweError):
    """Embedding text file violates the '<V> <D>' header + rows format."""


class EvaluationError(VcweError):
    """Evaluation cannot proceed (too few pairs, OOV query, zero vector...)."""
