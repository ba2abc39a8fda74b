"""Corpus pipeline: normalization, vocabulary, subsampling, pairs, negatives.

Input text must be pre-segmented (whitespace tokens, one sentence per
line). Characters outside the CJK unified range U+4E00..U+9FA5 are
stripped inside tokens; tokens that become empty are dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import EmptyVocabularyError, TextDecodeError

CJK_LOW = 0x4E00
CJK_HIGH = 0x9FA5

_NON_CJK = re.compile(f"[^{chr(CJK_LOW)}-{chr(CJK_HIGH)}]+")


class TrainingPair(NamedTuple):
    target: int
    context: int


def normalize_text(raw: str | bytes) -> list[list[str]]:
    """Reduce raw text to CJK-only tokens, one token list per input line.

    Lines whose tokens all vanish are dropped; line boundaries otherwise
    become sentence boundaries.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TextDecodeError(exc.start, exc.reason) from exc
    sentences = []
    for line in raw.splitlines():
        tokens = [t for t in (_NON_CJK.sub("", tok) for tok in line.split()) if t]
        if tokens:
            sentences.append(tokens)
    return sentences


@dataclass
class Vocabulary:
    """Word/id bijection with occurrence counts.

    Ids are assigned by descending count, ties broken by first occurrence,
    so rebuilding from the same stream is deterministic.
    """

    words: list[str]
    ids: dict[str, int]
    counts: np.ndarray  # int64, aligned with words
    total_tokens: int

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.ids

    def frequencies(self) -> np.ndarray:
        """Relative frequency f(w) of each word among surviving tokens."""
        return self.counts / self.total_tokens

    def keep_probs(self, t: float) -> np.ndarray:
        return subsample_keep_prob(self.frequencies(), t)

    def charset(self) -> list[int]:
        """Sorted unique codepoints over all vocabulary words."""
        return sorted({ord(ch) for word in self.words for ch in word})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, count in zip(self.words, self.counts):
                fh.write(f"{word}\t{int(count)}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, count = line.split("\t")
                    counts.append(int(count))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'") from exc
                words.append(word)
        if not words:
            raise EmptyVocabularyError(f"no records in {path}")
        counts = np.asarray(counts, dtype=np.int64)
        return cls(words, {w: i for i, w in enumerate(words)}, counts, int(counts.sum()))


def build_vocabulary(sentences: Iterable[Iterable[str]], min_count: int) -> Vocabulary:
    """Count tokens and keep words occurring at least min_count times."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: dict[str, int] = {}
    for sentence in sentences:
        for token in sentence:
            counts[token] = counts.get(token, 0) + 1
    first_seen = {w: i for i, w in enumerate(counts)}  # dicts preserve insertion order
    survivors = [w for w, c in counts.items() if c >= min_count]
    if not survivors:
        raise EmptyVocabularyError(
            f"empty vocabulary: no word occurs at least {min_count} times")
    survivors.sort(key=lambda w: (-counts[w], first_seen[w]))
    final = np.asarray([counts[w] for w in survivors], dtype=np.int64)
    return Vocabulary(survivors, {w: i for i, w in enumerate(survivors)},
                      final, int(final.sum()))


@dataclass
class TokenStream:
    """Sentences encoded as arrays of word ids; out-of-vocabulary tokens
    are dropped at encode time."""

    sentences: list[np.ndarray]

    @classmethod
    def encode(cls, sentences: Iterable[Iterable[str]], vocab: Vocabulary) -> "TokenStream":
        ids = vocab.ids
        encoded = []
        for sentence in sentences:
            row = [ids[t] for t in sentence if t in ids]
            if row:
                encoded.append(np.asarray(row, dtype=np.int64))
        return cls(encoded)

    def __len__(self) -> int:
        return len(self.sentences)

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for sentence in self.sentences:
                fh.write(" ".join(str(int(i)) for i in sentence) + "\n")

    @classmethod
    def load(cls, path) -> "TokenStream":
        sentences = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    sentences.append(np.asarray([int(t) for t in line.split()], dtype=np.int64))
        return cls(sentences)


def subsample_keep_prob(freq, t: float):
    """Keep probability sqrt(t/f) clamped to [0,1]; the complement of the
    word2vec-style discard probability 1 - sqrt(t/f)."""
    if t <= 0:
        raise ValueError(f"subsample threshold must be positive, got {t}")
    freq_arr = np.asarray(freq, dtype=np.float64)
    if np.any(freq_arr <= 0):
        raise ValueError("frequency must be positive")
    keep = np.minimum(1.0, np.sqrt(t / freq_arr))
    return float(keep) if np.isscalar(freq) or freq_arr.ndim == 0 else keep


@dataclass
class SamplerTable:
    """Inverse-CDF sampler over word ids for drawing negatives."""

    cumulative: np.ndarray
    power: float

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(shape)
        return np.searchsorted(self.cumulative, u, side="right").astype(np.int64)


def build_negative_table(vocab: Vocabulary, power: float = 0.75) -> SamplerTable:
    """P(w) proportional to count(w)**power (unigram distribution smoothed
    by the 3/4 exponent)."""
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    weights = vocab.counts.astype(np.float64) ** power
    probs = weights / weights.sum()
    cumulative = np.cumsum(probs)
    cumulative /= cumulative[-1]  # pin the last entry to exactly 1.0
    return SamplerTable(cumulative, power)


def sample_negatives(table: SamplerTable, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw k word ids i.i.d. from the table."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return table.sample(k, rng)


def generate_pairs(stream: TokenStream, vocab: Vocabulary, window: int,
                   t: float | None, rng: np.random.Generator) -> Iterator[TrainingPair]:
    """Yield (target, context) pairs for every context within the window.

    Each token is first kept or discarded by subsampling (t=None disables);
    the window then applies to the surviving, compacted sentence. One
    vectorized rng draw per sentence keeps the kept-token mask replayable
    from the seed.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    keep = vocab.keep_probs(t) if t is not None else None
    for sentence in stream.sentences:
        ids = sentence
        if keep is not None:
            mask = rng.random(len(ids)) < keep[ids]
            ids = ids[mask]
        n = len(ids)
        for i in range(n):
            lo = 0 if i < window else i - window
            hi = min(n, i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    yield TrainingPair(int(ids[i]), int(ids[j]))
