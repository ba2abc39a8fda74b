"""Word-similarity evaluation: Spearman correlation against human scores,
cosine nearest-neighbor queries, and embedding-file ingestion.

Dataset files are TSV: one "word1<TAB>word2<TAB>score" per line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmbeddingFormatError, EvaluationError


@dataclass
class EmbeddingMatrix:
    """Per-word vectors, row i belonging to words[i]."""

    words: list[str]
    vectors: np.ndarray  # [V, D]

    def __post_init__(self):
        if len(self.words) != self.vectors.shape[0]:
            raise EmbeddingFormatError(
                f"{len(self.words)} words but {self.vectors.shape[0]} vector rows")
        if np.isnan(self.vectors).any():
            raise EmbeddingFormatError("embedding matrix contains NaN entries")
        self.ids = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.ids

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.ids[word]]


@dataclass
class SimilarityDataset:
    """Word pairs with human relatedness scores."""

    name: str
    pairs: list[tuple[str, str, float]]

    def __post_init__(self):
        seen = set()
        for w1, w2, score in self.pairs:
            if not np.isfinite(score):
                raise EvaluationError(f"{self.name}: non-finite score for ({w1}, {w2})")
            key = frozenset((w1, w2)) if w1 != w2 else (w1, w2)
            if key in seen:
                raise EvaluationError(f"{self.name}: duplicate pair ({w1}, {w2})")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)


def load_similarity_dataset(path, name: str | None = None) -> SimilarityDataset:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise EvaluationError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                score = float(fields[2])
            except ValueError as exc:
                raise EvaluationError(f"{path}:{lineno}: bad score {fields[2]!r}") from exc
            pairs.append((fields[0], fields[1], score))
    return SimilarityDataset(name or str(path), pairs)


def cosine(u, v) -> float:
    """u.v / (|u||v|), defined only for nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise EvaluationError("cosine similarity is undefined for a zero vector")
    return float(u @ v / (nu * nv))


def _fractional_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: Pearson correlation of fractional ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise EvaluationError(f"inputs must be equal-length vectors, got {x.shape}, {y.shape}")
    if len(x) < 2:
        raise EvaluationError("need at least two observations")
    rx = _fractional_ranks(x)
    ry = _fractional_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise EvaluationError("correlation undefined: an input has constant ranks")
    return float((rx * ry).sum() / denom)


@dataclass
class SimilarityReport:
    rho: float
    evaluated: int
    skipped: int


def evaluate_similarity(emb: EmbeddingMatrix, ds: SimilarityDataset) -> SimilarityReport:
    """Spearman rho between cosine scores and human scores; pairs with
    out-of-vocabulary words are skipped and counted."""
    model_scores, human_scores = [], []
    skipped = 0
    for w1, w2, score in ds.pairs:
        if w1 not in emb or w2 not in emb:
            skipped += 1
            continue
        model_scores.append(cosine(emb.vector(w1), emb.vector(w2)))
        human_scores.append(score)
    if len(model_scores) < 2:
        raise EvaluationError(
            f"{ds.name}: only {len(model_scores)} evaluable pairs ({skipped} skipped)")
    return SimilarityReport(spearman(model_scores, human_scores),
                            len(model_scores), skipped)


def nearest_neighbors(emb: EmbeddingMatrix, word: str, k: int) -> list[tuple[str, float]]:
    """Top-k words by cosine similarity, query excluded, ties broken by id."""
    if word not in emb:
        raise EvaluationError(f"query word {word!r} is not in the vocabulary")
    if k < 1 or k >= len(emb):
        raise ValueError(f"k must be in [1, {len(emb) - 1}], got {k}")
    q = emb.vector(word)
    nq = np.linalg.norm(q)
    norms = np.linalg.norm(emb.vectors, axis=1)
    if nq == 0.0 or np.any(norms == 0.0):
        raise EvaluationError("cosine similarity is undefined for a zero vector")
    sims = emb.vectors @ q / (norms * nq)
    order = np.lexsort((np.arange(len(emb)), -sims))
    query_id = emb.ids[word]
    out = []
    for idx in order:
        if idx == query_id:
            continue
        out.append((emb.words[idx], float(sims[idx])))
        if len(out) == k:
            break
    return out


def load_embeddings(path) -> EmbeddingMatrix:
    """Read the text format written by the trainer's export."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(f"{path}: header must be '<V> <D>'")
        try:
            vsize, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise EmbeddingFormatError(f"{path}: non-numeric header") from exc
        words = []
        vectors = np.empty((vsize, dim), dtype=np.float64)
        for i in range(vsize):
            line = fh.readline()
            if not line:
                raise EmbeddingFormatError(f"{path}: expected {vsize} rows, found {i}")
            fields = line.split()
            if len(fields) != dim + 1:
                raise EmbeddingFormatError(
                    f"{path}: row {i} has {len(fields) - 1} values, expected {dim}")
            words.append(fields[0])
            try:
                vectors[i] = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}: non-numeric value in row {i}") from exc
        if fh.readline().strip():
            raise EmbeddingFormatError(f"{path}: trailing data after {vsize} rows")
    return EmbeddingMatrix(words, vectors)
