"""The embedding network: glyph CNN, Bi-LSTM + self-attention composer,
lookup tables, and the two-part skip-gram negative-sampling loss.

A word's visual vector m is built in two stages: each character image is
encoded by the CNN into a vector e, and the sequence e_1..e_n is fused by
a bidirectional LSTM whose hidden states are pooled by a learned softmax
attention. The target word itself is represented only by its lookup row;
context and negative words contribute both their lookup rows and their
composed visual vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GlyphStateError, MissingGlyphsError, ShapeError
from .glyphs import GLYPH_SIZE, GlyphBank
from .tensor.autograd import (
    Tensor, _sigmoid, concat, dot, gather, log_sigmoid, matmul, matvec,
    neg, reshape, softmax, stack_rows, take_row, tanh, tensor_mean, transpose,
)
from .tensor.nn import (
    BatchNormState, LstmParams, batchnorm2d, conv2d, linear, lstm_cell,
    maxpool2d, xavier_uniform,
)

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
CNN_KERNEL = 5
POOL = 2


@dataclass
class CharCnnParams:
    """Two conv/pool/batchnorm blocks followed by a linear projection."""

    conv1_k: Tensor
    conv1_b: Tensor
    bn1_gamma: Tensor
    bn1_beta: Tensor
    bn1: BatchNormState
    conv2_k: Tensor
    conv2_b: Tensor
    bn2_gamma: Tensor
    bn2_beta: Tensor
    bn2: BatchNormState
    lin_w: Tensor
    lin_b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, channels: tuple[int, int] = (16, 32),
             char_dim: int = 64, image_size: int = GLYPH_SIZE,
             dtype=np.float64) -> "CharCnnParams":
        c1, c2 = channels
        s1 = image_size - CNN_KERNEL + 1
        if s1 % POOL:
            raise ShapeError(f"first conv output {s1} does not pool evenly")
        s2 = s1 // POOL - CNN_KERNEL + 1
        if s2 % POOL:
            raise ShapeError(f"second conv output {s2} does not pool evenly")
        flat = c2 * (s2 // POOL) ** 2

        def t(arr, grad=True):
            return Tensor(np.asarray(arr, dtype=dtype), requires_grad=grad)

        k1 = xavier_uniform(rng, (c1, 1, CNN_KERNEL, CNN_KERNEL),
                            CNN_KERNEL * CNN_KERNEL, c1 * CNN_KERNEL * CNN_KERNEL)
        k2 = xavier_uniform(rng, (c2, c1, CNN_KERNEL, CNN_KERNEL),
                            c1 * CNN_KERNEL * CNN_KERNEL, c2 * CNN_KERNEL * CNN_KERNEL)
        lw = xavier_uniform(rng, (flat, char_dim), flat, char_dim)
        return cls(
            conv1_k=t(k1), conv1_b=t(np.zeros(c1)),
            bn1_gamma=t(np.ones(c1)), bn1_beta=t(np.zeros(c1)),
            bn1=BatchNormState.fresh(c1, dtype),
            conv2_k=t(k2), conv2_b=t(np.zeros(c2)),
            bn2_gamma=t(np.ones(c2)), bn2_beta=t(np.zeros(c2)),
            bn2=BatchNormState.fresh(c2, dtype),
            lin_w=t(lw), lin_b=t(np.zeros(char_dim)),
        )

    @property
    def char_dim(self) -> int:
        return self.lin_w.data.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        return {
            "cnn.conv1_k": self.conv1_k, "cnn.conv1_b": self.conv1_b,
            "cnn.bn1_gamma": self.bn1_gamma, "cnn.bn1_beta": self.bn1_beta,
            "cnn.conv2_k": self.conv2_k, "cnn.conv2_b": self.conv2_b,
            "cnn.bn2_gamma": self.bn2_gamma, "cnn.bn2_beta": self.bn2_beta,
            "cnn.lin_w": self.lin_w, "cnn.lin_b": self.lin_b,
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"cnn.bn1.mean": self.bn1.mean, "cnn.bn1.var": self.bn1.var,
                "cnn.bn2.mean": self.bn2.mean, "cnn.bn2.var": self.bn2.var}


def char_embed_batch(params: CharCnnParams, images: Tensor, mode: str = "train") -> Tensor:
    """Encode a batch of centered glyph images [N,1,H,W] into [N, d_char]."""
    x = conv2d(images, params.conv1_k, params.conv1_b)
    x, _ = maxpool2d(x, POOL)
    x = batchnorm2d(x, params.bn1_gamma, params.bn1_beta, params.bn1,
                    mode=mode, momentum=BN_MOMENTUM, eps=BN_EPS)
    x = conv2d(x, params.conv2_k, params.conv2_b)
    x, _ = maxpool2d(x, POOL)
    x = batchnorm2d(x, params.bn2_gamma, params.bn2_beta, params.bn2,
                    mode=mode, momentum=BN_MOMENTUM, eps=BN_EPS)
    n = x.data.shape[0]
    x = reshape(x, (n, -1))
    return linear(x, params.lin_w, params.lin_b)


def char_embed(params: CharCnnParams, image, mode: str = "eval",
               strict: bool = True) -> Tensor:
    """Encode one centered glyph image into its character vector e."""
    img = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if img.shape != (GLYPH_SIZE, GLYPH_SIZE):
        raise ShapeError(f"glyph must be {GLYPH_SIZE}x{GLYPH_SIZE}, got {img.shape}")
    if strict and img.min() >= 0.0 and img.max() > 0.0:
        # centering subtracts a strictly positive mean somewhere, so a real
        # centered glyph has negative pixels; all-zero images are exempt
        raise GlyphStateError("image does not look mean-centered (no negative pixels)")
    batch = image if isinstance(image, Tensor) else Tensor(img)
    out = char_embed_batch(params, reshape(batch, (1, 1, GLYPH_SIZE, GLYPH_SIZE)), mode)
    return take_row(out, 0)


@dataclass
class ComposerParams:
    """Bi-LSTM over character vectors plus a single-head softmax attention."""

    fwd: LstmParams
    bwd: LstmParams
    attn_u: Tensor  # [d_a, 2h]
    attn_v: Tensor  # [d_a]

    @classmethod
    def init(cls, rng: np.random.Generator, char_dim: int, hidden: int,
             attn_dim: int, dtype=np.float64) -> "ComposerParams":
        fwd = LstmParams.init(rng, char_dim, hidden, dtype=dtype)
        bwd = LstmParams.init(rng, char_dim, hidden, dtype=dtype)
        u = xavier_uniform(rng, (attn_dim, 2 * hidden), 2 * hidden, attn_dim).astype(dtype)
        v = xavier_uniform(rng, (attn_dim,), attn_dim, 1).astype(dtype)
        return cls(fwd, bwd, Tensor(u, requires_grad=True), Tensor(v, requires_grad=True))

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    def tensors(self) -> dict[str, Tensor]:
        return {
            "lstm_f.w_x": self.fwd.w_x, "lstm_f.w_h": self.fwd.w_h, "lstm_f.b": self.fwd.b,
            "lstm_b.w_x": self.bwd.w_x, "lstm_b.w_h": self.bwd.w_h, "lstm_b.b": self.bwd.b,
            "attn.u": self.attn_u, "attn.v": self.attn_v,
        }


def compose_word(params: ComposerParams, char_vecs: Tensor) -> tuple[Tensor, Tensor]:
    """Fuse character vectors [n, d_char] into (m: [2h], alpha: [n]).

    Runs the forward and backward LSTM passes, concatenates per-position
    states h_i = [h_f; h_b], scores each position with v . tanh(U h_i),
    softmaxes the scores into alpha, and returns m = sum_i alpha_i h_i.
    """
    n = char_vecs.data.shape[0]
    if n < 1:
        raise ShapeError("cannot compose an empty character sequence")
    h = params.hidden
    dtype = char_vecs.data.dtype

    def run(direction: LstmParams, order):
        states = [None] * n
        h_t = Tensor(np.zeros(h, dtype=dtype))
        c_t = Tensor(np.zeros(h, dtype=dtype))
        for i in order:
            h_t, c_t = lstm_cell(take_row(char_vecs, i), h_t, c_t, direction)
            states[i] = h_t
        return states

    hs_f = run(params.fwd, range(n))
    hs_b = run(params.bwd, range(n - 1, -1, -1))
    big_h = stack_rows([concat([hs_f[i], hs_b[i]]) for i in range(n)])  # [n, 2h]
    scores = matvec(tanh(matmul(big_h, transpose(params.attn_u))), params.attn_v)
    alpha = softmax(scores)
    m = matvec(transpose(big_h), alpha)
    return m, alpha


def compose_average(char_vecs: Tensor) -> Tensor:
    """Ablation composer: plain average of the character vectors."""
    return tensor_mean(char_vecs, axis=0)


def pair_probability(w_vec, c_vec) -> float:
    """p(observed | w, c) = sigmoid(w . c); the complement gives p(not observed)."""
    w = np.asarray(w_vec, dtype=np.float64)
    c = np.asarray(c_vec, dtype=np.float64)
    if w.shape != c.shape:
        raise ShapeError(f"vector dims disagree: {w.shape} vs {c.shape}")
    return float(_sigmoid(np.array(w @ c)))


def vcwe_loss(w: Tensor, c: Tensor, negs_c: list[Tensor], m_c: Tensor,
              negs_m: list[Tensor]) -> Tensor:
    """Two-part objective L = L1 + L2 for one training pair.

    L1 scores the target against the context's lookup vector and k negative
    lookup vectors; L2 scores it against the composed visual vectors of the
    same words. The trainer maximizes L by stepping on -L.
    """
    if len(negs_c) < 1 or len(negs_c) != len(negs_m):
        raise ShapeError("need k >= 1 negatives for both lookup and composed routes")
    l1 = log_sigmoid(dot(w, c))
    for cn in negs_c:
        l1 = l1 + log_sigmoid(neg(dot(w, cn)))
    l2 = log_sigmoid(dot(w, m_c))
    for mn in negs_m:
        l2 = l2 + log_sigmoid(neg(dot(w, mn)))
    return l1 + l2


@dataclass
class WordComposition:
    """Eval-time record of how a word was composed from its characters."""

    word_id: int
    codepoints: list[int]
    alpha: np.ndarray
    vector: np.ndarray


class VcweModel:
    """Trainable state: lookup tables plus the character pipeline.

    With ablate_cnn the glyph CNN and images are replaced by a trainable
    character vector table; with ablate_lstm the Bi-LSTM + attention is
    replaced by averaging (which forces char_dim == dim).
    """

    def __init__(self, config, vocab, bank: GlyphBank | None,
                 rng: np.random.Generator, require_glyphs: bool = True):
        self.config = config
        self.vocab = vocab
        self.char_codepoints = vocab.charset()
        self.char_index = {cp: i for i, cp in enumerate(self.char_codepoints)}
        self.word_char_ids = [
            np.asarray([self.char_index[ord(ch)] for ch in word], dtype=np.intp)
            for word in vocab.words
        ]
        dtype = np.float32 if config.precision == "single" else np.float64
        self.dtype = dtype
        dim = config.dim
        self.char_dim = dim if config.ablate_lstm else config.char_dim

        self.cnn = None
        self.char_table = None
        self.glyph_images = None
        self.mean_image = None
        if config.ablate_cnn:
            span = 0.5 / self.char_dim
            table = rng.uniform(-span, span, (len(self.char_codepoints), self.char_dim))
            self.char_table = Tensor(table.astype(dtype), requires_grad=True)
        else:
            self.cnn = CharCnnParams.init(rng, tuple(config.conv_channels),
                                          self.char_dim, dtype=dtype)
            if bank is not None:
                self.attach_glyphs(bank)
            elif require_glyphs:
                raise MissingGlyphsError(self.char_codepoints)

        if config.ablate_lstm:
            self.composer = None
        else:
            if dim % 2:
                raise ShapeError(f"dim must be even (two LSTM directions), got {dim}")
            self.composer = ComposerParams.init(rng, self.char_dim, dim // 2,
                                                config.attn_dim, dtype=dtype)

        vsize = len(vocab)
        span = 0.5 / dim
        self.w_target = rng.uniform(-span, span, (vsize, dim)).astype(dtype)
        self.w_context = np.zeros((vsize, dim), dtype=dtype)

    def attach_glyphs(self, bank: GlyphBank) -> None:
        """Stack the centered glyphs for this vocabulary's characters."""
        if not bank.centered:
            raise GlyphStateError("glyph bank must be centered before training")
        bank.require_coverage(self.char_codepoints)
        stack = np.stack([bank[cp] for cp in self.char_codepoints])
        self.glyph_images = stack[:, None, :, :].astype(self.dtype)
        self.mean_image = np.asarray(bank.mean, dtype=np.float64)

    def trainable_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.cnn is not None:
            out.update(self.cnn.tensors())
        if self.composer is not None:
            out.update(self.composer.tensors())
        if self.char_table is not None:
            out["char_table"] = self.char_table
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        if self.cnn is not None:
            out.update(self.cnn.state_arrays())
        if self.mean_image is not None:
            out["glyphs.mean"] = self.mean_image
        return out

    def char_vectors(self, char_ids: np.ndarray, mode: str = "train") -> Tensor:
        """Character vectors e for the given character indices: CNN over the
        stacked glyph images, or table rows under ablate_cnn."""
        if self.char_table is not None:
            return gather(self.char_table, char_ids)
        if self.glyph_images is None:
            raise MissingGlyphsError([self.char_codepoints[i] for i in char_ids])
        images = Tensor(self.glyph_images[char_ids])
        return char_embed_batch(self.cnn, images, mode=mode)

    def compose_indices(self, word_ids: np.ndarray, mode: str = "train") -> Tensor:
        """Composed visual vectors m for the given (unique) word ids, [n, D]."""
        char_lists = [self.word_char_ids[w] for w in word_ids]
        all_chars = np.unique(np.concatenate(char_lists))
        vectors = self.char_vectors(all_chars, mode=mode)
        local = {c: i for i, c in enumerate(all_chars)}
        composed = []
        for chars in char_lists:
            idx = np.asarray([local[c] for c in chars], dtype=np.intp)
            e_word = gather(vectors, idx)
            if self.composer is None:
                composed.append(compose_average(e_word))
            else:
                m, _ = compose_word(self.composer, e_word)
                composed.append(m)
        return stack_rows(composed)

    def compose_word_eval(self, word_id: int) -> WordComposition:
        """Deterministic eval-mode composition of one vocabulary word."""
        chars = self.word_char_ids[word_id]
        vectors = self.char_vectors(chars, mode="eval")
        if self.composer is None:
            m = compose_average(vectors)
            alpha = np.full(len(chars), 1.0 / len(chars))
        else:
            m, alpha_t = compose_word(self.composer, vectors)
            alpha = alpha_t.data.copy()
        return WordComposition(
            word_id=word_id,
            codepoints=[self.char_codepoints[i] for i in chars],
            alpha=alpha,
            vector=m.data.copy(),
        )

    def context_representation(self, word_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(lookup context vector c, composed visual vector m_c) for a word."""
        comp = self.compose_word_eval(word_id)
        return self.w_context[word_id].copy(), comp.vector
