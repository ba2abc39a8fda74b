"""Training loop: pair streaming, negative draws, per-batch graphs, Adam,
checkpoints, and embedding export.

Deterministic mode is the default and is a pure function of (corpus,
glyphs, config, seed): per-epoch RNGs are derived from (seed, epoch), so
resuming from an epoch-boundary checkpoint replays the exact trajectory.
The optional async mode runs lock-free sharded workers with unsynchronized
sparse updates and is documented as nondeterministic.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import islice

import numpy as np

from .corpus import (
    SamplerTable, TokenStream, Vocabulary, build_negative_table, generate_pairs,
)
from .errors import (
    CheckpointFormatError, CheckpointVersionError, NumericError,
)
from .evaluation import EmbeddingMatrix
from .glyphs import GlyphBank
from .model import VcweModel
from .tensor.autograd import Tensor, backward, gather, log_sigmoid, mul, neg, tensor_sum
from .tensor.optim import Adam
from .tensor.serialize import pack_arrays, unpack_arrays

CHECKPOINT_MAGIC = b"VCWE1"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters and execution switches for one training run."""

    dim: int = 100
    window: int = 5
    negatives: int = 5
    subsample: float | None = 1e-5
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 5
    seed: int = 1
    min_count: int = 100
    mode: str = "deterministic"  # or "async"
    precision: str = "double"    # or "single"
    char_dim: int = 64
    attn_dim: int = 64
    conv_channels: tuple[int, int] = (16, 32)
    ablate_cnn: bool = False
    ablate_lstm: bool = False
    clip_norm: float | None = None
    workers: int = 2  # async mode only

    def validate(self) -> None:
        positive = {"dim": self.dim, "window": self.window, "negatives": self.negatives,
                    "learning_rate": self.learning_rate, "batch_size": self.batch_size,
                    "min_count": self.min_count, "char_dim": self.char_dim,
                    "attn_dim": self.attn_dim, "workers": self.workers}
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.subsample is not None and self.subsample <= 0:
            raise ValueError("subsample threshold must be positive or None")
        if self.mode not in ("deterministic", "async"):
            raise ValueError(f"mode must be deterministic or async, got {self.mode!r}")
        if self.precision not in ("double", "single"):
            raise ValueError(f"precision must be double or single, got {self.precision!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["conv_channels"] = list(self.conv_channels)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        data["conv_channels"] = tuple(data.get("conv_channels", (16, 32)))
        return cls(**data)


@dataclass
class TrainResult:
    model: VcweModel
    optimizer: Adam
    history: list[float] = field(default_factory=list)  # per-epoch mean -L per pair


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def build_model(vocab: Vocabulary, config: TrainConfig,
                bank: GlyphBank | None = None) -> VcweModel:
    config.validate()
    return VcweModel(config, vocab, bank, _rng(config.seed, 0),
                     require_glyphs=not config.ablate_cnn)


def build_optimizer(model: VcweModel, config: TrainConfig) -> Adam:
    opt = Adam(lr=config.learning_rate)
    for name, tensor in model.trainable_tensors().items():
        opt.register_dense(name, tensor)
    opt.register_table("w_target", model.w_target)
    opt.register_table("w_context", model.w_context)
    return opt


def batch_loss(model: VcweModel, targets: np.ndarray, contexts: np.ndarray,
               negatives: np.ndarray, mode: str = "train"):
    """Summed loss -L over a batch plus the touched lookup-table leaves.

    Context and negative words are deduplicated so each distinct word is
    composed once; gradient fan-out restores the per-occurrence
    contributions. Returns (loss, {table name: (unique rows, leaf tensor)}).
    """
    b = len(targets)
    k = negatives.shape[1]
    uniq_t, inv_t = np.unique(targets, return_inverse=True)
    ctxneg = np.concatenate([contexts, negatives.ravel()])
    uniq_w, inv_w = np.unique(ctxneg, return_inverse=True)
    inv_ctx, inv_neg = inv_w[:b], inv_w[b:]

    t_w = Tensor(model.w_target[uniq_t], requires_grad=True)
    t_c = Tensor(model.w_context[uniq_w], requires_grad=True)
    m_all = model.compose_indices(uniq_w, mode=mode)

    rep_t = np.repeat(inv_t, k)
    w_pos, w_neg = gather(t_w, inv_t), gather(t_w, rep_t)
    c_pos, c_neg = gather(t_c, inv_ctx), gather(t_c, inv_neg)
    m_pos, m_neg = gather(m_all, inv_ctx), gather(m_all, inv_neg)

    def scores(a, bb):
        return tensor_sum(mul(a, bb), axis=1)

    total = (tensor_sum(log_sigmoid(scores(w_pos, c_pos)))
             + tensor_sum(log_sigmoid(neg(scores(w_neg, c_neg))))
             + tensor_sum(log_sigmoid(scores(w_pos, m_pos)))
             + tensor_sum(log_sigmoid(neg(scores(w_neg, m_neg)))))
    loss = neg(total)
    return loss, {"w_target": (uniq_t, t_w), "w_context": (uniq_w, t_c)}


def _pair_batches(pair_iter, size: int):
    while True:
        chunk = list(islice(pair_iter, size))
        if not chunk:
            return
        targets = np.fromiter((p.target for p in chunk), dtype=np.int64, count=len(chunk))
        contexts = np.fromiter((p.context for p in chunk), dtype=np.int64, count=len(chunk))
        yield targets, contexts


def _train_shard(model, optimizer, shard: TokenStream, vocab, table: SamplerTable,
                 config, rng_sub, rng_neg, concurrent: bool,
                 diag: str) -> tuple[float, int]:
    """Run one worker over one sentence shard; returns (sum -L, pair count).

    Concurrent workers accumulate gradients in private maps instead of the
    shared tensors' .grad attributes; their parameter updates are applied
    unsynchronized (hogwild-style, last writer wins).
    """
    total_loss = 0.0
    total_pairs = 0
    pair_iter = generate_pairs(shard, vocab, config.window, config.subsample, rng_sub)
    for targets, contexts in _pair_batches(pair_iter, config.batch_size):
        negatives = table.sample((len(targets), config.negatives), rng_neg)
        loss, touched = batch_loss(model, targets, contexts, negatives, mode="train")
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss ({value}) at {diag}, "
                               f"batch starting with pair {int(targets[0])}->{int(contexts[0])}")
        grad_map: dict | None = {} if concurrent else None
        backward(loss, grad_map=grad_map)
        updates = {}
        for name, (rows, leaf) in touched.items():
            grad = grad_map.get(id(leaf)) if grad_map is not None else leaf.grad
            if grad is not None:
                updates[name] = (rows, grad)
        optimizer.step(table_updates=updates, grad_map=grad_map,
                       clip_norm=config.clip_norm)
        optimizer.zero_grad()
        total_loss += value
        total_pairs += len(targets)
    return total_loss, total_pairs


def run_epochs(model: VcweModel, optimizer: Adam, stream: TokenStream,
               config: TrainConfig, first_epoch: int, last_epoch: int,
               log=None) -> list[float]:
    """Train over epochs [first_epoch, last_epoch); returns per-epoch mean -L."""
    vocab = model.vocab
    table = build_negative_table(vocab)
    history = []
    for epoch in range(first_epoch, last_epoch):
        if config.mode == "async":
            shards = [TokenStream(stream.sentences[w::config.workers])
                      for w in range(config.workers)]
            shards = [s for s in shards if len(s)]
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = [
                    pool.submit(_train_shard, model, optimizer, shard, vocab, table,
                                config, _rng(config.seed, 1, epoch, 2 * w),
                                _rng(config.seed, 1, epoch, 2 * w + 1), True,
                                f"epoch {epoch} worker {w}")
                    for w, shard in enumerate(shards)
                ]
                results = [f.result() for f in futures]
            loss_sum = sum(r[0] for r in results)
            pairs = sum(r[1] for r in results)
        else:
            loss_sum, pairs = _train_shard(
                model, optimizer, stream, vocab, table, config,
                _rng(config.seed, 1, epoch, 0), _rng(config.seed, 1, epoch, 1),
                False, f"epoch {epoch}")
        mean = loss_sum / pairs if pairs else float("nan")
        history.append(mean)
        if log is not None:
            log(f"epoch {epoch} loss {mean:.6f}")
    return history


def train(vocab: Vocabulary, stream: TokenStream, config: TrainConfig,
          bank: GlyphBank | None = None, log=None) -> TrainResult:
    """Train a fresh model for config.epochs epochs."""
    model = build_model(vocab, config, bank)
    optimizer = build_optimizer(model, config)
    history = run_epochs(model, optimizer, stream, config, 0, config.epochs, log=log)
    return TrainResult(model, optimizer, history)


# -- checkpointing -------------------------------------------------------

def _checkpoint_arrays(model: VcweModel, optimizer: Adam) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.trainable_tensors().items():
        arrays[f"param.{name}"] = tensor.data
    arrays["table.w_target"] = model.w_target
    arrays["table.w_context"] = model.w_context
    for name, value in model.state_arrays().items():
        arrays[f"state.{name}"] = value
    for name, (_, st) in optimizer.dense.items():
        arrays[f"adam.{name}.m"] = st.m
        arrays[f"adam.{name}.v"] = st.v
    for name, (_, st) in optimizer.tables.items():
        arrays[f"adam.{name}.m"] = st.m
        arrays[f"adam.{name}.v"] = st.v
    return arrays


def save_checkpoint(path, model: VcweModel, optimizer: Adam, epochs_done: int) -> None:
    """Versioned checkpoint: magic, manifest length, JSON manifest, blobs."""
    manifest_entries, blob = pack_arrays(_checkpoint_arrays(model, optimizer))
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "vocabulary": {"words": model.vocab.words,
                       "counts": [int(c) for c in model.vocab.counts]},
        "epochs_done": int(epochs_done),
        "adam_step": int(optimizer.step_count),
        "tensors": manifest_entries,
    }
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(blob)


def load_checkpoint(path, bank: GlyphBank | None = None):
    """Rebuild (model, optimizer, epochs_done) from a checkpoint file.

    A raw glyph bank, when given, is centered with the stored mean image so
    resumed training matches the original trajectory; without a bank the
    model can export embeddings but not compose words through the CNN.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointVersionError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise CheckpointFormatError("truncated header")
        (payload_len,) = struct.unpack("<Q", raw_len)
        payload = fh.read(payload_len)
        if len(payload) != payload_len:
            raise CheckpointFormatError("truncated manifest")
        blob = fh.read()
    try:
        header = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"manifest is not valid JSON: {exc}") from exc
    version = header.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"version {version!r} unsupported, "
                                     f"expected {CHECKPOINT_VERSION}")
    config = TrainConfig.from_dict(header["config"])
    words = header["vocabulary"]["words"]
    counts = np.asarray(header["vocabulary"]["counts"], dtype=np.int64)
    vocab = Vocabulary(words, {w: i for i, w in enumerate(words)}, counts,
                       int(counts.sum()))
    arrays = unpack_arrays(header["tensors"], blob)

    model = VcweModel(config, vocab, None, _rng(config.seed, 0), require_glyphs=False)
    for name, tensor in model.trainable_tensors().items():
        tensor.data = arrays[f"param.{name}"].astype(model.dtype, copy=False)
    model.w_target = arrays["table.w_target"].astype(model.dtype, copy=False)
    model.w_context = arrays["table.w_context"].astype(model.dtype, copy=False)
    if model.cnn is not None:
        model.cnn.bn1.mean = arrays["state.cnn.bn1.mean"]
        model.cnn.bn1.var = arrays["state.cnn.bn1.var"]
        model.cnn.bn2.mean = arrays["state.cnn.bn2.mean"]
        model.cnn.bn2.var = arrays["state.cnn.bn2.var"]
    if "state.glyphs.mean" in arrays:
        model.mean_image = arrays["state.glyphs.mean"]
    if bank is not None and model.cnn is not None:
        centered = bank if bank.centered else bank.center(mean=model.mean_image)
        model.attach_glyphs(centered)

    optimizer = build_optimizer(model, config)
    step = int(header.get("adam_step", 0))
    for name, (_, st) in optimizer.dense.items():
        st.m = arrays[f"adam.{name}.m"]
        st.v = arrays[f"adam.{name}.v"]
        st.step = step
    for name, (_, st) in optimizer.tables.items():
        st.m = arrays[f"adam.{name}.m"]
        st.v = arrays[f"adam.{name}.v"]
        st.step = step
    return model, optimizer, int(header["epochs_done"])


# -- embedding export ----------------------------------------------------

def write_embedding_file(words: list[str], vectors: np.ndarray, path) -> None:
    """Text format: '<V> <D>' header, then one 'word v1 .. vD' line per word."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {vectors.shape[1]}\n")
        for word, row in zip(words, vectors):
            fh.write(word + " " + " ".join(f"{x:.6f}" for x in row) + "\n")


def export_embeddings(model: VcweModel, path) -> None:
    """Write the target lookup table (the final word embeddings)."""
    write_embedding_file(model.vocab.words, np.asarray(model.w_target, dtype=np.float64),
                         path)


def embedding_matrix(model: VcweModel) -> EmbeddingMatrix:
    return EmbeddingMatrix(list(model.vocab.words),
                           np.asarray(model.w_target, dtype=np.float64).copy())
