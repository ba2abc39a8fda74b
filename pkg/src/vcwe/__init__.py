"""Visual character-enhanced Chinese word embeddings.

Glyph images are encoded by a small CNN, composed into word vectors by a
Bi-LSTM with self-attention, and trained under a skip-gram
negative-sampling objective on its own reverse-mode autodiff core.
"""

from .corpus import (
    SamplerTable, TokenStream, TrainingPair, Vocabulary, build_negative_table,
    build_vocabulary, generate_pairs, normalize_text, sample_negatives,
    subsample_keep_prob,
)
from .evaluation import (
    EmbeddingMatrix, SimilarityDataset, cosine, evaluate_similarity,
    load_embeddings, load_similarity_dataset, nearest_neighbors, spearman,
)
from .glyphs import (
    GlyphBank, center_bank, load_glyph_bank, synth_bank, synth_glyph,
)
from .model import (
    CharCnnParams, ComposerParams, VcweModel, WordComposition, char_embed,
    compose_word, pair_probability, vcwe_loss,
)
from .trainer import (
    TrainConfig, TrainResult, export_embeddings, load_checkpoint,
    save_checkpoint, train,
)

__version__ = "0.1.0"
