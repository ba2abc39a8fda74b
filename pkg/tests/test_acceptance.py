"""Acceptance suite: one test per acceptance criterion, each printing a
PASS line (run with `pytest -s tests/test_acceptance.py` to see them).
"""

import sys
import time

import numpy as np
import pytest
from scipy import stats

from vcwe.cli import main
from vcwe.corpus import build_negative_table, build_vocabulary, sample_negatives, subsample_keep_prob
from vcwe.evaluation import cosine, spearman
from vcwe.glyphs import synth_bank
from vcwe.model import vcwe_loss
from vcwe.tensor.autograd import (
    Tensor, backward, add, dot, log_sigmoid, matvec, mul, sigmoid, softmax,
    tanh, tensor_sum,
)
from vcwe.tensor.nn import (
    BatchNormState, LstmParams, batchnorm2d, conv2d, linear, lstm_cell, maxpool2d,
)
from vcwe.trainer import (
    TrainConfig, batch_loss, build_model, run_epochs,
    save_checkpoint, load_checkpoint, train, export_embeddings,
)

from fdcheck import assert_grads_close, numeric_grad
from test_evaluation import spearman_oracle
from toycorpus import GROUP_A, GROUP_B, make_corpus

RTOL = 1e-4
H = 1e-5


def report(name):
    print(f"[PASS] {name}", file=sys.stderr)


def toy_loss_setup():
    """Toy configuration pinned by the criterion: D=8, d_char=6, h=4, k=2."""
    config = TrainConfig(dim=8, char_dim=6, attn_dim=5, conv_channels=(2, 3),
                         negatives=2, min_count=1, seed=21, subsample=None)
    words = ["一", "二三", "四五六", "七八", "九"]
    vocab = build_vocabulary([words * 3], min_count=1)
    bank = synth_bank(vocab.charset(), seed=13).center()
    model = build_model(vocab, config, bank)
    targets = np.array([0, 3])
    contexts = np.array([2, 1])
    negatives = np.array([[4, 1], [0, 0]])  # includes negative == context cases
    return model, targets, contexts, negatives


def test_acceptance_gradient_integrity():
    started = time.time()
    rng = np.random.default_rng(77)

    def leaf(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    def check(params, build):
        out = build()
        backward(out)
        analytic = [p.grad for p in params]

        def f():
            return float(build().data)

        assert_grads_close(analytic, numeric_grad(f, [p.data for p in params], h=H),
                           rtol=RTOL)
        for p in params:
            p.grad = None

    # elementwise, reductions, linear algebra
    x = leaf(6)
    probe = Tensor(rng.standard_normal(6))
    for op in (tanh, sigmoid, log_sigmoid, softmax):
        check([x], lambda op=op: tensor_sum(mul(op(x), probe)))
    a, b = leaf(4, 3), leaf(4, 3)
    probe2 = Tensor(rng.standard_normal((4, 3)))
    check([a, b], lambda: tensor_sum(mul(add(a, b), probe2)))
    check([a, b], lambda: tensor_sum(mul(mul(a, b), probe2)))
    mat, vec = leaf(3, 5), leaf(5)
    probe3 = Tensor(rng.standard_normal(3))
    check([mat, vec], lambda: tensor_sum(mul(matvec(mat, vec), probe3)))
    u, v = leaf(7), leaf(7)
    check([u, v], lambda: dot(u, v))

    # layers
    xl, wl, bl = leaf(3, 4), leaf(4, 2), leaf(2)
    probe_l = Tensor(rng.standard_normal((3, 2)))
    check([xl, wl, bl], lambda: tensor_sum(mul(linear(xl, wl, bl), probe_l)))

    xc, kc, bc = leaf(2, 1, 6, 6), leaf(2, 1, 3, 3), leaf(2)
    probe_c = Tensor(rng.standard_normal((2, 2, 4, 4)))
    check([xc, kc, bc], lambda: tensor_sum(mul(conv2d(xc, kc, bc), probe_c)))

    xp = leaf(1, 2, 4, 4)
    probe_p = Tensor(rng.standard_normal((1, 2, 2, 2)))
    check([xp], lambda: tensor_sum(mul(maxpool2d(xp, 2, 2)[0], probe_p)))

    xb, gb, bb = leaf(2, 2, 3, 3), leaf(2), leaf(2)
    probe_b = Tensor(rng.standard_normal((2, 2, 3, 3)))
    bn_state = BatchNormState(rng.standard_normal(2), rng.uniform(0.5, 2.0, 2))
    for mode in ("train", "eval"):
        check([xb, gb, bb],
              lambda mode=mode: tensor_sum(mul(
                  batchnorm2d(xb, gb, bb,
                              BatchNormState(bn_state.mean.copy(), bn_state.var.copy()),
                              mode=mode), probe_b)))

    lp = LstmParams.init(rng, 3, 4)
    xt, hp, cp = leaf(3), leaf(4), leaf(4)
    probe_h, probe_cc = Tensor(rng.standard_normal(4)), Tensor(rng.standard_normal(4))

    def lstm_build():
        hh, cc = lstm_cell(xt, hp, cp, lp)
        return add(tensor_sum(mul(hh, probe_h)), tensor_sum(mul(cc, probe_cc)))

    check([xt, hp, cp, lp.w_x, lp.w_h, lp.b], lstm_build)

    # full composed loss through CNN, Bi-LSTM, attention, and both tables
    model, targets, contexts, negatives = toy_loss_setup()
    loss, touched = batch_loss(model, targets, contexts, negatives, mode="train")
    backward(loss)

    params = model.trainable_tensors()
    arrays = [t.data for t in params.values()]
    analytic = [t.grad for t in params.values()]
    assert all(g is not None for g in analytic), "a parameter group got no gradient"
    for name in ("w_target", "w_context"):
        rows, leaf_t = touched[name]
        table = model.w_target if name == "w_target" else model.w_context
        for j, row in enumerate(rows):
            arrays.append(table[row])        # row view: perturbed in place
            analytic.append(leaf_t.grad[j])

    def f():
        l, _ = batch_loss(model, targets, contexts, negatives, mode="train")
        return l.item()

    assert_grads_close(analytic, numeric_grad(f, arrays, h=H), rtol=RTOL)

    elapsed = time.time() - started
    assert elapsed < 60.0, f"gradient-integrity suite took {elapsed:.1f}s"
    report(f"gradient integrity (ops + full loss, {elapsed:.1f}s)")


def test_acceptance_loss_value_oracle():
    d = 8
    w = Tensor(np.zeros(d))
    vec = Tensor(np.ones(d))
    negs = [vec] * 5
    loss = vcwe_loss(w, vec, negs, vec, negs)
    assert abs(loss.item() - 12.0 * np.log(0.5)) <= 1e-12
    report("loss value oracle: 12*log(0.5) at zero dot products, k=5")


def test_acceptance_attention_contract():
    from vcwe.model import ComposerParams, compose_word
    from vcwe.tensor.autograd import concat

    rng = np.random.default_rng(5)
    params = ComposerParams.init(rng, char_dim=6, hidden=4, attn_dim=5)
    for n in range(1, 7):
        vecs = Tensor(rng.standard_normal((n, 6)))
        m, alpha = compose_word(params, vecs)
        assert (alpha.data >= 0).all()
        assert abs(alpha.data.sum() - 1.0) <= 1e-9
        if n == 1:
            h_f, _ = lstm_cell(Tensor(vecs.data[0]), Tensor(np.zeros(4)),
                               Tensor(np.zeros(4)), params.fwd)
            h_b, _ = lstm_cell(Tensor(vecs.data[0]), Tensor(np.zeros(4)),
                               Tensor(np.zeros(4)), params.bwd)
            h1 = concat([h_f, h_b]).data
            assert (m.data == h1).all(), "n=1 composition must equal h_1 exactly"
    report("attention contract: distribution for n in 1..6; n=1 gives m = h_1")


def test_acceptance_sampler_fidelity():
    rng = np.random.default_rng(3)
    counts = {chr(0x4E00 + i): int(c) for i, c in enumerate(rng.integers(5, 400, size=10))}
    vocab = build_vocabulary([[w] * c for w, c in counts.items()], min_count=1)
    table = build_negative_table(vocab, power=0.75)
    probs = np.diff(table.cumulative, prepend=0.0)

    n = 100_000
    draws = sample_negatives(table, n, np.random.default_rng(64))
    observed = np.bincount(draws, minlength=10)
    chi2 = float(((observed - n * probs) ** 2 / (n * probs)).sum())
    critical = float(stats.chi2.ppf(1 - 0.001, df=9))
    assert chi2 < critical, f"chi2={chi2:.2f} >= {critical:.2f}"

    t = 1e-5
    assert subsample_keep_prob(t, t) == 1.0
    assert abs(subsample_keep_prob(4 * t, t) - 0.5) <= 1e-15
    assert subsample_keep_prob(t / 2, t) == 1.0
    report(f"sampler fidelity: chi2 {chi2:.1f} < {critical:.1f}; keep-prob spot checks")


def test_acceptance_spearman_oracle():
    assert spearman([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == pytest.approx(1.0, abs=1e-15)
    assert spearman([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0, abs=1e-15)
    assert spearman([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-15)

    rng = np.random.default_rng(17)
    checked = 0
    while checked < 100:
        x = rng.integers(0, 10, size=50).astype(float)  # heavy ties
        y = x + rng.integers(-3, 4, size=50)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert abs(spearman(x, y) - spearman_oracle(x, y)) <= 1e-12
        checked += 1
    report("spearman oracle: fixed cases and 100 random tied datasets within 1e-12")


def test_acceptance_toy_corpus_semantics():
    started = time.time()
    vocab, stream = make_corpus(n_sentences=500, seed=202)
    config = TrainConfig(dim=16, char_dim=12, attn_dim=8, conv_channels=(4, 8),
                         negatives=3, subsample=None, batch_size=64, epochs=10,
                         seed=7, min_count=1, learning_rate=0.005)
    bank = synth_bank(vocab.charset(), config.seed).center()
    result = train(vocab, stream, config, bank=bank)
    elapsed = time.time() - started

    assert result.history[9] < result.history[0], (
        f"no optimization progress: {result.history[0]:.4f} -> {result.history[9]:.4f}")

    weights = result.model.w_target
    ids = vocab.ids

    def mean_cos(words_a, words_b):
        values = []
        for i, w1 in enumerate(words_a):
            rest = words_a[i + 1:] if words_a is words_b else words_b
            values.extend(cosine(weights[ids[w1]], weights[ids[w2]]) for w2 in rest)
        return float(np.mean(values))

    within = (mean_cos(GROUP_A, GROUP_A) + mean_cos(GROUP_B, GROUP_B)) / 2.0
    cross = mean_cos(GROUP_A, GROUP_B)
    assert within - cross >= 0.1, f"margin {within - cross:.4f} < 0.1"
    assert elapsed < 300.0, f"toy training took {elapsed:.0f}s"
    report(f"toy-corpus semantics: margin {within - cross:.3f}, "
           f"loss {result.history[0]:.3f}->{result.history[9]:.3f}, {elapsed:.0f}s")


def test_acceptance_determinism(tmp_path):
    vocab, stream = make_corpus(n_sentences=60, seed=77)
    config = TrainConfig(dim=8, char_dim=6, attn_dim=5, conv_channels=(2, 3),
                         negatives=2, subsample=1e-2, batch_size=32, epochs=2,
                         seed=3, min_count=1)

    def bank():
        return synth_bank(vocab.charset(), config.seed).center()

    files = {}
    for tag in ("a", "b"):
        result = train(vocab, stream, config, bank=bank())
        ckpt, emb = tmp_path / f"{tag}.ckpt", tmp_path / f"{tag}.txt"
        save_checkpoint(ckpt, result.model, result.optimizer, config.epochs)
        export_embeddings(result.model, emb)
        files[tag] = (ckpt.read_bytes(), emb.read_bytes())
    assert files["a"] == files["b"], "identical runs must be byte-identical"

    # resume from an epoch boundary reproduces the uninterrupted trajectory
    full = train(vocab, stream, config, bank=bank())
    half_cfg = TrainConfig(**{**config.to_dict(), "epochs": 1,
                              "conv_channels": config.conv_channels})
    half = train(vocab, stream, half_cfg, bank=bank())
    ckpt = tmp_path / "half.ckpt"
    save_checkpoint(ckpt, half.model, half.optimizer, 1)
    model, optimizer, done = load_checkpoint(ckpt, bank=synth_bank(vocab.charset(),
                                                                   config.seed))
    run_epochs(model, optimizer, stream, model.config, done, 2)
    np.testing.assert_array_equal(model.w_target, full.model.w_target)
    np.testing.assert_array_equal(model.w_context, full.model.w_context)
    for name, tensor in full.model.trainable_tensors().items():
        np.testing.assert_array_equal(model.trainable_tensors()[name].data, tensor.data)
    report("determinism: byte-identical runs; bit-exact checkpoint resume")


def test_acceptance_ablation_hooks(tmp_path):
    corpus_path = tmp_path / "corpus.txt"
    from toycorpus import make_sentences
    corpus_path.write_text(
        "\n".join(" ".join(s) for s in make_sentences(60, seed=88)) + "\n",
        encoding="utf-8")
    prep = tmp_path / "prep"
    assert main(["preprocess", "--corpus", str(corpus_path), "--out", str(prep),
                 "--min-count", "1"]) == 0

    flags = ["--dim", "8", "--char-dim", "6", "--attn-dim", "5", "--negatives", "2",
             "--batch-size", "32", "--epochs", "1", "--seed", "9", "--no-subsample"]
    outputs = {}
    for tag, extra in {"full": [], "nocnn": ["--ablate-cnn"],
                       "nolstm": ["--ablate-lstm"]}.items():
        out = tmp_path / tag
        assert main(["train", "--prep", str(prep), "--synthetic-glyphs",
                     "--out", str(out), *flags, *extra]) == 0
        outputs[tag] = (out / "embeddings.txt").read_bytes()
    assert outputs["full"] != outputs["nocnn"]
    assert outputs["full"] != outputs["nolstm"]
    assert outputs["nocnn"] != outputs["nolstm"]
    report("ablation hooks: -CNN and -LSTM variants train and differ")
