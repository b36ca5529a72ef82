"""Tests for the three classifiers and SGD training."""

import numpy as np
import pytest

from alden import autodiff as ad
from alden.data import Sentence, SyntheticPoint, region_of
from alden.models import Model, ModelConfig, NumericalError, TrainConfig, train_model
from alden.seeding import rng


def point(i, x1, x2, label):
    return SyntheticPoint(id=i, x=(x1, x2), label=label, region=region_of(x1, x2))


def text_config(vocab=30, **kw):
    defaults = dict(kind="cnn", hidden=8, embedding_dim=6, vocab_size=vocab, dropout=0.0)
    defaults.update(kw)
    return ModelConfig(**defaults)


def random_sentences(n, vocab, gen, min_len=1, max_len=12, labeled=True):
    out = []
    for i in range(n):
        length = int(gen.integers(min_len, max_len + 1))
        tokens = tuple(int(t) for t in gen.integers(1, vocab, size=length))
        out.append(Sentence(id=i, tokens=tokens, label=int(gen.integers(2)) if labeled else None))
    return out


class TestForward:
    def test_zero_output_layer_gives_half(self):
        model = Model.build(text_config(), seed=0)
        model.params["out_w"].values[:] = 0.0
        s = Sentence(id=0, tokens=(2, 3, 4, 5, 6, 7), label=None)
        assert model.forward(s).values == 0.0
        assert model.predict_proba([s])[0] == 0.5

    def test_single_linear_layer_logit(self):
        model = Model.build(ModelConfig(kind="mlp2d", hidden=2, dropout=0.0), seed=0)
        # wire an identity-like path: relu(h) passes positives through
        model.params["w1"].values[:] = np.eye(2)
        model.params["b1"].values[:] = 0.0
        model.params["out_w"].values[:] = np.array([[1.0], [2.0]])
        model.params["out_b"].values[:] = 0.0
        p = point(0, 1.0, 1.0, 1)
        assert model.forward(p).values == pytest.approx(3.0)

    def test_eval_forward_deterministic(self):
        model = Model.build(text_config(dropout=0.5), seed=1)
        s = Sentence(id=0, tokens=(3, 4, 5, 9, 9), label=None)
        assert model.forward(s).values == model.forward(s).values

    def test_short_sentence_padded_for_cnn(self):
        model = Model.build(text_config(), seed=0)
        s = Sentence(id=0, tokens=(4,), label=None)
        logit = model.forward(s)  # padded to the largest filter width
        assert np.isfinite(logit.values)

    def test_batched_forward_matches_single(self):
        model = Model.build(text_config(kind="meanpool"), seed=2)
        gen = np.random.default_rng(0)
        sents = random_sentences(12, 30, gen, min_len=4, max_len=4, labeled=False)
        logits, _ = model.forward_batch(sents)
        for s, z in zip(sents, logits.values):
            assert abs(float(model.forward(s).values) - z) < 1e-12

    def test_empty_tokens_rejected(self):
        model = Model.build(text_config(), seed=0)
        with pytest.raises(ValueError, match="no tokens"):
            model.forward(Sentence(id=0, tokens=(), label=None))

    def test_train_mode_needs_rng(self):
        model = Model.build(text_config(dropout=0.5), seed=0)
        with pytest.raises(ValueError, match="rng"):
            model.forward(Sentence(id=0, tokens=(2, 3, 4, 5, 6), label=None), mode="train")


class TestTraining:
    def test_separable_2d_reaches_full_accuracy(self):
        data = [point(0, -1.0, 0.0, 0), point(1, 1.0, 0.0, 1),
                point(2, -2.0, 0.5, 0), point(3, 2.0, -0.5, 1)]
        model = Model.build(ModelConfig(kind="mlp2d", hidden=16, dropout=0.0), seed=0)
        train_model(model, data, TrainConfig(lr=0.1, epochs=200, batch_size=4, seed=0))
        assert model.accuracy(data) == 1.0

    def test_zero_epochs_is_noop(self):
        model = Model.build(text_config(), seed=3)
        before = {k: v.values.copy() for k, v in model.params.items()}
        gen = np.random.default_rng(1)
        train_model(model, random_sentences(5, 30, gen),
                    TrainConfig(epochs=0, seed=3, reinit=True))
        for k, v in model.params.items():
            assert np.array_equal(before[k], v.values), k

    def test_bitwise_deterministic(self):
        gen = np.random.default_rng(2)
        data = random_sentences(20, 30, gen)
        thetas = []
        for _ in range(2):
            model = Model.build(text_config(dropout=0.5), seed=4)
            train_model(model, data, TrainConfig(epochs=3, seed=7))
            thetas.append({k: v.values.copy() for k, v in model.params.items()})
        for k in thetas[0]:
            assert np.array_equal(thetas[0][k], thetas[1][k]), k

    def test_loss_non_increasing_full_batch(self):
        # separable toy set, small lr, full batch: epoch loss must not rise
        data = [point(0, -1.0, 0.2, 0), point(1, 1.0, -0.1, 1),
                point(2, -0.5, 0.4, 0), point(3, 0.8, 0.3, 1)]
        model = Model.build(ModelConfig(kind="mlp2d", hidden=8, dropout=0.0), seed=1)
        losses = []
        for _ in range(40):
            logits = model.predict_logits(data)
            labels = np.array([p.label for p in data], dtype=np.float64)
            losses.append(float(np.mean(np.maximum(logits, 0) - logits * labels
                                        + np.log1p(np.exp(-np.abs(logits))))))
            train_model(model, data, TrainConfig(lr=0.01, epochs=1, batch_size=4,
                                                 seed=0, reinit=False))
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-6)

    def test_pad_row_stays_zero(self):
        gen = np.random.default_rng(3)
        data = [Sentence(id=i, tokens=(2,), label=i % 2) for i in range(4)]  # forces padding
        model = Model.build(text_config(), seed=0)
        train_model(model, data, TrainConfig(epochs=2, seed=0))
        assert np.array_equal(model.params["emb"].values[0], np.zeros(6))

    def test_requires_labels(self):
        model = Model.build(text_config(), seed=0)
        with pytest.raises(ValueError, match="label"):
            train_model(model, [Sentence(id=0, tokens=(2,), label=None)], TrainConfig())
        with pytest.raises(ValueError, match="empty"):
            train_model(model, [], TrainConfig())

    def test_parameters_finite_after_training(self):
        gen = np.random.default_rng(4)
        data = random_sentences(30, 30, gen)
        model = Model.build(text_config(dropout=0.5), seed=5)
        train_model(model, data, TrainConfig(epochs=5, seed=1))
        for k, v in model.params.items():
            assert np.isfinite(v.values).all(), k

    def test_version_bumps_once_per_training(self):
        model = Model.build(text_config(), seed=0)
        gen = np.random.default_rng(5)
        data = random_sentences(4, 30, gen)
        train_model(model, data, TrainConfig(epochs=1, seed=0))
        train_model(model, data, TrainConfig(epochs=1, seed=0))
        assert model.version == 2


class TestHomogeneity:
    def test_bias_free_mlp2d_positively_homogeneous(self):
        model = Model.build(ModelConfig(kind="mlp2d", hidden=32, dropout=0.0,
                                        use_bias=False), seed=6)
        gen = np.random.default_rng(6)
        for _ in range(20):
            x = gen.normal(size=2)
            c = float(gen.uniform(0.1, 3.0))
            p1 = point(0, x[0], x[1], 0)
            p2 = point(1, c * x[0], c * x[1], 0)
            y1 = float(model.forward(p1).values)
            y2 = float(model.forward(p2).values)
            assert abs(y2 - c * y1) < 1e-9 * max(1.0, abs(y2))


class TestMCDropout:
    def test_same_seed_same_passes(self):
        model = Model.build(text_config(dropout=0.5), seed=7)
        s = Sentence(id=0, tokens=(2, 3, 4, 5, 6, 7), label=None)
        assert model.mc_dropout_passes(s, 6, seed=11) == model.mc_dropout_passes(s, 6, seed=11)

    def test_prefix_stability(self):
        model = Model.build(text_config(dropout=0.5), seed=7)
        s = Sentence(id=0, tokens=(2, 3, 4, 5, 6, 7), label=None)
        assert model.mc_dropout_passes(s, 2, seed=11) == model.mc_dropout_passes(s, 10, seed=11)[:2]

    def test_all_ones_mask_hook_collapses(self):
        model = Model.build(text_config(dropout=0.5), seed=7)
        s = Sentence(id=0, tokens=(2, 3, 4, 5, 6, 7), label=None)
        mask = np.ones((1, model.config.feature_dim))
        logits = [float(model.forward_batch([s], mask)[0].values[0]) for _ in range(3)]
        assert logits[0] == logits[1] == logits[2]

    def test_rejects_zero_dropout(self):
        model = Model.build(text_config(dropout=0.0), seed=7)
        with pytest.raises(ValueError, match="dropout"):
            model.mc_dropout_passes(Sentence(id=0, tokens=(2, 3, 4, 5, 6), label=None), 4, seed=0)


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["mlp2d", "meanpool", "cnn"])
    def test_roundtrip(self, kind, tmp_path):
        cfg = ModelConfig(kind=kind, hidden=5, embedding_dim=4, dropout=0.25,
                          vocab_size=9 if kind != "mlp2d" else 0)
        model = Model.build(cfg, seed=8)
        model.version = 3
        path = str(tmp_path / "model.bin")
        model.save(path)
        loaded = Model.load(path)
        assert loaded.config == cfg and loaded.version == 3
        for k, v in model.params.items():
            assert np.array_equal(v.values, loaded.params[k].values), k

    def test_header_is_one_text_line(self, tmp_path):
        model = Model.build(text_config(), seed=0)
        path = str(tmp_path / "model.bin")
        model.save(path)
        with open(path, "rb") as fh:
            header = fh.readline().decode("utf-8")
        assert "cnn" in header and header.endswith("\n")
