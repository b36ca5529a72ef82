"""Binary classifiers on the autodiff core, plus SGD training.

Three architectures share one interface:

* ``mlp2d``: 2-feature input -> hidden ReLU -> logit (synthetic experiment);
* ``meanpool``: embeddings -> mean over words -> hidden ReLU -> logit;
* ``cnn``: embeddings -> per-width 1-D convolutions -> ReLU -> max over
  time -> concatenated feature vector -> logit.

Forward passes run whole equal-length minibatches through the tape so the
hot path is a few large matmuls.  Dropout masks are drawn outside the
autodiff core from explicit generator streams; evaluation mode is fully
deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import PAD_ID, Sentence, SyntheticPoint
from .seeding import rng

KINDS = ("mlp2d", "meanpool", "cnn")


class NumericalError(Exception):
    """Training produced a non-finite value."""


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    hidden: int = 100
    filter_sizes: tuple[int, ...] = (3, 4, 5)
    dropout: float = 0.5
    embedding_dim: int = 100
    vocab_size: int = 0
    use_bias: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.hidden <= 0:
            raise ValueError("hidden size must be positive")
        if self.kind != "mlp2d" and self.vocab_size < 2:
            raise ValueError(f"{self.kind} requires vocab_size >= 2")

    @property
    def min_length(self) -> int:
        """Shorter sentences are padded up to this length before the forward."""
        return max(self.filter_sizes) if self.kind == "cnn" else 1

    @property
    def feature_dim(self) -> int:
        """Width of the representation feeding the output layer."""
        return self.hidden * len(self.filter_sizes) if self.kind == "cnn" else self.hidden


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    reinit: bool = True


class Model:
    """Parameters plus forward passes for one architecture.

    ``version`` tags the parameter state; it is bumped after every training
    call so downstream consumers can detect stale interpretations.
    """

    def __init__(self, config: ModelConfig, params: dict[str, ad.Tensor],
                 init_embeddings: np.ndarray | None = None):
        self.config = config
        self.params = params
        self.init_embeddings = init_embeddings
        self.training = False
        self.version = 0

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, config: ModelConfig, seed: int, embeddings: np.ndarray | None = None) -> "Model":
        """Create a model with freshly initialized parameters.

        ``embeddings`` seeds the embedding table for text models; when absent
        the table is uniform(-0.1, 0.1).  The padding row is always zero.
        """
        if embeddings is not None:
            expected = (config.vocab_size, config.embedding_dim)
            if embeddings.shape != expected:
                raise ValueError(f"embeddings shape {embeddings.shape} != {expected}")
            embeddings = embeddings.copy()
        model = cls(config, {}, init_embeddings=embeddings)
        model.reinit(seed)
        return model

    def reinit(self, seed: int) -> None:
        """Redraw all parameters from the seed (fresh model, same layout)."""
        cfg = self.config
        gen = rng(seed, "model-init", cfg.kind)
        params: dict[str, ad.Tensor] = {}

        def glorot(fan_in, fan_out, shape):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return ad.Tensor(gen.uniform(-limit, limit, size=shape), requires_grad=True)

        if cfg.kind != "mlp2d":
            if self.init_embeddings is not None:
                emb = self.init_embeddings.copy()
            else:
                emb = gen.uniform(-0.1, 0.1, size=(cfg.vocab_size, cfg.embedding_dim))
            emb[PAD_ID] = 0.0
            params["emb"] = ad.Tensor(emb, requires_grad=True)

        if cfg.kind == "mlp2d":
            params["w1"] = glorot(2, cfg.hidden, (2, cfg.hidden))
        elif cfg.kind == "meanpool":
            params["w1"] = glorot(cfg.embedding_dim, cfg.hidden, (cfg.embedding_dim, cfg.hidden))
        else:
            for width in cfg.filter_sizes:
                fan_in = width * cfg.embedding_dim
                params[f"conv{width}_w"] = glorot(fan_in, cfg.hidden, (fan_in, cfg.hidden))
                if cfg.use_bias:
                    params[f"conv{width}_b"] = ad.Tensor(np.zeros(cfg.hidden), requires_grad=True)
        if cfg.kind in ("mlp2d", "meanpool") and cfg.use_bias:
            params["b1"] = ad.Tensor(np.zeros(cfg.hidden), requires_grad=True)
        params["out_w"] = glorot(cfg.feature_dim, 1, (cfg.feature_dim, 1))
        if cfg.use_bias:
            params["out_b"] = ad.Tensor(np.zeros(1), requires_grad=True)
        self.params = params

    # -- mode ---------------------------------------------------------------

    def train_mode(self) -> None:
        self.training = True

    def eval_mode(self) -> None:
        self.training = False

    # -- batching helpers ---------------------------------------------------

    def padded_length(self, sentence: Sentence) -> int:
        return max(len(sentence.tokens), self.config.min_length)

    def ids_matrix(self, sentences: list[Sentence]) -> np.ndarray:
        """Stack equal-padded-length sentences into a (B, n) id matrix."""
        n = self.padded_length(sentences[0])
        mat = np.full((len(sentences), n), PAD_ID, dtype=np.int64)
        for b, s in enumerate(sentences):
            if self.padded_length(s) != n:
                raise ValueError("a batch must contain equal-padded-length sentences")
            mat[b, :len(s.tokens)] = s.tokens
        return mat

    def length_groups(self, sentences: list[Sentence]) -> list[list[Sentence]]:
        """Canonical batching: group by padded length, ordered by (length, id)."""
        groups: dict[int, list[Sentence]] = {}
        for s in sorted(sentences, key=lambda s: (self.padded_length(s), s.id)):
            groups.setdefault(self.padded_length(s), []).append(s)
        return [groups[n] for n in sorted(groups)]

    def dropout_mask(self, batch_size: int, gen: np.random.Generator) -> np.ndarray:
        """Inverted-dropout mask with entries in {0, 1/keep}."""
        keep = 1.0 - self.config.dropout
        return (gen.random((batch_size, self.config.feature_dim)) < keep) / keep

    # -- forward ------------------------------------------------------------

    def forward_points(self, x: ad.Tensor, mask: np.ndarray | None = None):
        """mlp2d forward on a (B, 2) tensor; returns (logits (B,), aux)."""
        cfg = self.config
        p = self.params
        h = ad.matmul(x, p["w1"])
        pre = h
        if cfg.use_bias:
            h = ad.add(h, p["b1"])
            pre = h
        h = ad.relu(h)
        rep = h
        if mask is not None:
            h = ad.dropout(h, mask)
        out = ad.matmul(h, p["out_w"])
        if cfg.use_bias:
            out = ad.add(out, p["out_b"])
        logits = ad.reshape(out, (x.values.shape[0],))
        return logits, {"rep": rep, "preacts": [pre]}

    def forward_embedded(self, emb: ad.Tensor, mask: np.ndarray | None = None):
        """Text forward from looked-up embeddings (B, n, d); returns (logits, aux)."""
        cfg = self.config
        p = self.params
        batch, n, d = emb.values.shape
        preacts = []
        if cfg.kind == "meanpool":
            pooled = ad.mean(emb, axis=1)
            h = ad.matmul(pooled, p["w1"])
            if cfg.use_bias:
                h = ad.add(h, p["b1"])
            preacts.append(h)
            rep = ad.relu(h)
        elif cfg.kind == "cnn":
            feats = []
            for width in cfg.filter_sizes:
                win = ad.windows(emb, width)
                flat = ad.reshape(win, (batch * (n - width + 1), width * d))
                conv = ad.matmul(flat, p[f"conv{width}_w"])
                if cfg.use_bias:
                    conv = ad.add(conv, p[f"conv{width}_b"])
                preacts.append(conv)
                conv = ad.relu(conv)
                conv = ad.reshape(conv, (batch, n - width + 1, cfg.hidden))
                feats.append(ad.max_pool(conv, axis=1))
            rep = ad.concat(feats, axis=1)
        else:
            raise ValueError("forward_embedded is for text models")
        h = rep
        if mask is not None:
            h = ad.dropout(h, mask)
        out = ad.matmul(h, p["out_w"])
        if cfg.use_bias:
            out = ad.add(out, p["out_b"])
        logits = ad.reshape(out, (batch,))
        return logits, {"rep": rep, "preacts": preacts}

    def forward_batch(self, sentences: list[Sentence], mask: np.ndarray | None = None):
        """Forward one equal-length batch; aux carries the lookup tensor."""
        ids = self.ids_matrix(sentences)
        emb = ad.embedding_lookup(self.params["emb"], ids)
        logits, aux = self.forward_embedded(emb, mask)
        aux["embedded"] = emb
        aux["ids"] = ids
        return logits, aux

    def forward(self, sample, mode: str = "eval", mask_rng: np.random.Generator | None = None) -> ad.Tensor:
        """Scalar logit for one sample.

        ``mode='train'`` draws a dropout mask from ``mask_rng``; evaluation is
        a pure function of (parameters, sample).
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        mask = None
        if mode == "train" and self.config.dropout > 0.0:
            if mask_rng is None:
                raise ValueError("train-mode forward needs a mask rng")
            mask = self.dropout_mask(1, mask_rng)
        if isinstance(sample, SyntheticPoint):
            x = ad.Tensor(np.asarray([sample.x], dtype=np.float64))
            logits, _ = self.forward_points(x, mask)
        else:
            if len(sample.tokens) == 0:
                raise ValueError(f"sample {sample.id} has no tokens")
            logits, _ = self.forward_batch([sample], mask)
        return ad.reshape(logits, ())

    # -- inference ----------------------------------------------------------

    def predict_proba(self, samples) -> np.ndarray:
        """Sigmoid of the eval-mode logit for each sample, in input order."""
        logits = self.predict_logits(samples)
        out = np.empty_like(logits)
        pos = logits >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
        ez = np.exp(logits[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    def predict_logits(self, samples) -> np.ndarray:
        if samples and isinstance(samples[0], SyntheticPoint):
            x = ad.Tensor(np.asarray([s.x for s in samples], dtype=np.float64))
            logits, _ = self.forward_points(x)
            return logits.values.copy()
        out = np.empty(len(samples))
        index = {s.id: i for i, s in enumerate(samples)}
        for group in self.length_groups(samples):
            logits, _ = self.forward_batch(group)
            for s, v in zip(group, logits.values):
                out[index[s.id]] = v
        return out

    def accuracy(self, samples) -> float:
        probs = self.predict_proba(samples)
        preds = (probs > 0.5).astype(np.int64)
        labels = np.array([s.label for s in samples])
        if any(s.label is None for s in samples):
            raise ValueError("accuracy needs labeled samples")
        return float((preds == labels).mean())

    def representations(self, samples) -> np.ndarray:
        """Eval-mode activations feeding the output layer, one row per sample."""
        if samples and isinstance(samples[0], SyntheticPoint):
            x = ad.Tensor(np.asarray([s.x for s in samples], dtype=np.float64))
            _, aux = self.forward_points(x)
            return aux["rep"].values.copy()
        out = np.empty((len(samples), self.config.feature_dim))
        index = {s.id: i for i, s in enumerate(samples)}
        for group in self.length_groups(samples):
            _, aux = self.forward_batch(group)
            for s, row in zip(group, aux["rep"].values):
                out[index[s.id]] = row
        return out

    def mc_dropout_passes(self, sample, passes: int, seed: int) -> list[float]:
        """Predicted probabilities from repeated dropout forwards.

        Pass t uses its own generator stream, so the first passes of longer
        and shorter runs coincide for the same seed.
        """
        if self.config.dropout <= 0.0:
            raise ValueError("mc_dropout_passes requires a model with dropout > 0")
        if passes < 2:
            raise ValueError("need at least 2 passes")
        probs = []
        for t in range(passes):
            mask = self.dropout_mask(1, rng(seed, "mc-pass", t))
            if isinstance(sample, SyntheticPoint):
                x = ad.Tensor(np.asarray([sample.x], dtype=np.float64))
                logits, _ = self.forward_points(x, mask)
            else:
                logits, _ = self.forward_batch([sample], mask)
            z = float(logits.values[0])
            probs.append(1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z)))
        return probs

    # -- persistence --------------------------------------------------------

    def save(self, path: str) -> None:
        """One-line JSON header describing config and layout, then raw f64 LE."""
        header = {
            "config": {
                "kind": self.config.kind, "hidden": self.config.hidden,
                "filter_sizes": list(self.config.filter_sizes),
                "dropout": self.config.dropout,
                "embedding_dim": self.config.embedding_dim,
                "vocab_size": self.config.vocab_size,
                "use_bias": self.config.use_bias,
            },
            "version": self.version,
            "layout": [[name, list(t.values.shape)] for name, t in self.params.items()],
        }
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode("utf-8"))
            for t in self.params.values():
                fh.write(t.values.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "Model":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        cfg_d = header["config"]
        cfg_d["filter_sizes"] = tuple(cfg_d["filter_sizes"])
        config = ModelConfig(**cfg_d)
        params = {}
        offset = 0
        for name, shape in header["layout"]:
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            vals = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(shape)
            params[name] = ad.Tensor(vals.astype(np.float64), requires_grad=True)
            offset += size * 8
        model = cls(config, params)
        model.version = header["version"]
        return model


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _training_batches(model: Model, samples: list, batch_size: int,
                      gen: np.random.Generator) -> list[list]:
    """Shuffled batches; text batches are carved within equal-padded-length groups."""
    perm = gen.permutation(len(samples))
    shuffled = [samples[i] for i in perm]
    if isinstance(samples[0], SyntheticPoint):
        chunks = [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]
    else:
        buckets: dict[int, list] = {}
        for s in shuffled:
            buckets.setdefault(model.padded_length(s), []).append(s)
        chunks = []
        for n in sorted(buckets):
            bucket = buckets[n]
            chunks.extend(bucket[i:i + batch_size] for i in range(0, len(bucket), batch_size))
    order = gen.permutation(len(chunks))
    return [chunks[i] for i in order]


def train_model(model: Model, labeled: list, hyper: TrainConfig) -> Model:
    """Minimize mean binary cross entropy with plain SGD.

    With ``reinit`` the parameters are redrawn from the seed first, so every
    call trains a fresh model on the current labeled set.  Returns the model
    in eval mode with its version bumped.
    """
    if not labeled:
        raise ValueError("cannot train on an empty labeled set")
    if any(getattr(s, "label", None) is None for s in labeled):
        raise ValueError("training samples must be labeled")
    if hyper.reinit:
        model.reinit(hyper.seed)
    model.train_mode()
    gen = rng(hyper.seed, "sgd")
    synthetic = isinstance(labeled[0], SyntheticPoint)

    for epoch in range(hyper.epochs):
        for b, batch in enumerate(_training_batches(model, labeled, hyper.batch_size, gen)):
            labels = np.array([s.label for s in batch], dtype=np.float64)
            mask = model.dropout_mask(len(batch), gen) if model.config.dropout > 0 else None
            with ad.Tape() as tape:
                if synthetic:
                    x = ad.Tensor(np.asarray([s.x for s in batch], dtype=np.float64))
                    logits, _ = model.forward_points(x, mask)
                else:
                    logits, _ = model.forward_batch(batch, mask)
                loss = ad.mean(ad.logistic_loss(logits, labels))
            if not np.isfinite(loss.values):
                raise NumericalError(f"non-finite loss at epoch {epoch} batch {b}")
            tape.backward(loss)
            for name, p in model.params.items():
                p.values -= hyper.lr * p.grad
            if "emb" in model.params:
                model.params["emb"].values[PAD_ID] = 0.0
    model.eval_mode()
    model.version += 1
    return model
