"""Local gradient interpretations of model predictions.

The interpretation of a sample is the gradient of its output with respect
to its input features; for text, the per-word contribution is the dot
product of the embedding-row gradient with the embedding row itself.  For
piecewise-linear networks these are the coefficients of the linear
classifier active at the sample, and for bias-free networks the linear
reconstruction is exact (degree-1 homogeneity), which ``linear_residual``
measures.

By default gradients are taken of the pre-sigmoid logit: the logit exposes
the piecewise-linear structure directly, whereas sigmoid saturation would
shrink the interpretations of confident samples and mix confidence into
diversity.  ``of="probability"`` is available for ablation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Sentence, SyntheticPoint, Vocab
from .models import Model


@dataclass(frozen=True)
class SampleInterpretation:
    """Input-gradient of one sample under one parameter state."""

    sample_id: int
    vector: tuple[float, ...]
    logit: float
    model_version: int


@dataclass(frozen=True)
class WordInterpretation:
    """Contribution of one word occurrence to its sentence's output.

    ``value`` is grad(output wrt embedding row) . embedding row; with
    ``contribution`` the per-dimension elementwise product is kept too,
    and sums back to ``value``.
    """

    sample_id: int
    position: int
    token_id: int
    value: float
    contribution: tuple[float, ...] | None = None


def _maybe_probability(logits: ad.Tensor, of: str) -> ad.Tensor:
    if of == "logit":
        return logits
    if of == "probability":
        return ad.sigmoid(logits)
    raise ValueError(f"interpretations are of 'logit' or 'probability', not {of!r}")


def interpret_sample(model: Model, point: SyntheticPoint, of: str = "logit") -> SampleInterpretation:
    """Gradient of the output with respect to the raw input coordinates."""
    x = ad.Tensor(np.asarray([point.x], dtype=np.float64), requires_grad=True)
    with ad.Tape() as tape:
        logits, _ = model.forward_points(x)
        out = ad.reshape(_maybe_probability(logits, of), ())
    tape.backward(out)
    return SampleInterpretation(
        sample_id=point.id,
        vector=tuple(float(v) for v in x.grad[0]),
        logit=float(logits.values[0]),
        model_version=model.version,
    )


def interpretation_matrix(model: Model, points: list[SyntheticPoint], of: str = "logit") -> np.ndarray:
    """Stacked input gradients for many points, one batched backward pass.

    Each row of the input influences only its own output, so the gradient of
    the summed outputs recovers every per-sample gradient at once.
    """
    x = ad.Tensor(np.asarray([p.x for p in points], dtype=np.float64), requires_grad=True)
    with ad.Tape() as tape:
        logits, _ = model.forward_points(x)
        out = ad.total(_maybe_probability(logits, of))
    tape.backward(out)
    return x.grad.copy()


def pool_word_gradients(model: Model, sentences: list[Sentence], of: str = "logit",
                        ) -> dict[int, tuple[np.ndarray, float]]:
    """Per-word output gradients for a pool of sentences.

    Returns {sample id: (G, logit)} with G of shape (len(tokens), d), where
    G[j] is the gradient of the sample's output with respect to the
    embedding row looked up at position j.  Sentences are grouped by length
    and each group needs a single backward pass; grouping is canonical
    (sorted by length then id) so the result does not depend on input order.
    """
    out: dict[int, tuple[np.ndarray, float]] = {}
    for group in model.length_groups(sentences):
        with ad.Tape() as tape:
            logits, aux = model.forward_batch(group)
            tape.backward(ad.total(_maybe_probability(logits, of)))
        grads = aux["embedded"].grad
        for b, s in enumerate(group):
            out[s.id] = (grads[b, :len(s.tokens)].copy(), float(logits.values[b]))
    return out


def interpret_words(model: Model, sentence: Sentence, with_vectors: bool = False,
                    of: str = "logit") -> list[WordInterpretation]:
    """Word-level interpretations of one sentence (one backward pass).

    Padding positions are never reported; every real position j yields
    value = grad_j . e_j and optionally the elementwise contribution vector.
    """
    if len(sentence.tokens) == 0:
        raise ValueError(f"sentence {sentence.id} has no tokens")
    grads = pool_word_gradients(model, [sentence], of)
    g, _logit = grads[sentence.id]
    emb = model.params["emb"].values
    words = []
    for j, token in enumerate(sentence.tokens):
        e = emb[token]
        contrib = g[j] * e
        words.append(WordInterpretation(
            sample_id=sentence.id, position=j, token_id=token,
            value=float(contrib.sum()),
            contribution=tuple(float(v) for v in contrib) if with_vectors else None,
        ))
    return words


def pool_word_values(model: Model, sentences: list[Sentence], mode: str = "scalar",
                     of: str = "logit") -> dict[int, np.ndarray]:
    """Interpretation values for every word of every sentence.

    ``scalar`` mode gives shape (len,) arrays of grad . e; ``vector`` mode
    gives (len, d) arrays of the elementwise grad * e contributions, for the
    reading where word diversity compares vectors instead of scalars.
    """
    if mode not in ("scalar", "vector"):
        raise ValueError(f"unknown interpretation mode {mode!r}")
    grads = pool_word_gradients(model, sentences, of)
    emb = model.params["emb"].values
    out = {}
    for s in sentences:
        g, _ = grads[s.id]
        rows = g * emb[np.asarray(s.tokens, dtype=np.int64)]
        out[s.id] = rows if mode == "vector" else rows.sum(axis=1)
    return out


def linear_residual(model: Model, sample, of: str = "logit") -> float:
    """Gap between the output and its local linear reconstruction.

    |y - I . x| for synthetic points, |y - sum_j I_j| for sentences; for
    bias-free ReLU models the gap is rounding-level because the network is
    positively homogeneous of degree 1 in its input.
    """
    if isinstance(sample, SyntheticPoint):
        interp = interpret_sample(model, sample, of)
        return float(abs(interp.logit - np.dot(interp.vector, sample.x)))
    g, logit = pool_word_gradients(model, [sample], of)[sample.id]
    emb = model.params["emb"].values
    reconstruction = (g * emb[np.asarray(sample.tokens, dtype=np.int64)]).sum()
    return float(abs(logit - reconstruction))


def dump_interpretations_csv(path: str, model: Model, sentences: list[Sentence],
                             vocab: Vocab, of: str = "logit") -> None:
    """Write `sample_id,position,token,interp` rows for inspection."""
    values = pool_word_values(model, sentences, "scalar", of)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "position", "token", "interp"])
        for s in sentences:
            for j, token in enumerate(s.tokens):
                writer.writerow([s.id, j, vocab.word(token), f"{values[s.id][j]:.10g}"])
