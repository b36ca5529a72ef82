"""Data pipeline: synthetic 2-D data, text corpora, vocabulary, embeddings.

Everything built here is immutable after construction and deterministic
under its seed, so loaders can be re-run and compared structurally.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .seeding import rng

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

REGIONS = ("top", "bottom", "right", "left")


class CorpusError(Exception):
    """A corpus file is missing, unreadable, or malformed."""


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


# ---------------------------------------------------------------------------
# synthetic 2-D data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticPoint:
    """A 2-D point with a stochastic binary label and its triangle-region tag."""

    id: int
    x: tuple[float, float]
    label: int
    region: str


def region_of(x1: float, x2: float) -> str:
    """Which of the four triangles of the square a point falls in.

    The tag is the argmax of (x2, -x2, x1, -x1) mapped to
    (top, bottom, right, left); ties resolve in that priority order.
    """
    vals = np.array([x2, -x2, x1, -x1])
    return REGIONS[int(np.argmax(vals))]


def generate_synthetic(n: int, seed: int) -> list[SyntheticPoint]:
    """Sample n points uniformly on [-5, 5]^2 with P(y=1) = sigmoid(x1*x2)."""
    if n <= 0:
        raise ValueError("n must be positive")
    gen = rng(seed, "synthetic")
    coords = gen.uniform(-5.0, 5.0, size=(n, 2))
    draws = gen.random(n)
    points = []
    for i in range(n):
        x1, x2 = float(coords[i, 0]), float(coords[i, 1])
        label = int(draws[i] < _sigmoid(x1 * x2))
        points.append(SyntheticPoint(id=i, x=(x1, x2), label=label, region=region_of(x1, x2)))
    return points


# ---------------------------------------------------------------------------
# text corpora
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sentence:
    """A tokenized sample: integer token ids (no padding) and an optional label.

    Samples handed to selection strategies carry ``label=None``; the true
    label lives behind the experiment loop's oracle.
    """

    id: int
    tokens: tuple[int, ...]
    label: int | None


class Vocab:
    """Word/id bijection with reserved ids 0 (padding) and 1 (unknown)."""

    def __init__(self, words=()):
        self._id_to_word = [PAD_TOKEN, UNK_TOKEN]
        self._word_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        idx = self._word_to_id.get(word)
        if idx is None:
            idx = len(self._id_to_word)
            self._word_to_id[word] = idx
            self._id_to_word.append(word)
        return idx

    def id(self, word: str) -> int:
        return self._word_to_id.get(word, UNK_ID)

    def word(self, idx: int) -> str:
        return self._id_to_word[idx]

    def encode(self, tokens) -> tuple[int, ...]:
        return tuple(self._word_to_id.get(t, UNK_ID) for t in tokens)

    def decode(self, ids) -> tuple[str, ...]:
        return tuple(self._id_to_word[i] for i in ids)

    def __len__(self) -> int:
        return len(self._id_to_word)

    def __contains__(self, word: str) -> bool:
        return word in self._word_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._id_to_word == other._id_to_word

    def __hash__(self):
        return hash(tuple(self._id_to_word))


def tokenize(text: str) -> list[str]:
    """Lowercase + whitespace split; the corpora are pre-cleaned."""
    return text.lower().split()


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc


def load_corpus(path: str, fmt: str) -> tuple[list[Sentence], Vocab]:
    """Load a binary text-classification corpus and build its vocabulary.

    Formats:
      * ``posneg``: ``path`` is a directory containing ``pos.txt`` and
        ``neg.txt``, one sentence per line; ids are assigned in file order,
        positive file first.
      * ``tsv``: one ``label<TAB>text`` line per sample, label in {0, 1}.
    """
    if fmt == "posneg":
        pairs = []
        for name, label in (("pos.txt", 1), ("neg.txt", 0)):
            fpath = os.path.join(path, name)
            if not os.path.isfile(fpath):
                raise CorpusError(f"posneg corpus requires {name} under {path}")
            for line in _read_lines(fpath):
                pairs.append((label, line))
    elif fmt == "tsv":
        pairs = []
        for lineno, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2 or parts[0] not in ("0", "1"):
                raise CorpusError(f"{path}:{lineno}: expected 'label<TAB>text' with label 0 or 1")
            pairs.append((int(parts[0]), parts[1]))
    else:
        raise CorpusError(f"unknown corpus format {fmt!r} (expected 'posneg' or 'tsv')")

    vocab = Vocab()
    sentences = []
    for label, text in pairs:
        tokens = tokenize(text)
        if not tokens:
            continue
        ids = tuple(vocab.add(t) for t in tokens)
        sentences.append(Sentence(id=len(sentences), tokens=ids, label=label))
    if not sentences:
        raise CorpusError(f"no usable sentences in {path}")
    return sentences, vocab


def split(items: list, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[list, list, list]:
    """Deterministic shuffled split; floor counts for the first two parts."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if not items:
        raise ValueError("cannot split an empty corpus")
    order = rng(seed, "split").permutation(len(items))
    n_a = int(len(items) * ratios[0])
    n_b = int(len(items) * ratios[1])
    a = [items[i] for i in order[:n_a]]
    b = [items[i] for i in order[n_a:n_a + n_b]]
    c = [items[i] for i in order[n_a + n_b:]]
    return a, b, c


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def load_embeddings(path: str | None, vocab: Vocab, dim: int = 100, seed: int = 0) -> np.ndarray:
    """Build the (V, dim) embedding matrix from a word2vec-style text file.

    Each file line is ``word v1 ... vdim``.  Words missing from the file
    (and everything when ``path`` is None) are initialized uniform(-0.1, 0.1)
    from the seed; the padding row is zero and stays zero.
    """
    gen = rng(seed, "embeddings")
    matrix = gen.uniform(-0.1, 0.1, size=(len(vocab), dim))
    matrix[PAD_ID] = 0.0
    if path is None:
        return matrix

    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise CorpusError(f"{path}:{lineno}: expected {dim} vector entries, got {len(parts) - 1}")
        word = parts[0]
        if word not in vocab:
            continue
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise CorpusError(f"{path}:{lineno}: non-numeric vector entry") from exc
        matrix[vocab.id(word)] = vec
    matrix[PAD_ID] = 0.0
    return matrix


# ---------------------------------------------------------------------------
# benchmark corpus generator
# ---------------------------------------------------------------------------

def make_benchmark_corpus(n: int = 10000, seed: int = 0, n_regions: int = 8,
                          n_cues: int = 300, n_filler: int = 5000,
                          label_noise: float = 0.07) -> list[tuple[int, str]]:
    """Generate a stand-in sentence-classification corpus of Subj-like shape.

    Each sentence belongs to one of ``n_regions`` latent contexts.  Cue words
    carry a polarity that depends on the context, and every cue is preceded
    by a context marker word so that small convolution windows can resolve
    the (marker, cue) conjunction.  The label is the majority polarity of the
    sentence's cues, flipped with probability ``label_noise``.  The same cue
    word therefore contributes with different signs in different contexts,
    which is the structure interpretation-diversity selection feeds on.

    Returns (label, text) pairs suitable for :func:`write_tsv`.
    """
    gen = rng(seed, "benchmark-corpus")
    signs = np.where(gen.random((n_regions, n_cues)) < 0.5, 1, -1)
    filler_weights = 1.0 / np.arange(10, 10 + n_filler) ** 1.1
    filler_weights /= filler_weights.sum()

    rows = []
    for _ in range(n):
        region = int(gen.integers(n_regions))
        k_cues = int(gen.integers(3, 7))
        length = int(np.clip(round(gen.normal(23, 7)), 4 + 2 * k_cues, 44))
        n_fill = length - 2 * k_cues

        words = [f"w{j:04d}" for j in gen.choice(n_filler, size=n_fill, p=filler_weights)]
        score = 0
        for _ in range(k_cues):
            cue = int(gen.integers(n_cues))
            marker = int(gen.integers(12))
            score += signs[region, cue]
            pos = int(gen.integers(len(words) + 1))
            words[pos:pos] = [f"m{region}x{marker}", f"c{cue:03d}"]
        if score > 0:
            label = 1
        elif score < 0:
            label = 0
        else:
            label = int(gen.random() < 0.5)
        if gen.random() < label_noise:
            label = 1 - label
        rows.append((label, " ".join(words)))
    return rows


def write_tsv(path: str, rows: list[tuple[int, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, text in rows:
            fh.write(f"{label}\t{text}\n")
