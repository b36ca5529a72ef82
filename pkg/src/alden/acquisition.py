"""Selection strategies for pool-based batch active learning.

Six strategies share the same contract: given the pool split into labeled
ids L and unlabeled ids U, return K distinct ids from U in pick order, with
the score each pick was made at.  Ties everywhere resolve to the lowest
sample id so runs are exactly reproducible.

The interpretation-diversity strategy scores a word occurrence by the
distance between its interpretation and the interpretations of the same
word (or, for words unseen in L, the word with the nearest embedding) in
the labeled set; a sentence scores the max over its words, and the batch is
built greedily, folding each pick's words into the labeled index before the
next pick.  :class:`AldenDiversityIndex` maintains that state incrementally
but is required to stay output-equivalent to naive recomputation, which the
test suite checks pick-for-pick against a brute-force reference.
"""

from __future__ import annotations

import numpy as np

from .clustering import kmeans_pp_indices, squared_distances
from .data import Sentence
from .models import Model
from .interpret import pool_word_gradients
from .seeding import rng, seed_sequence


class PoolState:
    """Partition of the training ids into labeled and unlabeled sets.

    The samples held here never carry labels; labels enter through
    ``mark_labeled`` (fed by the experiment loop's oracle) and are stored
    separately so no strategy can reach an unlabeled sample's label.
    """

    def __init__(self, samples: list[Sentence]):
        if any(s.label is not None for s in samples):
            raise ValueError("PoolState samples must not carry labels")
        self.samples = {s.id: s for s in samples}
        if len(self.samples) != len(samples):
            raise ValueError("duplicate sample ids")
        self.labeled: list[int] = []
        self.unlabeled: list[int] = sorted(self.samples)
        self.labels: dict[int, int] = {}

    def mark_labeled(self, ids: list[int], labels: list[int]) -> None:
        unlabeled = set(self.unlabeled)
        for i in ids:
            if i not in unlabeled:
                raise ValueError(f"sample {i} is not in the unlabeled set")
        self.labeled.extend(ids)
        self.labels.update(zip(ids, labels))
        remove = set(ids)
        self.unlabeled = [i for i in self.unlabeled if i not in remove]

    def labeled_samples(self) -> list[Sentence]:
        from dataclasses import replace
        return [replace(self.samples[i], label=self.labels[i]) for i in self.labeled]

    def unlabeled_samples(self) -> list[Sentence]:
        return [self.samples[i] for i in self.unlabeled]

    def all_samples(self) -> list[Sentence]:
        return [self.samples[i] for i in sorted(self.samples)]


def _ranked_top_k(scores: dict[int, float], k: int) -> tuple[list[int], list[float]]:
    """Highest score first, ascending id on ties."""
    order = sorted(scores, key=lambda i: (-scores[i], i))[:k]
    return order, [scores[i] for i in order]


def _check_budget(pool: PoolState, k: int) -> None:
    if k < 1 or k > len(pool.unlabeled):
        raise ValueError(f"budget K={k} not satisfiable with |U|={len(pool.unlabeled)}")


# ---------------------------------------------------------------------------
# interpretation diversity
# ---------------------------------------------------------------------------

class AldenDiversityIndex:
    """Word-interpretation index over L with incremental greedy updates.

    Built once per outer iteration from interpretations of all of L and U
    under the current parameters.  Per unlabeled word occurrence it holds
    the diversity D = min distance between the occurrence's interpretation
    and the labeled interpretations of its neighbor word; the neighbor is
    the labeled word with the nearest embedding (the word itself when it
    appears in L, at distance exactly zero).

    ``add_labeled`` folds a picked sample in: labeled value lists grow,
    words whose neighbor gained values get their min updated against just
    the new values, and words whose nearest embedding changed are rescored
    in full.  min/max are exact operations, so this matches recomputing
    everything from scratch.
    """

    def __init__(self, embeddings: np.ndarray, samples: dict[int, Sentence],
                 interpretations: dict[int, np.ndarray],
                 labeled_ids: list[int], unlabeled_ids: list[int], mode: str = "scalar"):
        if not labeled_ids:
            raise ValueError("diversity needs a nonempty labeled set")
        if mode not in ("scalar", "vector"):
            raise ValueError(f"unknown interpretation mode {mode!r}")
        self.mode = mode
        self.emb = embeddings
        self.samples = samples
        self.interps = interpretations

        # Flat arrays over all unlabeled word occurrences, ascending (id, position).
        self.sample_ids = np.array(sorted(unlabeled_ids), dtype=np.int64)
        tokens, owners, values = [], [], []
        offsets = [0]
        for sid in self.sample_ids:
            toks = samples[sid].tokens
            if len(toks) == 0:
                raise ValueError(f"sample {sid} has no scorable words")
            vals = interpretations[sid]
            tokens.extend(toks)
            owners.extend([sid] * len(toks))
            values.append(np.atleast_1d(vals) if mode == "scalar" else vals)
            offsets.append(offsets[-1] + len(toks))
        self.word_token = np.array(tokens, dtype=np.int64)
        self.word_value = np.concatenate(values, axis=0)
        self.offsets = np.array(offsets, dtype=np.int64)
        self.word_div = np.zeros(len(self.word_token))
        self.active = np.ones(len(self.sample_ids), dtype=bool)
        self._row = {int(s): i for i, s in enumerate(self.sample_ids)}

        # Fixed grouping of word occurrences by their own token.
        self.words_of_token: dict[int, np.ndarray] = {}
        order = np.argsort(self.word_token, kind="stable")
        bounds = np.flatnonzero(np.diff(self.word_token[order])) + 1
        for chunk in np.split(order, bounds):
            self.words_of_token[int(self.word_token[chunk[0]])] = chunk

        # Labeled-side value lists per token.
        self.l_values: dict[int, np.ndarray] = {}
        for sid in labeled_ids:
            self._append_values(samples[sid], interpretations[sid])

        self.q_tokens = np.array(sorted(self.words_of_token), dtype=np.int64)
        self._q_row = {int(t): i for i, t in enumerate(self.q_tokens)}
        self.neighbor = np.empty(len(self.q_tokens), dtype=np.int64)
        self.neighbor_d2 = np.empty(len(self.q_tokens))
        self._init_neighbors()
        for t in self.q_tokens:
            self._rescore_token(int(t))
        self._sample_div = None

    # -- internals ----------------------------------------------------------

    def _append_values(self, sentence: Sentence, values: np.ndarray) -> None:
        values = np.atleast_1d(values) if self.mode == "scalar" else np.atleast_2d(values)
        for j, t in enumerate(sentence.tokens):
            held = self.l_values.get(t)
            v = values[j:j + 1]
            self.l_values[t] = v.copy() if held is None else np.concatenate([held, v], axis=0)
        if self.mode == "scalar":
            for t in set(sentence.tokens):
                self.l_values[t] = np.sort(self.l_values[t])

    def _init_neighbors(self) -> None:
        l_tokens = np.array(sorted(self.l_values), dtype=np.int64)
        le = self.emb[l_tokens]
        ln2 = np.einsum("ij,ij->i", le, le)
        qe = self.emb[self.q_tokens]
        qn2 = np.einsum("ij,ij->i", qe, qe)
        for start in range(0, len(self.q_tokens), 1024):
            stop = min(start + 1024, len(self.q_tokens))
            d2 = qn2[start:stop, None] + ln2[None, :] - 2.0 * (qe[start:stop] @ le.T)
            np.maximum(d2, 0.0, out=d2)
            best = d2.argmin(axis=1)
            self.neighbor[start:stop] = l_tokens[best]
            self.neighbor_d2[start:stop] = d2[np.arange(stop - start), best]
        for i, t in enumerate(self.q_tokens):
            if int(t) in self.l_values:
                self.neighbor[i] = t
                self.neighbor_d2[i] = 0.0

    def _min_dist(self, values: np.ndarray, pool_vals: np.ndarray) -> np.ndarray:
        """Min distance from each value to the pool of labeled values."""
        if self.mode == "scalar":
            pos = np.searchsorted(pool_vals, values)
            best = np.full(values.shape, np.inf)
            left = pos > 0
            best[left] = np.abs(values[left] - pool_vals[pos[left] - 1])
            right = pos < len(pool_vals)
            np.minimum(best, np.where(right, np.abs(pool_vals[np.minimum(pos, len(pool_vals) - 1)] - values), np.inf), out=best)
            return best
        out = np.empty(values.shape[0])
        for start in range(0, values.shape[0], 256):
            stop = min(start + 256, values.shape[0])
            diff = values[start:stop, None, :] - pool_vals[None, :, :]
            out[start:stop] = np.sqrt((diff ** 2).sum(axis=2).min(axis=1))
        return out

    def _rescore_token(self, token: int) -> None:
        idx = self.words_of_token[token]
        pool_vals = self.l_values[int(self.neighbor[self._q_row[token]])]
        self.word_div[idx] = self._min_dist(self.word_value[idx], pool_vals)
        self._sample_div = None

    def _update_min_against(self, token: int, new_values: np.ndarray) -> None:
        idx = self.words_of_token[token]
        d = self._min_dist(self.word_value[idx], new_values)
        self.word_div[idx] = np.minimum(self.word_div[idx], d)
        self._sample_div = None

    # -- queries ------------------------------------------------------------

    def word_diversity(self, sample_id: int, position: int) -> float:
        """Current diversity of one unlabeled word occurrence."""
        row = self._row[sample_id]
        return float(self.word_div[self.offsets[row] + position])

    def sample_diversity(self, sample_id: int) -> float:
        """Max word diversity of one unlabeled sample."""
        row = self._row[sample_id]
        lo, hi = self.offsets[row], self.offsets[row + 1]
        return float(self.word_div[lo:hi].max())

    def sample_diversities(self) -> np.ndarray:
        if self._sample_div is None:
            self._sample_div = np.maximum.reduceat(self.word_div, self.offsets[:-1])
        return self._sample_div

    def pick(self) -> int:
        """Unlabeled sample with the maximally diverse interpretation."""
        div = np.where(self.active, self.sample_diversities(), -np.inf)
        return int(self.sample_ids[int(np.argmax(div))])

    def add_labeled(self, sample_id: int) -> None:
        """Fold a picked sample into L and refresh affected diversities."""
        sentence = self.samples[sample_id]
        values = np.atleast_1d(self.interps[sample_id]) if self.mode == "scalar" \
            else np.atleast_2d(self.interps[sample_id])
        new_tokens = sorted(set(sentence.tokens) - self.l_values.keys())
        appended: dict[int, list] = {}
        for j, t in enumerate(sentence.tokens):
            appended.setdefault(t, []).append(values[j])
        self._append_values(sentence, self.interps[sample_id])

        qe = self.emb[self.q_tokens]
        qn2 = np.einsum("ij,ij->i", qe, qe)
        switched: set[int] = set()
        for t in new_tokens:
            e = self.emb[t]
            d2 = qn2 + e @ e - 2.0 * (qe @ e)
            np.maximum(d2, 0.0, out=d2)
            better = (d2 < self.neighbor_d2) | ((d2 == self.neighbor_d2) & (t < self.neighbor))
            self.neighbor[better] = t
            self.neighbor_d2[better] = d2[better]
            switched.update(int(q) for q in self.q_tokens[better])
            if t in self._q_row:
                i = self._q_row[t]
                self.neighbor[i] = t
                self.neighbor_d2[i] = 0.0
                switched.add(t)

        for q in switched:
            self._rescore_token(q)
        # words whose (unswitched) neighbor gained values: exact min update
        hit = np.isin(self.neighbor, np.array(sorted(appended), dtype=np.int64))
        for qi in np.flatnonzero(hit):
            q = int(self.q_tokens[qi])
            if q in switched:
                continue
            new_vals = appended[int(self.neighbor[qi])]
            self._update_min_against(q, np.sort(np.array(new_vals)) if self.mode == "scalar"
                                     else np.stack(new_vals))

        if sample_id in self._row:
            self.active[self._row[sample_id]] = False
        self._sample_div = None


def alden_select(pool: PoolState, k: int, interpretations: dict[int, np.ndarray],
                 embeddings: np.ndarray, mode: str = "scalar") -> tuple[list[int], list[float]]:
    """Greedy batch selection by maximal interpretation diversity.

    ``interpretations`` must cover L and U under the same parameter state;
    they are never refreshed inside the K-loop, only the labeled index grows.
    """
    _check_budget(pool, k)
    index = AldenDiversityIndex(embeddings, pool.samples, interpretations,
                                pool.labeled, pool.unlabeled, mode)
    picked, scores = [], []
    for _ in range(k):
        sid = index.pick()
        picked.append(sid)
        scores.append(index.sample_diversity(sid))
        index.add_labeled(sid)
    return picked, scores


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def random_select(pool: PoolState, k: int, seed: int) -> tuple[list[int], list[float]]:
    """Uniform selection without replacement."""
    _check_budget(pool, k)
    gen = rng(seed, "random-select")
    picked = [int(i) for i in gen.choice(np.array(pool.unlabeled), size=k, replace=False)]
    return picked, [0.0] * k


def egl_scores(model: Model, sentences: list[Sentence]) -> dict[int, float]:
    """Expected-gradient-length word scores for a batch of sentences.

    For a single-logit classifier the loss gradient at label y is
    (p - y) times the output gradient, so the expectation over the label
    distribution of the embedding-gradient norm at word j collapses to
    2 p (1-p) ||dy/de_j||, and the sentence score is the max over words.
    """
    grads = pool_word_gradients(model, sentences)
    out = {}
    for s in sentences:
        g, logit = grads[s.id]
        p = 1.0 / (1.0 + np.exp(-logit)) if logit >= 0 else np.exp(logit) / (1.0 + np.exp(logit))
        norms = np.sqrt(np.einsum("jd,jd->j", g, g))
        out[s.id] = float(2.0 * p * (1.0 - p) * norms.max())
    return out


def egl_word_score(model: Model, sentence: Sentence) -> float:
    return egl_scores(model, [sentence])[sentence.id]


def egl_select(model: Model, pool: PoolState, k: int) -> tuple[list[int], list[float]]:
    _check_budget(pool, k)
    return _ranked_top_k(egl_scores(model, pool.unlabeled_samples()), k)


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    inner = (p > 0.0) & (p < 1.0)
    q = p[inner]
    out[inner] = -q * np.log(q) - (1.0 - q) * np.log(1.0 - q)
    return out


def mutual_information(pass_probs) -> float:
    """BALD score from dropout-pass probabilities, clipped below at zero."""
    p = np.asarray(pass_probs, dtype=np.float64)
    score = float(binary_entropy(p.mean()) - binary_entropy(p).mean())
    return max(score, 0.0)


def sample_stream_seed(base_seed: int, sample_id: int) -> int:
    """Per-sample integer seed derived from a base seed."""
    return int(seed_sequence(base_seed, "bald", sample_id).generate_state(1)[0])


def bald_score(model: Model, sentence: Sentence, passes: int, seed: int) -> float:
    """Mutual information between the prediction and the dropout masks."""
    return mutual_information(model.mc_dropout_passes(sentence, passes, seed))


def bald_scores(model: Model, sentences: list[Sentence], passes: int, seed: int) -> dict[int, float]:
    """Batched BALD; per sample it matches ``bald_score`` at the seed from
    ``sample_stream_seed`` (same masks, batched-matmul rounding aside)."""
    if model.config.dropout <= 0.0:
        raise ValueError("BALD requires a model with dropout > 0")
    if passes < 2:
        raise ValueError("need at least 2 passes")
    probs = {s.id: [] for s in sentences}
    for group in model.length_groups(sentences):
        for t in range(passes):
            mask = np.concatenate([
                model.dropout_mask(1, rng(sample_stream_seed(seed, s.id), "mc-pass", t))
                for s in group])
            logits, _ = model.forward_batch(group, mask)
            z = logits.values
            p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            for s, v in zip(group, p):
                probs[s.id].append(float(v))
    return {sid: mutual_information(ps) for sid, ps in probs.items()}


def bald_select(model: Model, pool: PoolState, k: int, passes: int, seed: int,
                ) -> tuple[list[int], list[float]]:
    _check_budget(pool, k)
    return _ranked_top_k(bald_scores(model, pool.unlabeled_samples(), passes, seed), k)


def coreset_select(pool: PoolState, k: int, representations: dict[int, np.ndarray],
                   ) -> tuple[list[int], list[float]]:
    """Greedy k-center: repeatedly take the unlabeled point farthest from
    the labeled centers (largest min distance), then treat it as a center."""
    _check_budget(pool, k)
    if not pool.labeled:
        raise ValueError("k-center needs a nonempty labeled anchor set")
    u_ids = np.array(pool.unlabeled, dtype=np.int64)
    u = np.stack([representations[i] for i in u_ids])
    l = np.stack([representations[i] for i in pool.labeled])
    un2 = np.einsum("ij,ij->i", u, u)
    ln2 = np.einsum("ij,ij->i", l, l)
    d2 = un2[:, None] + ln2[None, :] - 2.0 * (u @ l.T)
    np.maximum(d2, 0.0, out=d2)
    min_d2 = d2.min(axis=1)

    picked, scores = [], []
    chosen = np.zeros(len(u_ids), dtype=bool)
    for _ in range(k):
        masked = np.where(chosen, -np.inf, min_d2)
        row = int(np.argmax(masked))
        picked.append(int(u_ids[row]))
        scores.append(float(np.sqrt(max(masked[row], 0.0))))
        chosen[row] = True
        np.minimum(min_d2, squared_distances(u, u[row]), out=min_d2)
    return picked, scores


def badge_gradient_embeddings(model: Model, sentences: list[Sentence]) -> dict[int, np.ndarray]:
    """Loss gradient wrt the output-layer weights at the pseudo-label.

    For a single-logit model this is (p - y_pseudo) times the penultimate
    representation, with y_pseudo the thresholded prediction.
    """
    reps = model.representations(sentences)
    probs = model.predict_proba(sentences)
    pseudo = (probs > 0.5).astype(np.float64)
    return {s.id: (probs[i] - pseudo[i]) * reps[i] for i, s in enumerate(sentences)}


def badge_select(pool: PoolState, k: int, seed: int,
                 grad_embeddings: dict[int, np.ndarray]) -> tuple[list[int], list[float]]:
    """k-means++ seeding over the unlabeled gradient embeddings."""
    _check_budget(pool, k)
    u_ids = np.array(pool.unlabeled, dtype=np.int64)
    points = np.stack([grad_embeddings[i] for i in u_ids])
    chosen = kmeans_pp_indices(points, k, rng(seed, "badge"))
    return [int(u_ids[i]) for i in chosen], [0.0] * len(chosen)
