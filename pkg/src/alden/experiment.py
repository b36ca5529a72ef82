"""End-to-end active-learning runs and the region-identification experiment.

One run: label a small seed set, train, then repeat select K / query the
oracle / retrain for N iterations, recording test accuracy after every
training.  The oracle is the only path from an unlabeled id to its label
and counts every query, so label accounting can be asserted exactly.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.metrics import adjusted_rand_score

from . import acquisition as acq
from .clustering import kmeans
from .data import Sentence, generate_synthetic
from .interpret import interpretation_matrix, pool_word_values
from .models import Model, ModelConfig, TrainConfig, train_model
from .seeding import rng

STRATEGIES = ("alden", "rnd", "egl", "bald", "coreset", "badge")


class LabelLeakError(Exception):
    """An id was labeled outside the oracle protocol."""


class LabelOracle:
    """Holds the ground-truth labels of the training pool.

    ``reveal_seed`` bootstraps the initial labeled set and is not counted;
    every subsequent label must come through ``query``, which counts, and
    an id can be labeled only once.
    """

    def __init__(self, labels: dict[int, int]):
        self._labels = dict(labels)
        self._given: set[int] = set()
        self.query_count = 0

    def _take(self, ids) -> list[int]:
        out = []
        for i in ids:
            if i in self._given:
                raise LabelLeakError(f"sample {i} was already labeled")
            if i not in self._labels:
                raise KeyError(f"sample {i} is not in the training pool")
            self._given.add(i)
            out.append(self._labels[i])
        return out

    def reveal_seed(self, ids) -> list[int]:
        return self._take(ids)

    def query(self, ids) -> list[int]:
        labels = self._take(ids)
        self.query_count += len(ids)
        return labels


@dataclass(frozen=True)
class ALConfig:
    """One active-learning experiment (a single strategy, a single model)."""

    strategy: str
    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    seed_fraction: float = 0.02
    budget_fraction: float = 0.02
    iterations: int = 24
    bald_passes: int = 20
    interpretation_mode: str = "scalar"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.seed_fraction + self.iterations * self.budget_fraction > 1.0 + 1e-9:
            raise ValueError("budget exceeds the training pool")


@dataclass(frozen=True)
class LearningCurve:
    """(labeled fraction, test accuracy) after every training, plus its nAUC."""

    points: tuple[tuple[float, float], ...]
    nauc: float


@dataclass(frozen=True)
class SelectionRecord:
    iteration: int
    rank: int
    sample_id: int
    strategy: str
    score: float


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def normalized_auc(points) -> float:
    """Trapezoidal area of accuracy over labeled fraction, divided by the span."""
    points = list(points)
    if len(points) < 2:
        raise ValueError("normalized_auc needs at least 2 curve points")
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    if np.any(np.diff(x) <= 0):
        raise ValueError("labeled fractions must be strictly increasing")
    return float(np.trapezoid(y, x) / (x[-1] - x[0]))


def _select(cfg: ALConfig, model: Model, pool: acq.PoolState, k: int,
            seed: int, iteration: int) -> tuple[list[int], list[float]]:
    if cfg.strategy == "rnd":
        return acq.random_select(pool, k, seed)
    if cfg.strategy == "alden":
        interps = pool_word_values(model, pool.all_samples(), cfg.interpretation_mode)
        return acq.alden_select(pool, k, interps, model.params["emb"].values,
                                cfg.interpretation_mode)
    if cfg.strategy == "egl":
        return acq.egl_select(model, pool, k)
    if cfg.strategy == "bald":
        return acq.bald_select(model, pool, k, cfg.bald_passes, seed)
    if cfg.strategy == "coreset":
        samples = pool.all_samples()
        reps = model.representations(samples)
        return acq.coreset_select(pool, k, {s.id: reps[i] for i, s in enumerate(samples)})
    if cfg.strategy == "badge":
        embeds = acq.badge_gradient_embeddings(model, pool.unlabeled_samples())
        return acq.badge_select(pool, k, seed, embeds)
    raise ValueError(cfg.strategy)


def run_active_learning(cfg: ALConfig, train_set: list[Sentence], test_set: list[Sentence],
                        seed: int, embeddings: np.ndarray | None = None,
                        ) -> tuple[LearningCurve, list[SelectionRecord], LabelOracle]:
    """One seeded run of the select/label/retrain loop.

    Labels of the training set are moved into the oracle before anything
    else sees them; strategies only ever receive unlabeled feature views.
    Test accuracy is recorded after every training, including the seed
    model, giving iterations+1 curve points.  ``embeddings`` seeds the
    embedding table of every freshly initialized model.
    """
    if any(s.label is None for s in train_set):
        raise ValueError("the training split must come with oracle labels")
    oracle = LabelOracle({s.id: s.label for s in train_set})
    pool = acq.PoolState([replace(s, label=None) for s in train_set])

    n_train = len(train_set)
    k = round_half_up(cfg.budget_fraction * n_train)
    n_seed = round_half_up(cfg.seed_fraction * n_train)
    if k < 1 or n_seed < 1:
        raise ValueError("seed set and budget must round to at least 1 sample")
    if n_seed + cfg.iterations * k > n_train:
        raise ValueError("budget exhausts the unlabeled pool")

    seed_ids = [int(i) for i in rng(seed, "seed-set").choice(
        np.array(pool.unlabeled), size=n_seed, replace=False)]
    pool.mark_labeled(seed_ids, oracle.reveal_seed(seed_ids))

    model = Model.build(cfg.model, seed=0, embeddings=embeddings)
    curve_points = []
    records: list[SelectionRecord] = []

    def retrain(iteration: int):
        hyper = replace(cfg.train, seed=int(rng(seed, "train", iteration).integers(2 ** 31)))
        train_model(model, pool.labeled_samples(), hyper)
        curve_points.append((len(pool.labeled) / n_train, model.accuracy(test_set)))

    retrain(0)
    for n in range(1, cfg.iterations + 1):
        try:
            picked, scores = _select(cfg, model, pool, k,
                                     seed=int(rng(seed, "select", n).integers(2 ** 31)),
                                     iteration=n)
        except Exception as exc:
            raise RuntimeError(f"strategy {cfg.strategy} failed at iteration {n}: {exc}") from exc
        pool.mark_labeled(picked, oracle.query(picked))
        records.extend(SelectionRecord(n, r, sid, cfg.strategy, score)
                       for r, (sid, score) in enumerate(zip(picked, scores), start=1))
        retrain(n)

    expected = k * cfg.iterations
    if oracle.query_count != expected:
        raise LabelLeakError(f"oracle answered {oracle.query_count} queries, expected {expected}")
    nauc = normalized_auc(curve_points) if len(curve_points) >= 2 else float("nan")
    return LearningCurve(tuple(curve_points), nauc), records, oracle


# ---------------------------------------------------------------------------
# multi-run benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    strategy: str
    run: int
    curve: LearningCurve
    records: tuple[SelectionRecord, ...]


def _one_run(args) -> RunResult:
    cfg, train_set, test_set, run_idx, base_seed, embeddings = args
    curve, records, _ = run_active_learning(cfg, train_set, test_set,
                                            seed=int(rng(base_seed, "run", run_idx).integers(2 ** 31)),
                                            embeddings=embeddings)
    return RunResult(cfg.strategy, run_idx, curve, tuple(records))


def run_benchmark(configs: list[ALConfig], train_set, test_set, runs: int,
                  base_seed: int, workers: int = 1,
                  embeddings: np.ndarray | None = None) -> list[RunResult]:
    """Run every (config, run) pair; results are deterministic per pair and
    returned sorted, so the worker count never changes the output."""
    jobs = [(cfg, train_set, test_set, r, base_seed, embeddings)
            for cfg in configs for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    return sorted(results, key=lambda r: (r.strategy, r.run))


def median_nauc(results: list[RunResult], strategy: str) -> float:
    naucs = [r.curve.nauc for r in results if r.strategy == strategy]
    if not naucs:
        raise ValueError(f"no runs for strategy {strategy}")
    return float(np.median(naucs))


# ---------------------------------------------------------------------------
# region identification on synthetic 2-D data
# ---------------------------------------------------------------------------

FIG_REPRESENTATIONS = ("interpretation", "coreset", "badge")


def figure_experiment(n: int = 2000, seed: int = 0, hidden: int = 100,
                      epochs: int = 60) -> dict[str, float]:
    """Cluster three per-sample representations and score them against the
    ground-truth triangle regions.

    Trains a 2-D MLP on the synthetic saddle data, builds (a) input
    gradients, (b) penultimate activations, (c) output-layer loss-gradient
    embeddings at pseudo-labels, runs 4-means on each, and returns the
    adjusted Rand index of each clustering versus the region tags.
    """
    points = generate_synthetic(n, seed)
    config = ModelConfig(kind="mlp2d", hidden=hidden, dropout=0.0)
    model = Model.build(config, seed=int(rng(seed, "fig-init").integers(2 ** 31)))
    train_model(model, points, TrainConfig(lr=0.05, epochs=epochs, batch_size=32,
                                           seed=int(rng(seed, "fig-train").integers(2 ** 31)),
                                           reinit=False))

    interp = interpretation_matrix(model, points)
    reps = model.representations(points)
    probs = model.predict_proba(points)
    pseudo = (probs > 0.5).astype(np.float64)
    badge = (probs - pseudo)[:, None] * reps

    regions = np.array([p.region for p in points])
    out = {}
    for name, mat in zip(FIG_REPRESENTATIONS, (interp, reps, badge)):
        assignments, _ = kmeans(mat, 4, seed=int(rng(seed, "fig-kmeans", name).integers(2 ** 31)))
        out[name] = float(adjusted_rand_score(regions, assignments))
    return out


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

def atomic_write(path: str, text: str) -> None:
    """Write whole-file-or-nothing via a temp file and rename."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def curves_csv(results: list[RunResult]) -> str:
    lines = ["run,iteration,labeled_fraction,accuracy"]
    for res in results:
        for it, (frac, acc) in enumerate(res.curve.points):
            lines.append(f"{res.run},{it},{frac:.6f},{acc:.6f}")
    return "\n".join(lines) + "\n"


def summary_csv(results: list[RunResult], model: str, dataset: str) -> str:
    lines = ["strategy,model,dataset,run,nauc"]
    for res in results:
        lines.append(f"{res.strategy},{model},{dataset},{res.run},{res.curve.nauc:.6f}")
    return "\n".join(lines) + "\n"


def selections_csv(records) -> str:
    """One run's selection log (per-run file, one row per pick)."""
    lines = ["iteration,rank,sample_id,strategy,score"]
    for rec in records:
        lines.append(f"{rec.iteration},{rec.rank},{rec.sample_id},{rec.strategy},{rec.score:.6f}")
    return "\n".join(lines) + "\n"


def figure_csv(rows: list[tuple[int, str, float]]) -> str:
    lines = ["seed,representation,ari"]
    for seed, name, ari in rows:
        lines.append(f"{seed},{name},{ari:.6f}")
    return "\n".join(lines) + "\n"
