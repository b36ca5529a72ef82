"""Tests for the active-learning loop, oracle accounting, and metrics."""

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from alden.data import Sentence, generate_synthetic, load_corpus, make_benchmark_corpus, split, write_tsv
from alden.experiment import (ALConfig, LabelLeakError, LabelOracle, figure_experiment,
                              normalized_auc, round_half_up, run_active_learning,
                              run_benchmark, median_nauc, curves_csv, selections_csv,
                              summary_csv)
from alden.models import ModelConfig, TrainConfig


def tiny_setup(n=120, seed=0):
    rows = make_benchmark_corpus(n=n, seed=seed, n_cues=20, n_filler=60, n_regions=3)
    sentences = []
    from alden.data import Vocab, tokenize
    vocab = Vocab()
    for i, (label, text) in enumerate(rows):
        sentences.append(Sentence(id=i, tokens=tuple(vocab.add(t) for t in tokenize(text)),
                                  label=label))
    train, _val, test = split(sentences, seed=seed)
    return train, test, vocab


def tiny_config(strategy, vocab, iters=2, epochs=2):
    model = ModelConfig(kind="cnn", hidden=6, embedding_dim=6, vocab_size=len(vocab),
                        dropout=0.5)
    return ALConfig(strategy=strategy, model=model,
                    train=TrainConfig(lr=0.05, epochs=epochs, batch_size=16),
                    seed_fraction=0.1, budget_fraction=0.1, iterations=iters,
                    bald_passes=3)


class TestNormalizedAUC:
    def test_flat_curve(self):
        pts = [(0.02 + 0.02 * i, 0.7) for i in range(25)]
        assert normalized_auc(pts) == pytest.approx(0.7)

    def test_triangle(self):
        assert normalized_auc([(0.0, 0.0), (1.0, 1.0)]) == pytest.approx(0.5)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            normalized_auc([(0.5, 0.5)])

    def test_collinear_point_insertion_invariant(self):
        base = [(0.0, 0.2), (0.4, 0.6), (1.0, 0.9)]
        mid = (0.2, 0.4)  # exactly on the first segment
        with_mid = sorted(base + [mid])
        assert abs(normalized_auc(base) - normalized_auc(with_mid)) <= 1e-12

    def test_fraction_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            normalized_auc([(0.2, 0.5), (0.2, 0.6)])

    def test_round_half_up(self):
        assert round_half_up(0.5) == 1
        assert round_half_up(1.5) == 2
        assert round_half_up(1.49) == 1


class TestLabelOracle:
    def test_counter_counts_queries_only(self):
        oracle = LabelOracle({1: 0, 2: 1, 3: 1, 4: 0})
        assert oracle.reveal_seed([1]) == [0]
        assert oracle.query_count == 0
        assert oracle.query([2, 3]) == [1, 1]
        assert oracle.query_count == 2

    def test_double_labeling_rejected(self):
        oracle = LabelOracle({1: 0, 2: 1})
        oracle.query([1])
        with pytest.raises(LabelLeakError):
            oracle.query([1])
        with pytest.raises(LabelLeakError):
            oracle.reveal_seed([1])

    def test_labels_pass_through(self):
        labels = {i: i % 2 for i in range(10)}
        oracle = LabelOracle(labels)
        assert oracle.query(list(range(10))) == [labels[i] for i in range(10)]

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            LabelOracle({1: 0}).query([99])


class TestRunActiveLearning:
    def test_zero_iterations_single_point(self):
        train, test, vocab = tiny_setup()
        cfg = tiny_config("rnd", vocab, iters=0)
        curve, records, oracle = run_active_learning(cfg, train, test, seed=1)
        assert len(curve.points) == 1
        assert records == [] and oracle.query_count == 0

    def test_same_seed_identical_curves(self):
        train, test, vocab = tiny_setup()
        cfg = tiny_config("rnd", vocab)
        c1, r1, _ = run_active_learning(cfg, train, test, seed=5)
        c2, r2, _ = run_active_learning(cfg, train, test, seed=5)
        assert c1 == c2 and r1 == r2

    def test_conservation_and_counter(self):
        train, test, vocab = tiny_setup()
        cfg = tiny_config("rnd", vocab, iters=3)
        k = round_half_up(0.1 * len(train))
        n_seed = round_half_up(0.1 * len(train))
        curve, records, oracle = run_active_learning(cfg, train, test, seed=2)
        assert oracle.query_count == 3 * k
        assert len(curve.points) == 4
        fractions = [p[0] for p in curve.points]
        expected = [(n_seed + i * k) / len(train) for i in range(4)]
        assert fractions == pytest.approx(expected)
        assert all(0.0 <= p[1] <= 1.0 for p in curve.points)

    @pytest.mark.parametrize("strategy", ["alden", "egl", "bald", "coreset", "badge"])
    def test_every_strategy_completes(self, strategy):
        train, test, vocab = tiny_setup()
        cfg = tiny_config(strategy, vocab, iters=1)
        curve, records, oracle = run_active_learning(cfg, train, test, seed=3)
        k = round_half_up(0.1 * len(train))
        assert oracle.query_count == k
        assert len(records) == k
        assert len({r.sample_id for r in records}) == k

    def test_unlabeled_pool_never_exposes_labels(self):
        train, test, vocab = tiny_setup()
        cfg = tiny_config("rnd", vocab, iters=1)
        # the loop constructs the pool from stripped copies; probing the pool
        # type directly documents the contract
        from alden.acquisition import PoolState
        with pytest.raises(ValueError):
            PoolState(train)  # labeled samples are rejected outright

    def test_labels_required(self):
        train, test, vocab = tiny_setup()
        stripped = [Sentence(id=s.id, tokens=s.tokens, label=None) for s in train]
        with pytest.raises(ValueError, match="labels"):
            run_active_learning(tiny_config("rnd", vocab), stripped, test, seed=0)


class TestRunBenchmark:
    def test_worker_count_does_not_change_results(self):
        train, test, vocab = tiny_setup()
        cfgs = [tiny_config("rnd", vocab, iters=1), tiny_config("coreset", vocab, iters=1)]
        seq = run_benchmark(cfgs, train, test, runs=2, base_seed=7, workers=1)
        par = run_benchmark(cfgs, train, test, runs=2, base_seed=7, workers=2)
        assert [(r.strategy, r.run, r.curve) for r in seq] == \
               [(r.strategy, r.run, r.curve) for r in par]

    def test_median_nauc(self):
        train, test, vocab = tiny_setup()
        results = run_benchmark([tiny_config("rnd", vocab, iters=1)], train, test,
                                runs=3, base_seed=1, workers=1)
        naucs = sorted(r.curve.nauc for r in results)
        assert median_nauc(results, "rnd") == pytest.approx(naucs[1])

    def test_csv_shapes(self):
        train, test, vocab = tiny_setup()
        results = run_benchmark([tiny_config("rnd", vocab, iters=2)], train, test,
                                runs=1, base_seed=2, workers=1)
        curves = curves_csv(results).splitlines()
        assert curves[0] == "run,iteration,labeled_fraction,accuracy"
        assert len(curves) == 1 + 3  # header + (iters+1) points
        summary = summary_csv(results, "cnn", "toy").splitlines()
        assert summary[0] == "strategy,model,dataset,run,nauc" and len(summary) == 2
        sel = selections_csv(results[0].records).splitlines()
        assert sel[0] == "iteration,rank,sample_id,strategy,score"
        k = round_half_up(0.1 * len(train))
        assert len(sel) == 1 + 2 * k


class TestFigureExperiment:
    def test_smoke_and_report_shape(self):
        aris = figure_experiment(n=300, seed=0, hidden=24, epochs=15)
        assert set(aris) == {"interpretation", "coreset", "badge"}
        assert all(-1.0 <= v <= 1.0 for v in aris.values())

    def test_random_assignment_ari_near_zero(self):
        points = generate_synthetic(2000, seed=1)
        regions = [p.region for p in points]
        random_assign = np.random.default_rng(0).integers(0, 4, size=2000)
        assert abs(adjusted_rand_score(regions, random_assign)) <= 0.05

    def test_identical_partition_ari_one(self):
        points = generate_synthetic(500, seed=2)
        regions = [p.region for p in points]
        assert adjusted_rand_score(regions, regions) == 1.0
