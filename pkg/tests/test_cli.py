"""CLI contract tests: flags, exit codes, output files, determinism."""

import os
import subprocess
import sys

import pytest

from alden.data import make_benchmark_corpus, write_tsv


@pytest.fixture(scope="module")
def toy_tsv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.tsv"
    write_tsv(str(path), make_benchmark_corpus(n=100, seed=0, n_cues=20, n_filler=60))
    return str(path)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "alden", *args],
                          capture_output=True, text=True)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestRun:
    def test_small_run_produces_expected_curve(self, toy_tsv, tmp_path):
        out = tmp_path / "out"
        res = run_cli("run", "--dataset", toy_tsv, "--format", "tsv", "--model", "meanpool",
                      "--strategy", "rnd", "--seed", "3", "--runs", "1",
                      "--budget-frac", "0.1", "--seed-frac", "0.1", "--iters", "2",
                      "--epochs", "2", "--out", str(out))
        assert res.returncode == 0, res.stderr
        curves = (out / "curves.csv").read_text().splitlines()
        assert len(curves) == 1 + 3  # header + seed point + 2 iterations
        assert (out / "summary.csv").exists()
        assert (out / "selections_run0.csv").exists()
        manifest = (out / "manifest.txt").read_text()
        assert "config_hash=" in manifest and "strategy=rnd" in manifest

    def test_unknown_strategy_exits_2(self, toy_tsv, tmp_path):
        res = run_cli("run", "--dataset", toy_tsv, "--format", "tsv", "--model", "cnn",
                      "--strategy", "nope", "--out", str(tmp_path / "x"))
        assert res.returncode == 2

    def test_missing_dataset_exits_3(self, tmp_path):
        res = run_cli("run", "--dataset", str(tmp_path / "missing.tsv"), "--format", "tsv",
                      "--model", "cnn", "--strategy", "rnd", "--iters", "1",
                      "--out", str(tmp_path / "x"))
        assert res.returncode == 3
        assert "error:" in res.stderr

    def test_identical_invocations_byte_identical(self, toy_tsv, tmp_path):
        args = ("run", "--dataset", toy_tsv, "--format", "tsv", "--model", "meanpool",
                "--strategy", "coreset", "--seed", "9", "--runs", "1",
                "--budget-frac", "0.1", "--seed-frac", "0.1", "--iters", "2",
                "--epochs", "2")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli(*args, "--out", str(out1)).returncode == 0
        assert run_cli(*args, "--out", str(out2)).returncode == 0
        for name in ("curves.csv", "summary.csv", "selections_run0.csv"):
            assert read(out1 / name) == read(out2 / name), name

    def test_impossible_budget_exits_2(self, toy_tsv, tmp_path):
        res = run_cli("run", "--dataset", toy_tsv, "--format", "tsv", "--model", "meanpool",
                      "--strategy", "rnd", "--budget-frac", "0.5", "--iters", "10",
                      "--out", str(tmp_path / "x"))
        assert res.returncode == 2
        assert "error:" in res.stderr


class TestFig1:
    def test_row_count_per_seed(self, tmp_path):
        out = tmp_path / "fig"
        res = run_cli("fig1", "--n", "200", "--seeds", "1", "--out", str(out))
        assert res.returncode == 0, res.stderr
        rows = (out / "fig1.csv").read_text().splitlines()
        assert rows[0] == "seed,representation,ari"
        assert len(rows) == 1 + 3  # one row per representation
        assert "median_ari" in res.stdout

    def test_zero_n_exits_2(self, tmp_path):
        res = run_cli("fig1", "--n", "0", "--out", str(tmp_path / "x"))
        assert res.returncode == 2


class TestInspect:
    def test_counts(self, toy_tsv):
        res = run_cli("inspect", "--dataset", toy_tsv, "--format", "tsv")
        assert res.returncode == 0
        assert "sentences=100" in res.stdout
        assert "vocab=" in res.stdout and "length_p50=" in res.stdout

    def test_missing_file_exits_3(self, tmp_path):
        res = run_cli("inspect", "--dataset", str(tmp_path / "no.tsv"), "--format", "tsv")
        assert res.returncode == 3
