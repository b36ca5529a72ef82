"""Command-line front end: benchmark runs, the region demo, corpus inspection.

Exit codes: 0 success, 2 invalid flags, 3 data errors, 4 numerical failure.
Every output file is written atomically; the manifest echoes the resolved
configuration with a hash over every result-affecting flag, so equal hashes
imply byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import experiment as exp
from .data import CorpusError, load_corpus, load_embeddings, split
from .models import ModelConfig, NumericalError, TrainConfig
from .seeding import rng

EXIT_FLAGS = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alden", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an active-learning benchmark")
    run.add_argument("--dataset", required=True, help="corpus path")
    run.add_argument("--format", required=True, choices=["posneg", "tsv"])
    run.add_argument("--model", required=True, choices=["cnn", "meanpool"])
    run.add_argument("--strategy", required=True, choices=list(exp.STRATEGIES))
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--budget-frac", type=float, default=0.02)
    run.add_argument("--seed-frac", type=float, default=0.02)
    run.add_argument("--iters", type=int, default=24)
    run.add_argument("--embeddings", default=None, help="word2vec text file (optional)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--subsample-train", type=int, default=0,
                     help="cap the training split at this many sentences (0 = off)")
    run.add_argument("--epochs", type=int, default=30)
    run.add_argument("--lr", type=float, default=0.05)
    run.add_argument("--batch-size", type=int, default=32)
    run.add_argument("--workers", type=int, default=1,
                     help="parallel runs (does not affect results)")

    fig = sub.add_parser("fig1", help="region identification by clustered representations")
    fig.add_argument("--n", type=int, default=2000)
    fig.add_argument("--seeds", type=int, default=10)
    fig.add_argument("--out", required=True)

    inspect = sub.add_parser("inspect", help="print corpus statistics")
    inspect.add_argument("--dataset", required=True)
    inspect.add_argument("--format", required=True, choices=["posneg", "tsv"])
    return parser


# result-affecting flags, in manifest order
_HASHED_FLAGS = ("command", "dataset", "format", "model", "strategy", "seed", "runs",
                 "budget_frac", "seed_frac", "iters", "embeddings", "subsample_train",
                 "epochs", "lr", "batch_size", "n", "seeds")


def manifest_text(args: argparse.Namespace, artifacts: list[str]) -> str:
    items = [(k, getattr(args, k)) for k in _HASHED_FLAGS if hasattr(args, k)]
    digest = hashlib.sha256(repr(items).encode("utf-8")).hexdigest()
    lines = [f"{k}={v}" for k, v in items]
    lines.append(f"config_hash={digest}")
    lines.extend(f"artifact={name}" for name in sorted(artifacts))
    return "\n".join(lines) + "\n"


def cmd_run(args: argparse.Namespace) -> int:
    if args.runs < 1 or args.iters < 0 or args.subsample_train < 0:
        return _fail(EXIT_FLAGS, "runs must be >= 1, iters and subsample-train >= 0")
    try:
        sentences, vocab = load_corpus(args.dataset, args.format)
        embeddings = None
        if args.embeddings is not None:
            embeddings = load_embeddings(args.embeddings, vocab, dim=100, seed=args.seed)
    except CorpusError as exc:
        return _fail(EXIT_DATA, str(exc))

    train_set, _val_set, test_set = split(sentences, seed=args.seed)
    if args.subsample_train and args.subsample_train < len(train_set):
        keep = rng(args.seed, "subsample").choice(len(train_set), size=args.subsample_train,
                                                  replace=False)
        train_set = [train_set[i] for i in sorted(keep)]

    try:
        model_cfg = ModelConfig(kind=args.model, vocab_size=len(vocab))
        train_cfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size)
        cfg = exp.ALConfig(strategy=args.strategy, model=model_cfg, train=train_cfg,
                           seed_fraction=args.seed_frac, budget_fraction=args.budget_frac,
                           iterations=args.iters)
        k = exp.round_half_up(args.budget_frac * len(train_set))
        n_seed = exp.round_half_up(args.seed_frac * len(train_set))
        if k < 1 or n_seed < 1 or n_seed + args.iters * k > len(train_set):
            raise ValueError(f"seed {n_seed} + {args.iters} x {k} labels does not fit "
                             f"a training split of {len(train_set)}")
    except ValueError as exc:
        return _fail(EXIT_FLAGS, str(exc))

    try:
        results = exp.run_benchmark([cfg], train_set, test_set, runs=args.runs,
                                    base_seed=args.seed, workers=args.workers,
                                    embeddings=embeddings)
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except RuntimeError as exc:
        return _fail(EXIT_NUMERIC, f"run failed: {exc}")

    os.makedirs(args.out, exist_ok=True)
    dataset_name = os.path.basename(os.path.normpath(args.dataset))
    artifacts = {
        "curves.csv": exp.curves_csv(results),
        "summary.csv": exp.summary_csv(results, args.model, dataset_name),
    }
    for res in results:
        artifacts[f"selections_run{res.run}.csv"] = exp.selections_csv(res.records)
    artifacts["manifest.txt"] = manifest_text(args, list(artifacts) + ["manifest.txt"])
    for name, text in artifacts.items():
        exp.atomic_write(os.path.join(args.out, name), text)

    med = exp.median_nauc(results, args.strategy)
    print(f"strategy={args.strategy} runs={args.runs} median_nauc={med:.6f}")
    print(f"wrote {len(artifacts)} files to {args.out}")
    return 0


def cmd_fig1(args: argparse.Namespace) -> int:
    if args.n <= 0 or args.seeds <= 0:
        return _fail(EXIT_FLAGS, "--n and --seeds must be positive")
    try:
        rows = []
        per_rep: dict[str, list[float]] = {name: [] for name in exp.FIG_REPRESENTATIONS}
        for seed in range(args.seeds):
            aris = exp.figure_experiment(n=args.n, seed=seed)
            for name in exp.FIG_REPRESENTATIONS:
                rows.append((seed, name, aris[name]))
                per_rep[name].append(aris[name])
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, str(exc))

    os.makedirs(args.out, exist_ok=True)
    exp.atomic_write(os.path.join(args.out, "fig1.csv"), exp.figure_csv(rows))
    exp.atomic_write(os.path.join(args.out, "manifest.txt"),
                     manifest_text(args, ["fig1.csv", "manifest.txt"]))
    for name in exp.FIG_REPRESENTATIONS:
        print(f"{name}: median_ari={float(np.median(per_rep[name])):.4f}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        sentences, vocab = load_corpus(args.dataset, args.format)
    except CorpusError as exc:
        return _fail(EXIT_DATA, str(exc))
    lengths = np.array([len(s.tokens) for s in sentences])
    labels = np.array([s.label for s in sentences])
    print(f"sentences={len(sentences)}")
    print(f"vocab={len(vocab)}")
    print(f"positive_fraction={labels.mean():.4f}")
    print(f"length_p50={int(np.percentile(lengths, 50))} "
          f"length_p90={int(np.percentile(lengths, 90))} length_max={int(lengths.max())}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_FLAGS if exc.code not in (0, None) else 0
    if args.command == "run":
        return cmd_run(args)
    if args.command == "fig1":
        return cmd_fig1(args)
    return cmd_inspect(args)


if __name__ == "__main__":
    sys.exit(main())
