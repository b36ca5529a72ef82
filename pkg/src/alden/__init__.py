"""Active-learning laboratory built on a small reverse-mode autodiff core.

The package selects which samples of an unlabeled pool to label next.  Its
main strategy scores a sentence by how far the gradient-based contribution
of its most unusual word sits from the contributions already observed in
the labeled set; five standard baselines (random, expected gradient length,
MC-dropout disagreement, greedy k-center, gradient-embedding k-means++)
share the same harness for comparison.
"""

from .autodiff import Tape, Tensor, finite_difference_check
from .data import (Sentence, SyntheticPoint, Vocab, generate_synthetic,
                   load_corpus, load_embeddings, make_benchmark_corpus, split)
from .models import Model, ModelConfig, TrainConfig, train_model
from .interpret import (SampleInterpretation, WordInterpretation, interpret_sample,
                        interpret_words, linear_residual, pool_word_values)
from .acquisition import (AldenDiversityIndex, PoolState, alden_select, badge_select,
                          bald_score, coreset_select, egl_word_score, random_select)
from .clustering import kmeans
from .experiment import (ALConfig, LabelOracle, LearningCurve, figure_experiment,
                         normalized_auc, run_active_learning, run_benchmark)

__version__ = "0.1.0"

__all__ = [
    "Tape", "Tensor", "finite_difference_check",
    "Sentence", "SyntheticPoint", "Vocab", "generate_synthetic", "load_corpus",
    "load_embeddings", "make_benchmark_corpus", "split",
    "Model", "ModelConfig", "TrainConfig", "train_model",
    "SampleInterpretation", "WordInterpretation", "interpret_sample",
    "interpret_words", "linear_residual", "pool_word_values",
    "AldenDiversityIndex", "PoolState", "alden_select", "badge_select",
    "bald_score", "coreset_select", "egl_word_score", "random_select",
    "kmeans",
    "ALConfig", "LabelOracle", "LearningCurve", "figure_experiment",
    "normalized_auc", "run_active_learning", "run_benchmark",
]
