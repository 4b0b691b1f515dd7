"""Distributed one-vs-rest linear classifiers with weight pruning for extreme multi-label data."""

from .data import Dataset, FormatError, LabelMatrix, SparseVector, load_xmc, row_normalize, save_xmc
from .engine import TrainConfig, make_sign_view, prune, run_training, train_batch, train_label
from .metrics import MetricReport, evaluate, evaluate_rankings, ndcg_at_k, precision_at_k
from .powerlaw import PowerLawSpec, generate_powerlaw, label_frequency_stats, train_test_split
from .predict import load_model, predict_batch, predict_file, predict_topk, score_block
from .store import IncompleteModelError, ModelManifest, WeightBlock, model_stats, read_block, write_block
from .tron import SignVector, SolverConfig, SolverResult, gradient, hessian_vec, objective, solve

__version__ = "0.1.0"
