"""Synthetic power-law multi-label data and label-frequency diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import Dataset, LabelMatrix

__all__ = [
    "InfeasibleSpecError",
    "PowerLawSpec",
    "powerlaw_sizes",
    "generate_powerlaw",
    "train_test_split",
    "LabelFrequencyStats",
    "fit_powerlaw",
    "label_frequency_stats",
]


class InfeasibleSpecError(ValueError):
    pass


@dataclass(frozen=True)
class PowerLawSpec:
    """Parameters of a generated dataset.

    Label ``r`` (1-based rank) gets ``max(1, round(head_size * r**-beta))``
    positive instances.  ``n_rows`` defaults to the smallest row count that
    lets every instance carry between one and three labels with an average
    of two; when given it must satisfy ``n_rows <= total <= 3 * n_rows``.
    """

    n_labels: int
    head_size: int
    beta: float
    n_features: int
    prototype_nnz: int = 20
    noise_nnz: int = 20
    seed: int = 0
    n_rows: int | None = None
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.n_labels < 1:
            raise ValueError("n_labels must be >= 1")
        if self.head_size < 1:
            raise ValueError("head_size must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.n_features < 1 or self.prototype_nnz < 1 or self.noise_nnz < 0:
            raise ValueError("feature counts must be positive")
        if self.prototype_nnz > self.n_features or self.noise_nnz > self.n_features:
            raise ValueError("prototype_nnz and noise_nnz must not exceed n_features")


def powerlaw_sizes(n_labels, head_size, beta):
    """Label sizes ``max(1, round(N1 * r**-beta))`` for ranks 1..n_labels.

    Rounding is half-up.
    """
    r = np.arange(1, n_labels + 1, dtype=np.float64)
    sizes = np.floor(head_size * r ** (-beta) + 0.5).astype(np.int64)
    return np.maximum(sizes, 1)


def _row_capacities(spec, total, rng):
    n = spec.n_rows
    if n is None:
        n = max(spec.head_size, math.ceil(total / 2))
    if spec.head_size > n:
        raise InfeasibleSpecError(
            f"head label needs {spec.head_size} distinct rows but only {n} exist"
        )
    if total < n or total > 3 * n:
        raise InfeasibleSpecError(
            f"{total} positives cannot fill {n} rows with 1..3 labels each"
        )
    caps = np.ones(n, dtype=np.int64)
    extra = total - n
    if extra:
        slots = rng.choice(2 * n, size=extra, replace=False)
        np.add.at(caps, slots // 2, 1)
    return caps


def _assign(sizes, caps, rng):
    # Largest labels first, each into the rows with most remaining room
    # (random tie-break); realizes any feasible bipartite degree sequence.
    remaining = caps.copy()
    rows_of = []
    for size in sizes:
        if np.count_nonzero(remaining) < size:
            raise InfeasibleSpecError("label sizes cannot be realized with 1..3 labels per row")
        key = remaining + rng.random(remaining.size)
        chosen = np.argpartition(-key, size - 1)[:size]
        remaining[chosen] -= 1
        rows_of.append(np.sort(chosen))
    return rows_of


def generate_powerlaw(spec):
    """Generate a dataset whose rank-size curve follows the power law exactly.

    Label ids are assigned in rank order (label 0 is the largest).  Each
    label owns a random sparse prototype with entries in ``[0.5, 1)``; a row
    is the sum of its labels' prototypes plus ``noise_nnz`` random features
    with magnitude below ``noise_scale``, scaled to unit norm.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = powerlaw_sizes(spec.n_labels, spec.head_size, spec.beta)
    total = int(sizes.sum())
    if total < spec.n_labels:
        raise InfeasibleSpecError("fewer positives than labels")
    caps = _row_capacities(spec, total, rng)
    n, d = caps.size, spec.n_features
    rows_of = _assign(sizes, caps, rng)

    label_rows = np.concatenate(rows_of)
    label_ids = np.repeat(np.arange(spec.n_labels, dtype=np.int64), sizes)
    Y = sp.csr_matrix(
        (np.ones(total, dtype=np.int8), (label_rows, label_ids)),
        shape=(n, spec.n_labels),
    )
    Y.sort_indices()
    labels = LabelMatrix(Y.indptr, Y.indices, spec.n_labels)

    proto_cols = np.stack(
        [rng.choice(d, size=spec.prototype_nnz, replace=False) for _ in range(spec.n_labels)]
    )
    proto_vals = rng.uniform(0.5, 1.0, size=proto_cols.shape)
    P = sp.csr_matrix(
        (proto_vals.ravel(), proto_cols.ravel(),
         np.arange(0, proto_cols.size + 1, spec.prototype_nnz)),
        shape=(spec.n_labels, d),
    )
    signal = (Y.astype(np.float64) @ P).tocsr()

    if spec.noise_nnz:
        noise_cols = np.stack(
            [rng.choice(d, size=spec.noise_nnz, replace=False) for _ in range(n)]
        )
        noise_vals = rng.uniform(0.0, spec.noise_scale, size=noise_cols.shape)
        noise = sp.csr_matrix(
            (noise_vals.ravel(), noise_cols.ravel(),
             np.arange(0, noise_cols.size + 1, spec.noise_nnz)),
            shape=(n, d),
        )
        X = (signal + noise).tocsr()
    else:
        X = signal
    X.sum_duplicates()
    X.eliminate_zeros()
    X.sort_indices()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    X = sp.csr_matrix(sp.diags(1.0 / norms) @ X)
    X.sort_indices()
    return Dataset(X, labels)


def train_test_split(dataset, test_fraction, seed=0):
    """Random row split; returns ``(train, test)`` with rows kept in order."""
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n = dataset.n_rows
    n_test = int(round(n * test_fraction))
    test_rows = np.sort(rng.choice(n, size=n_test, replace=False))
    mask = np.ones(n, dtype=bool)
    mask[test_rows] = False
    return dataset.take(np.flatnonzero(mask)), dataset.take(test_rows)


@dataclass
class LabelFrequencyStats:
    ranks: np.ndarray
    label_ids: np.ndarray
    counts: np.ndarray
    head_size_hat: float | None
    beta_hat: float | None

    def table(self):
        return list(zip(self.ranks.tolist(), self.label_ids.tolist(), self.counts.tolist()))


def fit_powerlaw(counts):
    """Least-squares fit of ``log(count) = log(N1) - beta * log(rank)``.

    ``counts`` are in rank order (rank 1 first) and may be real-valued;
    entries below 1 are ignored.  Returns ``(N1_hat, beta_hat)``, or
    ``(None, None)`` when fewer than two counts qualify.
    """
    counts = np.asarray(counts, dtype=np.float64)
    ranks = np.arange(1, counts.size + 1, dtype=np.float64)
    used = counts >= 1
    if used.sum() < 2:
        return None, None
    lx = np.log(ranks[used])
    A = np.column_stack([np.ones_like(lx), lx])
    (intercept, slope), *_ = np.linalg.lstsq(A, np.log(counts[used]), rcond=None)
    return float(np.exp(intercept)), float(-slope)


def label_frequency_stats(Y):
    """Rank labels by positive count (ties by label id) and fit the power law."""
    if Y.n_labels == 0:
        raise ValueError("label matrix has no labels")
    counts = Y.label_counts()
    order = np.lexsort((np.arange(counts.size), -counts))
    sorted_counts = counts[order]
    n1_hat, beta_hat = fit_powerlaw(sorted_counts)
    ranks = np.arange(1, counts.size + 1)
    return LabelFrequencyStats(ranks, order, sorted_counts, n1_hat, beta_hat)
