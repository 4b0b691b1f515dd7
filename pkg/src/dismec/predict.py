"""Top-k prediction against a block model.

Each block is scored independently (``x . w_l`` for its labels), keeps its
own top k, and the per-block candidates are merged.  Ranking is by
descending score with ties going to the smaller label id, so the merged
result equals a brute-force sort over all L labels.
"""

from __future__ import annotations

import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from .data import SparseVector, row_normalize
from .store import load_blocks

logger = logging.getLogger(__name__)

__all__ = [
    "BlockModel",
    "load_model",
    "rank",
    "score_block",
    "predict_topk",
    "predict_batch",
    "predict_file",
    "write_predictions",
    "read_predictions",
]


def rank(scores, labels, k):
    """Indices of the ``k`` best entries: descending score, ascending label on ties."""
    order = np.lexsort((labels, -scores))
    return order[:k]


class _ScoredBlock:
    def __init__(self, block):
        self.block = block
        self.label_start = block.label_start
        self.label_count = block.label_count
        self.labels = np.arange(block.label_start, block.label_start + block.label_count)
        rows = np.concatenate([w.indices for w in block.weights]) if block.weights else []
        cols = np.repeat(np.arange(block.label_count), [w.nnz for w in block.weights])
        vals = (np.concatenate([w.values for w in block.weights]).astype(np.float64)
                if block.weights else [])
        # features x labels, so that x @ Wt gives one score per label
        self.Wt = sp.csr_matrix(
            (vals, (rows, cols)), shape=(block.dim, block.label_count)
        )
        self.Wt.sort_indices()

    def scores(self, Xrows):
        return np.asarray((Xrows @ self.Wt).todense())


class BlockModel:
    """A loaded, complete model ready for scoring."""

    def __init__(self, manifest, blocks):
        self.manifest = manifest
        self.blocks = [_ScoredBlock(b) for b in blocks]

    @property
    def n_labels(self):
        return self.manifest.L

    @property
    def dim(self):
        return self.manifest.D

    def prepare(self, X, normalize=None):
        """Apply training-time preprocessing to rows of test features.

        Feature ids ``>= D`` are dropped (no weights can exist there); the
        number dropped is returned alongside the prepared matrix.
        """
        X = sp.csr_matrix(X, dtype=np.float64)
        dropped = 0
        if X.shape[1] > self.dim:
            dropped = int(X[:, self.dim:].nnz)
            X = X[:, : self.dim]
        elif X.shape[1] < self.dim:
            X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], self.dim))
        if normalize is None:
            normalize = self.manifest.normalize
        if normalize:
            X = row_normalize(X)
        if self.manifest.bias:
            X = sp.hstack([X, np.ones((X.shape[0], 1))], format="csr")
        X.sort_indices()
        return X, dropped


def load_model(model_dir):
    manifest, blocks = load_blocks(model_dir)
    return BlockModel(manifest, blocks)


def _as_model(model):
    return model if isinstance(model, BlockModel) else load_model(model)


def _as_row(x, dim):
    if isinstance(x, SparseVector):
        if x.dim > dim and x.nnz and x.indices[-1] >= dim:
            raise ValueError(f"feature index {x.indices[-1]} >= D={dim}")
        return sp.csr_matrix((x.values, x.indices, [0, x.nnz]), shape=(1, dim))
    if sp.issparse(x):
        x = sp.csr_matrix(x)
        if x.shape[0] != 1 or x.shape[1] > dim:
            raise ValueError(f"expected a single row of width <= {dim}, got {x.shape}")
        return x
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != dim:
        raise ValueError(f"dense input has {x.shape[1]} features, model has D={dim}")
    return sp.csr_matrix(x)


def score_block(x, block, k):
    """Best ``k`` (label, score) pairs of one block for a single input.

    ``block`` is a :class:`~dismec.store.WeightBlock` or an already
    prepared scored block; ``x`` must match the block dimension.
    """
    sb = block if isinstance(block, _ScoredBlock) else _ScoredBlock(block)
    row = _as_row(x, sb.Wt.shape[0])
    if sb.label_count == 0:
        return []
    s = sb.scores(row)[0]
    top = rank(s, sb.labels, k)
    return [(int(sb.labels[j]), float(s[j])) for j in top]


def _merge(cands, k):
    if not cands:
        return []
    labels = np.array([c[0] for c in cands])
    scores = np.array([c[1] for c in cands])
    top = rank(scores, labels, k)
    return [(int(labels[j]), float(scores[j])) for j in top]


def predict_topk(x, model, k, normalize=None, workers=1):
    """Global top-k labels for one raw input vector.

    ``x`` is preprocessed like the training data (normalization and bias as
    recorded in the manifest).  ``k`` larger than L is clamped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    model = _as_model(model)
    k = min(k, model.n_labels)
    row, _ = model.prepare(_as_row(x, max(model.dim, _width(x))), normalize)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: score_block(row, b, k), model.blocks))
    else:
        parts = [score_block(row, b, k) for b in model.blocks]
    return _merge([c for p in parts for c in p], k)


def _width(x):
    if isinstance(x, SparseVector):
        return x.dim
    if sp.issparse(x):
        return x.shape[1]
    return np.asarray(x).size


def predict_batch(X, model, k, normalize=None):
    """Top-k for every row of ``X``; same results as calling :func:`predict_topk` per row."""
    if k < 1:
        raise ValueError("k must be >= 1")
    model = _as_model(model)
    k = min(k, model.n_labels)
    Xp, dropped = model.prepare(X, normalize)
    n = Xp.shape[0]
    cand_labels = []
    cand_scores = []
    for sb in model.blocks:
        if sb.label_count == 0:
            continue
        S = sb.scores(Xp)
        kk = min(k, sb.label_count)
        lab = np.broadcast_to(sb.labels, S.shape)
        # lexsort per row: primary -score, secondary label
        order = np.lexsort((lab, -S), axis=1)[:, :kk]
        cand_labels.append(np.take_along_axis(lab, order, axis=1))
        cand_scores.append(np.take_along_axis(S, order, axis=1))
    out = []
    if not cand_labels:
        return [[] for _ in range(n)]
    CL = np.hstack(cand_labels)
    CS = np.hstack(cand_scores)
    order = np.lexsort((CL, -CS), axis=1)[:, :k]
    CL = np.take_along_axis(CL, order, axis=1)
    CS = np.take_along_axis(CS, order, axis=1)
    for i in range(n):
        out.append(list(zip(CL[i].tolist(), CS[i].tolist())))
    return out


def write_predictions(preds, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in preds:
            fh.write(" ".join(f"{l}:{s:.6g}" for l, s in row))
            fh.write("\n")


def read_predictions(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            row = []
            for tok in line.split():
                lab, sep, score = tok.partition(":")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: bad prediction token {tok!r}")
                row.append((int(lab), float(score)))
            rows.append(row)
    return rows


def predict_file(dataset, model, k, out_path, normalize=None, stats_stream=sys.stderr):
    """Predict every row of ``dataset`` and write one ranked line per row.

    Per-instance wall-clock latency is measured after the model is loaded;
    a JSON line with ``n``, ``mean_ms`` and ``p99_ms`` goes to
    ``stats_stream`` and the same dict is returned.
    """
    model = _as_model(model)
    if normalize is not None and normalize != model.manifest.normalize:
        logger.warning(
            "normalization %s at prediction but model was trained with normalization %s",
            "on" if normalize else "off", "on" if model.manifest.normalize else "off",
        )
    X = dataset.features
    dropped = int(X[:, model.dim:].nnz) if X.shape[1] > model.dim else 0
    if dropped:
        logger.warning("ignored %d test feature entries with id >= D=%d", dropped, model.dim)
    preds = []
    lat = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        t0 = time.perf_counter()
        preds.append(predict_topk(X[i], model, k, normalize=normalize))
        lat[i] = time.perf_counter() - t0
    write_predictions(preds, out_path)
    stats = {
        "n": int(lat.size),
        "mean_ms": float(lat.mean() * 1e3) if lat.size else 0.0,
        "p99_ms": float(np.percentile(lat, 99) * 1e3) if lat.size else 0.0,
        "ignored_features": dropped,
    }
    if stats_stream is not None:
        print(json.dumps({"latency": stats}), file=stats_stream)
    return stats
