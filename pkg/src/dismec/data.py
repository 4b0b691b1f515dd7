"""Sparse containers and ingestion for extreme multi-label datasets.

Features are kept as a ``scipy.sparse.csr_matrix`` with canonical rows
(sorted, duplicate-free column indices and no explicit zeros).  Label sets
are kept in a lightweight CSR-like :class:`LabelMatrix`.

The text format read and written here is the one used by the Extreme
Classification Repository::

    N D L
    l1,l2,...,lk idx1:val1 idx2:val2 ...

with 0-based label and feature ids.  A row without labels starts with a
space.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

__all__ = [
    "SparseVector",
    "LabelMatrix",
    "Dataset",
    "FormatError",
    "check_csr",
    "load_xmc",
    "save_xmc",
    "row_normalize",
]


class FormatError(ValueError):
    """Raised for malformed dataset or model files."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sorted sparse vector with no stored zeros."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values)
        if val.dtype.kind != "f":
            val = val.astype(np.float64)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range for dimension {self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(val == 0):
                raise ValueError("stored values must be nonzero")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self):
        return int(self.indices.size)

    @classmethod
    def from_dense(cls, w):
        w = np.asarray(w)
        (idx,) = np.nonzero(w)
        return cls(idx, w[idx], w.shape[0])

    @classmethod
    def empty(cls, dim, dtype=np.float64):
        return cls(np.zeros(0, np.int64), np.zeros(0, dtype), dim)

    def to_dense(self):
        out = np.zeros(self.dim, dtype=self.values.dtype)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseVector(nnz={self.nnz}, dim={self.dim})"


class LabelMatrix:
    """Per-row sets of positive label ids, stored CSR-style.

    ``indptr`` has ``n_rows + 1`` entries and row ``i`` owns
    ``indices[indptr[i]:indptr[i + 1]]``, sorted and duplicate-free.
    """

    def __init__(self, indptr, indices, n_labels):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.n_labels = int(n_labels)
        self._inverted = None
        self._validate()

    def _validate(self):
        ip, ix = self.indptr, self.indices
        if ip.ndim != 1 or ip.size < 1 or ip[0] != 0 or ip[-1] != ix.size:
            raise ValueError("malformed label indptr")
        if np.any(np.diff(ip) < 0):
            raise ValueError("label indptr must be non-decreasing")
        if ix.size:
            if ix.min() < 0 or ix.max() >= self.n_labels:
                raise ValueError(f"label id out of range for L={self.n_labels}")
            d = np.diff(ix)
            # a row boundary is the only place where ids may go down
            inner = np.ones(ix.size - 1, dtype=bool)
            starts = ip[1:-1]
            starts = starts[(starts > 0) & (starts < ix.size)]
            inner[starts - 1] = False
            if np.any(d[inner] <= 0):
                raise ValueError("per-row label ids must be strictly increasing")

    @classmethod
    def from_rows(cls, rows, n_labels=None):
        """Build from an iterable of label collections (deduplicated, sorted)."""
        rows = [np.unique(np.asarray(list(r), dtype=np.int64)) for r in rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r.size for r in rows])
        indices = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        if n_labels is None:
            n_labels = int(indices.max()) + 1 if indices.size else 0
        return cls(indptr, indices, n_labels)

    @property
    def n_rows(self):
        return self.indptr.size - 1

    @property
    def nnz(self):
        return int(self.indices.size)

    def row(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def __iter__(self):
        for i in range(self.n_rows):
            yield self.row(i)

    def __len__(self):
        return self.n_rows

    def to_csr(self):
        data = np.ones(self.indices.size, dtype=np.int8)
        return sp.csr_matrix(
            (data, self.indices, self.indptr), shape=(self.n_rows, self.n_labels)
        )

    def inverted(self):
        """Label -> rows index as ``(indptr, rows)``; computed once and cached."""
        if self._inverted is None:
            csc = self.to_csr().tocsc()
            csc.sort_indices()
            self._inverted = (csc.indptr.astype(np.int64), csc.indices.astype(np.int64))
        return self._inverted

    def label_counts(self):
        return np.bincount(self.indices, minlength=self.n_labels)

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return LabelMatrix.from_rows((self.row(i) for i in rows), self.n_labels)

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return (
            self.n_labels == other.n_labels
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


@dataclass(eq=False)
class Dataset:
    features: sp.csr_matrix
    labels: LabelMatrix

    def __post_init__(self):
        check_csr(self.features)
        if self.features.shape[0] != self.labels.n_rows:
            raise ValueError(
                f"row count mismatch: {self.features.shape[0]} feature rows, "
                f"{self.labels.n_rows} label rows"
            )

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_labels(self):
        return self.labels.n_labels

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels.take(rows))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        a, b = self.features, other.features
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and self.labels == other.labels
        )


def check_csr(X):
    """Validate the canonical CSR invariants; raise ``ValueError`` otherwise."""
    if not sp.isspmatrix_csr(X):
        raise TypeError(f"expected scipy csr_matrix, got {type(X).__name__}")
    ip = X.indptr
    if ip[0] != 0 or ip[-1] != X.nnz or np.any(np.diff(ip) < 0):
        raise ValueError("malformed row offsets")
    if not X.has_canonical_format:
        # has_canonical_format is a cached flag; check the real thing
        for i in range(X.shape[0]):
            cols = X.indices[ip[i]:ip[i + 1]]
            if np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i}: column indices not strictly increasing")
        X.has_canonical_format = True
    return X


def _parse_header(line, lineno, path):
    parts = line.split()
    if len(parts) != 3:
        raise FormatError(f"malformed header {line!r}, expected 'N D L'", lineno, path)
    try:
        n, d, l = (int(p) for p in parts)
    except ValueError:
        raise FormatError(f"non-numeric header {line!r}", lineno, path) from None
    if n < 0 or d < 0 or l < 0:
        raise FormatError(f"negative dimension in header {line!r}", lineno, path)
    return n, d, l


def load_xmc(path, has_header=True, n_features=None, n_labels=None, zero_based=True):
    """Read a dataset in Extreme Classification Repository text format.

    Without a header the dimensions are taken from ``n_features`` /
    ``n_labels`` or inferred from the largest ids seen.  ``zero_based=False``
    shifts LibSVM-style 1-based feature ids down by one on ingest.

    Duplicate labels on a line are dropped (a warning with the total count is
    logged); duplicate feature ids and out-of-range ids raise
    :class:`FormatError` naming the line.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="ascii", newline="\n") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    first = 1
    declared = None
    if has_header:
        if not lines:
            raise FormatError("missing header", 1, path)
        declared = _parse_header(lines[0], 1, path)
        lines = lines[1:]
        first = 2
        n_rows, n_features, n_labels = declared
        if len(lines) != n_rows:
            raise FormatError(
                f"header declares {n_rows} rows but file has {len(lines)}", None, path
            )
    shift = 0 if zero_based else 1
    max_f = n_features if n_features is not None else None
    max_l = n_labels if n_labels is not None else None

    indptr = [0]
    cols = []
    vals = []
    lptr = [0]
    lids = []
    dup_labels = 0
    seen_f = -1
    seen_l = -1
    for k, line in enumerate(lines):
        lineno = first + k
        if line.endswith("\r"):
            line = line[:-1]
        if line.startswith(" ") or line == "":
            label_tok, rest = "", line[1:]
        else:
            label_tok, _, rest = line.partition(" ")
            if ":" in label_tok:
                raise FormatError(f"expected label list, got {label_tok!r}", lineno, path)
        row_labels = []
        if label_tok:
            for t in label_tok.split(","):
                try:
                    lab = int(t)
                except ValueError:
                    raise FormatError(f"non-numeric label {t!r}", lineno, path) from None
                if lab < 0 or (max_l is not None and lab >= max_l):
                    raise FormatError(f"label id {lab} out of range (L={max_l})", lineno, path)
                row_labels.append(lab)
        uniq = sorted(set(row_labels))
        dup_labels += len(row_labels) - len(uniq)
        if uniq:
            seen_l = max(seen_l, uniq[-1])
        lids.extend(uniq)
        lptr.append(len(lids))

        row_cols = []
        row_vals = []
        for tok in rest.split():
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise FormatError(f"expected 'index:value', got {tok!r}", lineno, path)
            try:
                idx = int(idx_s) - shift
            except ValueError:
                raise FormatError(f"non-numeric feature id {idx_s!r}", lineno, path) from None
            try:
                val = float(val_s)
            except ValueError:
                raise FormatError(f"cannot parse value {val_s!r}", lineno, path) from None
            if idx < 0 or (max_f is not None and idx >= max_f):
                raise FormatError(
                    f"feature id {idx + shift} out of range (D={max_f})", lineno, path
                )
            row_cols.append(idx)
            row_vals.append(val)
        if row_cols:
            order = np.argsort(row_cols, kind="stable")
            c = np.asarray(row_cols, dtype=np.int64)[order]
            if np.any(np.diff(c) == 0):
                dup = int(c[np.flatnonzero(np.diff(c) == 0)[0]]) + shift
                raise FormatError(f"duplicate feature id {dup}", lineno, path)
            v = np.asarray(row_vals, dtype=np.float64)[order]
            keep = v != 0
            cols.append(c[keep])
            vals.append(v[keep])
            seen_f = max(seen_f, int(c[-1]))
            indptr.append(indptr[-1] + int(keep.sum()))
        else:
            indptr.append(indptr[-1])

    if dup_labels:
        logger.warning("%s: dropped %d duplicate label ids", path, dup_labels)
    if n_features is None:
        n_features = seen_f + 1
    if n_labels is None:
        n_labels = seen_l + 1
    n = len(indptr) - 1
    X = sp.csr_matrix(
        (
            np.concatenate(vals) if vals else np.zeros(0),
            np.concatenate(cols) if cols else np.zeros(0, np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(n, n_features),
    )
    X.has_canonical_format = True
    Y = LabelMatrix(lptr, lids, n_labels)
    ds = Dataset(X, Y)
    ds.duplicate_labels = dup_labels
    return ds


def save_xmc(dataset, path, header=True):
    """Write ``dataset`` in the repository text format (exact float repr)."""
    X, Y = dataset.features, dataset.labels
    out = []
    if header:
        out.append(f"{X.shape[0]} {X.shape[1]} {Y.n_labels}")
    for i in range(X.shape[0]):
        labs = ",".join(str(int(l)) for l in Y.row(i))
        lo, hi = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(
            f"{int(c)}:{float(v)!r}" for c, v in zip(X.indices[lo:hi], X.data[lo:hi])
        )
        out.append(f"{labs} {feats}" if feats else (labs if labs else " "))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(out))
        fh.write("\n")


def row_normalize(X):
    """Scale every nonempty row of a CSR matrix to unit Euclidean norm."""
    X = sp.csr_matrix(X, dtype=np.float64, copy=True)
    counts = np.diff(X.indptr)
    # divide by the row max first so squaring cannot under- or overflow
    peak = np.asarray(abs(X).max(axis=1).todense()).ravel()
    peak[peak == 0] = 1.0
    X.data /= np.repeat(peak, counts)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    X.data /= np.repeat(norms, counts)
    return X
