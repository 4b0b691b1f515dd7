"""One-vs-rest training in label batches with pruning and file-based coordination.

Two levels of parallelism:

* across batches, any number of worker processes (possibly on different
  machines sharing ``model_dir``) claim batches by exclusively creating
  ``claims/batch_<b>.claim``;
* inside a batch, labels are trained by a thread pool that shares the one
  feature matrix and the label -> rows index.

Block bytes depend only on the data and the configuration, never on how
work was scheduled.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from filelock import FileLock

from .data import FormatError, SparseVector, row_normalize
from .store import (
    BlockEntry,
    IncompleteModelError,
    ModelManifest,
    WeightBlock,
    block_digest,
    block_path,
    decode_block,
    read_manifest,
    write_block,
    write_manifest,
)
from .tron import SignVector, SolverConfig, solve

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "n_batches",
    "prepare_features",
    "make_sign_view",
    "prune",
    "train_label",
    "train_batch",
    "run_training",
    "IncompleteModelError",
]

DEFAULT_CLAIM_TIMEOUT = 30 * 60.0


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    delta: float = 0.01
    batch_size: int = 1000
    workers_per_batch: int = 1
    solver: SolverConfig = field(default=None)
    normalize: bool = True
    bias: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.workers_per_batch < 1:
            raise ValueError("workers_per_batch must be >= 1")
        if self.solver is None:
            object.__setattr__(self, "solver", SolverConfig(C=self.C))
        elif self.solver.C != self.C:
            raise ValueError(f"solver C={self.solver.C} disagrees with C={self.C}")


def n_batches(n_labels, batch_size):
    return n_labels // batch_size + 1


def prepare_features(X, normalize=True, bias=False):
    """The single training copy of X: optionally row-normalized, bias column appended."""
    X = sp.csr_matrix(X, dtype=np.float64)
    if normalize:
        X = row_normalize(X)
    if bias:
        X = sp.hstack([X, np.ones((X.shape[0], 1))], format="csr")
    X.sort_indices()
    return X


def make_sign_view(Y, label):
    """Signs for ``label`` from the cached inverted index of ``Y``."""
    if not 0 <= label < Y.n_labels:
        raise IndexError(f"label {label} out of range (L={Y.n_labels})")
    indptr, rows = Y.inverted()
    return SignVector(rows[indptr[label]:indptr[label + 1]], Y.n_rows)


def prune(w, delta):
    """Keep exactly the coordinates with ``|w_d| >= delta`` (nonzero ones when 0)."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    w = np.asarray(w)
    keep = np.abs(w) >= delta
    if delta == 0:
        keep &= w != 0
    (idx,) = np.nonzero(keep)
    return SparseVector(idx, w[idx], w.shape[0])


def _to_f32(v):
    return SparseVector(v.indices, v.values.astype(np.float32), v.dim)


def train_label(X, Y, label, cfg, dense=False):
    """Solve and prune one label; ``X`` must already be prepared.

    With ``dense=True`` the unpruned float64 solution is returned instead.
    """
    signs = make_sign_view(Y, label)
    if signs.positives.size == 0:
        return np.zeros(X.shape[1]) if dense else SparseVector.empty(X.shape[1])
    res = solve(X, signs, cfg.solver)
    if not res.converged:
        logger.warning(
            "label %d: solver stopped after %d iterations, |g|=%.3g",
            label, res.outer_iters, res.grad_norm,
        )
    if dense:
        return res.w
    return prune(res.w, cfg.delta)


def train_batch(X, Y, batch_id, cfg):
    """Train labels ``[b * batch_size, min((b + 1) * batch_size, L))``."""
    L = Y.n_labels
    B = n_batches(L, cfg.batch_size)
    if not 0 <= batch_id < B:
        raise IndexError(f"batch {batch_id} out of range (B={B})")
    lo = min(batch_id * cfg.batch_size, L)
    hi = min(lo + cfg.batch_size, L)
    Y.inverted()  # build once before threads share it
    labels = range(lo, hi)
    if cfg.workers_per_batch == 1 or hi - lo <= 1:
        weights = [train_label(X, Y, l, cfg) for l in labels]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers_per_batch) as pool:
            weights = list(pool.map(lambda l: train_label(X, Y, l, cfg), labels))
    return WeightBlock(batch_id, lo, X.shape[1], [_to_f32(w) for w in weights])


def default_worker_id():
    return f"{socket.gethostname()}-{os.getpid()}-{uuid.uuid4().hex[:8]}"


def _claim_path(model_dir, b):
    return os.path.join(model_dir, "claims", f"batch_{b}.claim")


def _done_path(model_dir, b):
    return os.path.join(model_dir, "claims", f"batch_{b}.done")


def _read_done(model_dir, b):
    try:
        with open(_done_path(model_dir, b), "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        return None


class _Claims:
    """Exclusive-create claim files with a heartbeat and stale-claim takeover."""

    def __init__(self, model_dir, worker_id, timeout):
        self.model_dir = model_dir
        self.worker_id = worker_id
        self.timeout = timeout
        self.lock = FileLock(os.path.join(model_dir, ".claims.lock"))

    def _create(self, path):
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"worker": self.worker_id, "time": time.time()}, fh)

    def try_claim(self, b):
        path = _claim_path(self.model_dir, b)
        try:
            self._create(path)
            return True
        except FileExistsError:
            pass
        if not self.is_stale(path):
            return False
        with self.lock:
            # re-check under the lock: another worker may have taken over already
            if not self.is_stale(path):
                return False
            stale = f"{path}.stale-{self.worker_id}-{time.time():.0f}"
            try:
                os.rename(path, stale)
            except FileNotFoundError:
                return False
            logger.info("batch %d: taking over stale claim", b)
            try:
                self._create(path)
            except FileExistsError:
                return False
            return True

    def is_stale(self, path):
        try:
            return time.time() - os.stat(path).st_mtime > self.timeout
        except FileNotFoundError:
            return False

    def heartbeat(self, b, stop):
        path = _claim_path(self.model_dir, b)
        interval = max(self.timeout / 4.0, 0.05)
        while not stop.wait(interval):
            try:
                os.utime(path)
            except FileNotFoundError:
                return


def _init_manifest(model_dir, manifest):
    os.makedirs(os.path.join(model_dir, "blocks"), exist_ok=True)
    os.makedirs(os.path.join(model_dir, "claims"), exist_ok=True)
    with FileLock(os.path.join(model_dir, ".manifest.lock")):
        path = os.path.join(model_dir, "manifest.json")
        if os.path.exists(path):
            existing = read_manifest(model_dir)
            if not existing.same_run(manifest):
                raise ValueError(
                    f"{model_dir} holds a model trained with different settings"
                )
            return existing
        write_manifest(manifest, model_dir)
        return manifest


def _update_manifest(model_dir, fn):
    with FileLock(os.path.join(model_dir, ".manifest.lock")):
        m = read_manifest(model_dir)
        fn(m)
        write_manifest(m, model_dir)
        return m


def _set_status(model_dir, b, status, worker, digest=None):
    def fn(m):
        e = m.blocks[b]
        if e.status == "done":
            return
        e.status, e.worker, e.digest = status, worker, digest
    _update_manifest(model_dir, fn)


def new_manifest(L, D, cfg, run_id=None):
    B = n_batches(L, cfg.batch_size)
    return ModelManifest(
        run_id=run_id or uuid.uuid4().hex,
        L=L, D=D, batch_size=cfg.batch_size, B=B, delta=float(cfg.delta), C=float(cfg.C),
        normalize=cfg.normalize, bias=cfg.bias,
        blocks=[BlockEntry(b) for b in range(B)],
    )


def run_training(
    dataset,
    cfg,
    model_dir,
    worker_id=None,
    claim_timeout=DEFAULT_CLAIM_TIMEOUT,
    wait=True,
    poll_interval=0.5,
    on_batch=None,
):
    """Train every batch of ``dataset`` into ``model_dir`` cooperatively.

    Safe to start in several processes at once against the same directory:
    each batch is claimed by exactly one live worker.  A claim whose
    heartbeat is older than ``claim_timeout`` seconds is taken over.  With
    ``wait=True`` a worker that runs out of claimable batches waits for the
    others and picks up any claim that goes stale; otherwise it returns
    early and may raise :class:`IncompleteModelError` at finalization.

    ``on_batch(b)`` is called after each batch this worker trains.
    Returns the finalized manifest.
    """
    worker_id = worker_id or default_worker_id()
    Y = dataset.labels
    L, D = Y.n_labels, dataset.n_features
    manifest = _init_manifest(model_dir, new_manifest(L, D, cfg))
    B = manifest.B
    claims = _Claims(model_dir, worker_id, claim_timeout)
    X = None

    while True:
        pending = [b for b in range(B) if _read_done(model_dir, b) is None]
        if not pending:
            break
        progressed = False
        for b in pending:
            if _read_done(model_dir, b) is not None or not claims.try_claim(b):
                continue
            stop = threading.Event()
            beat = threading.Thread(target=claims.heartbeat, args=(b, stop), daemon=True)
            beat.start()
            try:
                if _read_done(model_dir, b) is not None:
                    continue
                _set_status(model_dir, b, "claimed", worker_id)
                if X is None:
                    X = prepare_features(dataset.features, cfg.normalize, cfg.bias)
                t0 = time.perf_counter()
                block = train_batch(X, Y, b, cfg)
                digest = write_block(block, model_dir)
                done = {"worker": worker_id, "digest": digest}
                tmp = f"{_done_path(model_dir, b)}.{worker_id}.tmp"
                with open(tmp, "w", encoding="utf-8") as fh:
                    json.dump(done, fh)
                os.replace(tmp, _done_path(model_dir, b))
                _set_status(model_dir, b, "done", worker_id, digest)
                logger.info(
                    "batch %d/%d done by %s in %.1fs (nnz=%d)",
                    b + 1, B, worker_id, time.perf_counter() - t0, block.nnz,
                )
                progressed = True
                if on_batch is not None:
                    on_batch(b)
            finally:
                stop.set()
                beat.join()
        if not wait:
            break
        if not progressed:
            time.sleep(poll_interval)

    return finalize(model_dir)


def finalize(model_dir):
    """Record done markers and digests in the manifest; raise if any block is missing."""
    def fn(m):
        missing = []
        total = 0
        for e in m.blocks:
            done = _read_done(model_dir, e.id)
            if done is None or not os.path.exists(block_path(model_dir, e.id)):
                missing.append(e.id)
                continue
            e.status, e.worker, e.digest = "done", done["worker"], done["digest"]
        if missing:
            m.total_nnz = None
            raise IncompleteModelError(missing)
        for e in m.blocks:
            path = block_path(model_dir, e.id)
            with open(path, "rb") as fh:
                data = fh.read()
            if block_digest(data) != e.digest:
                raise FormatError("digest mismatch", path=path)
            total += decode_block(data, source=path).nnz
        m.total_nnz = total

    return _update_manifest(model_dir, fn)
