"""Block model storage.

A trained model is a directory::

    manifest.json
    blocks/block_<b>.dsmb      one file per label batch
    claims/batch_<b>.claim     training coordination (see ``engine``)

Block files are little-endian binary::

    magic "DSMB" | version u32 | batch id u32 | label_start u32 |
    label_count u32 | D u64 |
    per label: nnz u32, then nnz x (index u32, weight f32)
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import FormatError, SparseVector

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "HEADER_SIZE",
    "WeightBlock",
    "BlockEntry",
    "ModelManifest",
    "IncompleteModelError",
    "encode_block",
    "decode_block",
    "write_block",
    "read_block",
    "block_path",
    "block_digest",
    "read_manifest",
    "write_manifest",
    "load_blocks",
    "model_stats",
]

MAGIC = b"DSMB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ")
HEADER_SIZE = _HEADER.size
_PAIR = np.dtype([("index", "<u4"), ("weight", "<f4")])

MANIFEST_NAME = "manifest.json"


class IncompleteModelError(RuntimeError):
    """A model directory is missing trained blocks."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"model incomplete, missing batches: {self.missing}")


@dataclass(eq=False)
class WeightBlock:
    batch_id: int
    label_start: int
    dim: int
    weights: list = field(default_factory=list)

    @property
    def label_count(self):
        return len(self.weights)

    @property
    def nnz(self):
        return sum(w.nnz for w in self.weights)

    def __eq__(self, other):
        if not isinstance(other, WeightBlock):
            return NotImplemented
        return (
            self.batch_id == other.batch_id
            and self.label_start == other.label_start
            and self.dim == other.dim
            and len(self.weights) == len(other.weights)
            and all(a == b for a, b in zip(self.weights, other.weights))
        )


def encode_block(block):
    parts = [
        _HEADER.pack(
            MAGIC, FORMAT_VERSION, block.batch_id, block.label_start,
            block.label_count, block.dim,
        )
    ]
    for w in block.weights:
        if w.dim != block.dim:
            raise ValueError(f"weight vector dim {w.dim} != block dim {block.dim}")
        pairs = np.empty(w.nnz, dtype=_PAIR)
        pairs["index"] = w.indices
        pairs["weight"] = w.values
        parts.append(struct.pack("<I", w.nnz))
        parts.append(pairs.tobytes())
    return b"".join(parts)


def decode_block(buf, source=None):
    if len(buf) < HEADER_SIZE:
        raise FormatError("truncated block header", path=source)
    magic, version, batch_id, label_start, label_count, dim = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path=source)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported block version {version}", path=source)
    pos = HEADER_SIZE
    weights = []
    for k in range(label_count):
        if pos + 4 > len(buf):
            raise FormatError(f"truncated before label {label_start + k}", path=source)
        (nnz,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        end = pos + nnz * _PAIR.itemsize
        if end > len(buf):
            raise FormatError(f"truncated weights of label {label_start + k}", path=source)
        pairs = np.frombuffer(buf, dtype=_PAIR, count=nnz, offset=pos)
        pos = end
        idx = pairs["index"].astype(np.int64)
        if nnz and idx.max() >= dim:
            raise FormatError(
                f"label {label_start + k}: feature index {idx.max()} >= D={dim}", path=source
            )
        try:
            weights.append(SparseVector(idx, pairs["weight"].copy(), dim))
        except ValueError as exc:
            raise FormatError(f"label {label_start + k}: {exc}", path=source) from None
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes", path=source)
    return WeightBlock(batch_id, label_start, dim, weights)


def block_path(model_dir, batch_id):
    return os.path.join(model_dir, "blocks", f"block_{batch_id}.dsmb")


def block_digest(data):
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path, data):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_block(block, model_dir):
    """Write ``block`` atomically under ``model_dir/blocks``; return its SHA-256."""
    data = encode_block(block)
    path = block_path(model_dir, block.batch_id)
    try:
        _atomic_write(path, data)
    except OSError as exc:
        raise OSError(f"cannot write block {path}: {exc}") from exc
    return block_digest(data)


def read_block(path, digest=None):
    with open(path, "rb") as fh:
        data = fh.read()
    if digest is not None and block_digest(data) != digest:
        raise FormatError("digest mismatch", path=path)
    return decode_block(data, source=path)


@dataclass
class BlockEntry:
    id: int
    status: str = "pending"
    worker: str | None = None
    digest: str | None = None


@dataclass
class ModelManifest:
    run_id: str
    L: int
    D: int
    batch_size: int
    B: int
    delta: float
    C: float
    normalize: bool = True
    bias: bool = False
    format_version: int = FORMAT_VERSION
    total_nnz: int | None = None
    blocks: list = field(default_factory=list)

    def __post_init__(self):
        self.blocks = [b if isinstance(b, BlockEntry) else BlockEntry(**b) for b in self.blocks]

    @property
    def weight_dim(self):
        """Stored weight length: ``D`` plus one when a bias feature is appended."""
        return self.D + int(self.bias)

    def label_range(self, batch_id):
        lo = batch_id * self.batch_size
        return min(lo, self.L), min(lo + self.batch_size, self.L)

    @property
    def complete(self):
        return all(b.status == "done" for b in self.blocks)

    def missing(self):
        return [b.id for b in self.blocks if b.status != "done"]

    def same_run(self, other):
        keys = ("L", "D", "batch_size", "B", "delta", "C", "normalize", "bias")
        return all(getattr(self, k) == getattr(other, k) for k in keys)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def read_manifest(model_dir):
    path = os.path.join(model_dir, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return ModelManifest.from_json(fh.read())
    except (json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"unreadable manifest: {exc}", path=path) from None


def write_manifest(manifest, model_dir):
    _atomic_write(os.path.join(model_dir, MANIFEST_NAME), manifest.to_json().encode("utf-8"))


def load_blocks(model_dir, manifest=None, verify=True):
    """Read every block of a complete model, checking digests against the manifest."""
    manifest = manifest or read_manifest(model_dir)
    missing = [
        b.id for b in manifest.blocks
        if b.status != "done" or not os.path.exists(block_path(model_dir, b.id))
    ]
    if missing:
        raise IncompleteModelError(missing)
    blocks = []
    for entry in manifest.blocks:
        blk = read_block(block_path(model_dir, entry.id), entry.digest if verify else None)
        lo, hi = manifest.label_range(entry.id)
        if blk.batch_id != entry.id or blk.label_start != lo or blk.label_count != hi - lo:
            raise FormatError(
                f"block {entry.id} covers labels {blk.label_start}+{blk.label_count}, "
                f"expected {lo}..{hi}",
                path=block_path(model_dir, entry.id),
            )
        if blk.dim != manifest.weight_dim:
            raise FormatError(
                f"block dim {blk.dim} != model dim {manifest.weight_dim}",
                path=block_path(model_dir, entry.id),
            )
        blocks.append(blk)
    if sum(b.label_count for b in blocks) != manifest.L:
        raise FormatError("block label counts do not add up to L", path=model_dir)
    return manifest, blocks


DEFAULT_EDGES = (-np.inf, -1.0, -0.1, -0.01, 0.01, 0.1, 1.0, np.inf)


def model_stats(model_dir, edges=DEFAULT_EDGES, small=0.01):
    """Size and weight-distribution summary of a complete model.

    ``small_fraction`` is the share of stored weights with ``|w| < small``,
    i.e. what pruning at that threshold would remove.  The histogram counts
    stored (nonzero) weights per half-open bin ``[edges[i], edges[i+1])``.
    """
    manifest, blocks = load_blocks(model_dir)
    values = [w.values for b in blocks for w in b.weights]
    values = np.concatenate(values) if values else np.zeros(0, np.float32)
    edges = np.asarray(edges, dtype=np.float64)
    counts = np.histogram(values, bins=edges)[0] if values.size else np.zeros(edges.size - 1, int)
    return {
        "total_nnz": int(values.size),
        "bytes": sum(os.path.getsize(block_path(model_dir, b.batch_id)) for b in blocks),
        "per_block_nnz": [b.nnz for b in blocks],
        # open-ended bins are reported as None so the dict stays JSON-safe
        "histogram": {
            "edges": [float(e) if np.isfinite(e) else None for e in edges],
            "counts": counts.tolist(),
        },
        "small_threshold": small,
        "small_fraction": float(np.mean(np.abs(values) < small)) if values.size else 0.0,
        "delta": manifest.delta,
    }
