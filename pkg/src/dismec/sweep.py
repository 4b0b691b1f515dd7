"""Post-hoc pruning sweeps over a stored unpruned model.

Pruning acts on each solved weight vector independently, so a model trained
with ``delta = 0`` can be re-pruned at any threshold without retraining.
"""

from __future__ import annotations

from dataclasses import replace

from .engine import prune
from .metrics import evaluate_rankings
from .predict import BlockModel, predict_batch
from .store import WeightBlock, encode_block, load_blocks

__all__ = ["reprune_block", "reprune", "sweep_delta"]


def reprune_block(block, delta):
    return WeightBlock(
        block.batch_id, block.label_start, block.dim,
        [prune(w.to_dense(), delta) for w in block.weights],
    )


def reprune(manifest, blocks, delta):
    """Blocks and manifest of the model obtained by pruning at ``delta``."""
    if manifest.delta != 0:
        raise ValueError(f"sweep needs a base model trained with delta=0, got {manifest.delta}")
    pruned = [reprune_block(b, delta) for b in blocks]
    return replace(manifest, delta=float(delta)), pruned


def sweep_delta(model_dir, test, gold=None, deltas=(0.0, 0.001, 0.01, 0.1), ks=(1, 3, 5)):
    """One row per threshold: ``delta``, ``bytes``, ``nnz`` and ``P@k`` for each k.

    ``bytes`` is the total serialized size of the re-pruned blocks.
    ``gold`` defaults to the labels of ``test``.
    """
    manifest, blocks = load_blocks(model_dir)
    gold = gold if gold is not None else test.labels
    golds = [gold.row(i) for i in range(gold.n_rows)]
    k_max = max(ks)
    rows = []
    for delta in deltas:
        m, pruned = reprune(manifest, blocks, delta)
        preds = predict_batch(test.features, BlockModel(m, pruned), k_max)
        report = evaluate_rankings(golds, ([l for l, _ in p] for p in preds), ks)
        rows.append({
            "delta": float(delta),
            "bytes": sum(len(encode_block(b)) for b in pruned),
            "nnz": sum(b.nnz for b in pruned),
            **{f"p@{k}": report.p_at_k[k] for k in ks},
        })
    return rows
