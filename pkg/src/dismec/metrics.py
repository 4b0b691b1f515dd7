"""Precision@k and nDCG@k for ranked multi-label predictions.

P@k counts gold labels among the top k predictions and divides by k;
prediction lists shorter than k simply contribute no hits for the missing
slots.  nDCG@k uses log base 2 discounts and the ideal normalizer
``sum_{j=1}^{min(k, |gold|)} 1 / log2(j + 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

__all__ = [
    "precision_at_k",
    "dcg_at_k",
    "ndcg_at_k",
    "MetricReport",
    "evaluate_rankings",
    "evaluate",
]


def precision_at_k(gold, ranked, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = set(gold)
    return sum(1 for l in ranked[:k] if l in gold) / k


def dcg_at_k(gold, ranked, k):
    gold = set(gold)
    return sum(1.0 / math.log2(j + 2) for j, l in enumerate(ranked[:k]) if l in gold)


def ndcg_at_k(gold, ranked, k):
    """nDCG@k, or ``None`` when ``gold`` is empty (the normalizer is undefined)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = set(gold)
    if not gold:
        return None
    ideal = sum(1.0 / math.log2(j + 1) for j in range(1, min(k, len(gold)) + 1))
    return dcg_at_k(gold, ranked, k) / ideal


@dataclass
class MetricReport:
    ks: list
    p_at_k: dict
    ndcg_at_k: dict
    n_evaluated: int
    skipped: int
    # per-instance values, in evaluation order, for instances that were scored
    per_instance: dict = field(default_factory=dict, repr=False)

    def rows(self):
        return [
            {"k": k, "p_at_k": self.p_at_k[k], "ndcg_at_k": self.ndcg_at_k[k],
             "skipped": self.skipped}
            for k in self.ks
        ]

    def to_json(self):
        return json.dumps(self.rows())

    def table(self):
        lines = [f"{'k':>3}  {'P@k':>8}  {'nDCG@k':>8}"]
        for k in self.ks:
            lines.append(f"{k:>3}  {self.p_at_k[k]:8.4f}  {self.ndcg_at_k[k]:8.4f}")
        lines.append(f"evaluated={self.n_evaluated} skipped={self.skipped}")
        return "\n".join(lines)


def evaluate_rankings(golds, rankings, ks=(1, 3, 5)):
    """Average P@k and nDCG@k over instances with a nonempty gold set."""
    golds = list(golds)
    rankings = list(rankings)
    if len(golds) != len(rankings):
        raise ValueError(
            f"{len(golds)} gold rows but {len(rankings)} prediction rows"
        )
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive integers")
    per = {("p", k): [] for k in ks}
    per.update({("n", k): [] for k in ks})
    skipped = 0
    for gold, ranked in zip(golds, rankings):
        gold = set(int(g) for g in gold)
        if not gold:
            skipped += 1
            continue
        ranked = list(ranked)
        for k in ks:
            per[("p", k)].append(precision_at_k(gold, ranked, k))
            per[("n", k)].append(ndcg_at_k(gold, ranked, k))
    n = len(golds) - skipped

    def mean(v):
        return math.fsum(v) / len(v) if v else 0.0

    return MetricReport(
        ks=ks,
        p_at_k={k: mean(per[("p", k)]) for k in ks},
        ndcg_at_k={k: mean(per[("n", k)]) for k in ks},
        n_evaluated=n,
        skipped=skipped,
        per_instance=per,
    )


def evaluate(gold_path, preds_path, ks=(1, 3, 5), has_header=True):
    """Score a predictions file against the label column of a dataset file."""
    from .data import load_xmc
    from .predict import read_predictions

    gold = load_xmc(gold_path, has_header=has_header).labels
    preds = read_predictions(preds_path)
    if len(preds) != gold.n_rows:
        raise ValueError(
            f"row count mismatch: {gold.n_rows} gold rows, {len(preds)} prediction rows"
        )
    return evaluate_rankings(
        (gold.row(i).tolist() for i in range(gold.n_rows)),
        ([l for l, _ in row] for row in preds),
        ks,
    )
