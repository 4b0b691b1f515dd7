import math

import numpy as np
import pytest

from dismec.metrics import evaluate, evaluate_rankings, ndcg_at_k, precision_at_k
from oracles import ndcg_at_k as ndcg_oracle
from oracles import p_at_k as p_oracle


def test_precision_examples():
    assert precision_at_k({2, 5}, [5, 1, 2], 3) == pytest.approx(2 / 3)
    assert precision_at_k({1, 2, 3}, [3, 1], 2) == 1.0
    assert precision_at_k({7}, [1, 2, 3], 3) == 0.0
    # short list: missing slots count as misses
    assert precision_at_k({1}, [1], 5) == 0.2


def test_ndcg_worked_values():
    assert round(ndcg_at_k({"a", "b"}, ["a", "x"], 2), 5) == 0.61315
    assert ndcg_at_k({9}, [9, 1, 2, 3, 4], 5) == 1.0
    assert round(ndcg_at_k({9}, [1, 2, 3, 4, 9], 5), 5) == 0.38685
    assert ndcg_at_k(set(), [1], 1) is None


def test_ndcg_order_sensitivity():
    # any order of a fully gold prefix is ideal
    assert ndcg_at_k({1, 2}, [2, 1, 5], 3) == 1.0
    # moving the only hit down strictly decreases nDCG
    vals = [ndcg_at_k({1}, [1 if j == r else 100 + j for j in range(5)], 5) for r in range(5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_skip_rule():
    rep = evaluate_rankings([[0], []], [[0, 1], [1, 0]], ks=[1, 2])
    assert rep.n_evaluated == 1 and rep.skipped == 1
    assert rep.p_at_k[1] == 1.0 and rep.p_at_k[2] == 0.5


def test_p1_equals_ndcg1():
    rng = np.random.default_rng(0)
    for _ in range(200):
        gold = set(rng.choice(20, size=rng.integers(1, 5), replace=False).tolist())
        ranked = rng.permutation(20)[:5].tolist()
        assert precision_at_k(gold, ranked, 1) == ndcg_at_k(gold, ranked, 1)


def random_pairs(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        L = int(rng.integers(1, 30))
        gold = set(rng.choice(L, size=int(rng.integers(1, L + 1)), replace=False).tolist())
        ranked = rng.permutation(L)[: int(rng.integers(0, L + 1))].tolist()
        k = int(rng.integers(1, 11))
        yield gold, ranked, k, L


def oracle_mismatches(n, seed):
    bad = 0
    for gold, ranked, k, L in random_pairs(n, seed):
        if precision_at_k(gold, ranked, k) != p_oracle(gold, ranked, k, L):
            bad += 1
        elif ndcg_at_k(gold, ranked, k) != ndcg_oracle(gold, ranked, k, L):
            bad += 1
    return bad


def test_metrics_match_oracle_exactly():
    assert oracle_mismatches(1000, seed=1) == 0


def test_report_outputs():
    rep = evaluate_rankings([[0, 1], [2]], [[0, 2, 1], [2]], ks=(3, 1))
    assert rep.ks == [1, 3]
    assert rep.rows()[0] == {"k": 1, "p_at_k": 1.0, "ndcg_at_k": 1.0, "skipped": 0}
    assert "P@k" in rep.table()
    assert '"k": 3' in rep.to_json()
    with pytest.raises(ValueError):
        evaluate_rankings([[0]], [], ks=(1,))


def test_evaluate_files(tmp_path):
    (tmp_path / "g.txt").write_text("3 2 4\n0,1 0:1\n 1:1\n3 0:1\n")
    (tmp_path / "p.txt").write_text("1:0.9 2:0.5\n0:0.1\n2:1 3:0.5\n")
    rep = evaluate(tmp_path / "g.txt", tmp_path / "p.txt", ks=(1, 2))
    assert rep.skipped == 1 and rep.n_evaluated == 2
    assert rep.p_at_k[1] == 0.5
    assert rep.ndcg_at_k[2] == pytest.approx((1 / (1 + 1 / math.log2(3)) + 1 / math.log2(3)) / 2)
    (tmp_path / "short.txt").write_text("1:1\n")
    with pytest.raises(ValueError, match="row count mismatch"):
        evaluate(tmp_path / "g.txt", tmp_path / "short.txt")
