import numpy as np
import pytest

from dismec.engine import TrainConfig, run_training
from dismec.store import encode_block, load_blocks
from dismec.sweep import reprune, sweep_delta
from workflows import small_dataset


@pytest.fixture(scope="module")
def base(tmp_path_factory):
    d = tmp_path_factory.mktemp("sweep")
    ds = small_dataset()
    run_training(ds, TrainConfig(C=1.0, delta=0.0, batch_size=10), d)
    return d, ds


def test_zero_delta_gives_back_the_base_model(base):
    d, _ = base
    manifest, blocks = load_blocks(d)
    _, same = reprune(manifest, blocks, 0.0)
    assert [encode_block(b) for b in same] == [encode_block(b) for b in blocks]


def test_reprune_equals_direct_threshold(base):
    d, _ = base
    manifest, blocks = load_blocks(d)
    _, pruned = reprune(manifest, blocks, 0.01)
    for b0, b1 in zip(blocks, pruned):
        for w0, w1 in zip(b0.weights, b1.weights):
            keep = np.abs(w0.values) >= 0.01
            assert w1.indices.tolist() == w0.indices[keep].tolist()


def test_sweep_rows(base):
    d, ds = base
    rows = sweep_delta(d, ds, deltas=(0.0, 0.01, 0.1, 1e9), ks=(1,))
    assert [r["bytes"] for r in rows] == sorted((r["bytes"] for r in rows), reverse=True)
    assert rows[-1]["nnz"] == 0
    assert rows[0]["nnz"] == load_blocks(d)[0].total_nnz
