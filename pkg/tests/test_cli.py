import json
import os

import pytest

from dismec.cli import main
from dismec.store import block_path, read_manifest


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen -> train -> predict on a small dataset, shared by the tests below."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--labels", "30", "--features", "200", "--head-size", "40",
                 "--beta", "1", "--out-prefix", str(d / "toy_"), "--seed", "5"]) == 0
    assert main(["train", "--data", str(d / "toy_train.txt"), "--out", str(d / "m"),
                 "--batch-size", "8", "--threads", "2"]) == 0
    assert main(["train", "--data", str(d / "toy_train.txt"), "--out", str(d / "m0"),
                 "--batch-size", "8", "--delta", "0"]) == 0
    assert main(["predict", "--model", str(d / "m"), "--data", str(d / "toy_test.txt"),
                 "--topk", "5", "--out", str(d / "preds.txt")]) == 0
    return d


def test_gen_is_deterministic(pipeline, tmp_path):
    main(["gen", "--labels", "30", "--features", "200", "--head-size", "40",
          "--beta", "1", "--out-prefix", str(tmp_path / "again_"), "--seed", "5"])
    for part in ("train", "test"):
        assert (tmp_path / f"again_{part}.txt").read_bytes() == \
            (pipeline / f"toy_{part}.txt").read_bytes()


def test_train_defaults_and_rerun(pipeline, capsys):
    m = read_manifest(pipeline / "m")
    assert m.delta == 0.01 and m.C == 1.0 and m.batch_size == 8 and m.B == 4
    assert m.complete
    before = os.path.getmtime(block_path(pipeline / "m", 0))
    assert main(["train", "--data", str(pipeline / "toy_train.txt"),
                 "--out", str(pipeline / "m"), "--batch-size", "8"]) == 0
    assert os.path.getmtime(block_path(pipeline / "m", 0)) == before
    # same directory, different settings
    assert main(["train", "--data", str(pipeline / "toy_train.txt"),
                 "--out", str(pipeline / "m"), "--batch-size", "8", "--c", "2"]) == 1
    assert "different settings" in capsys.readouterr().err


def test_predict_output(pipeline):
    lines = (pipeline / "preds.txt").read_text().splitlines()
    n_test = int((pipeline / "toy_test.txt").read_text().split()[0])
    assert len(lines) == n_test
    for line in lines:
        toks = [t.split(":") for t in line.split()]
        assert len(toks) == 5
        scores = [float(s) for _, s in toks]
        assert scores == sorted(scores, reverse=True)


def test_evaluate_json(pipeline, capsys):
    capsys.readouterr()
    assert main(["evaluate", "--gold", str(pipeline / "toy_test.txt"),
                 "--preds", str(pipeline / "preds.txt"), "--k", "1,3", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["k"] for r in rows] == [1, 3]
    assert all(0 <= r["p_at_k"] <= 1 for r in rows)


def test_sweep_delta(pipeline, capsys):
    capsys.readouterr()
    assert main(["sweep-delta", "--model", str(pipeline / "m0"),
                 "--data", str(pipeline / "toy_test.txt"),
                 "--deltas", "0,0.01,0.1,100", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    sizes = [r["bytes"] for r in rows]
    assert sizes == sorted(sizes, reverse=True)
    assert rows[0]["nnz"] == read_manifest(pipeline / "m0").total_nnz
    assert rows[-1]["nnz"] == 0
    # a pruned base model cannot be swept
    assert main(["sweep-delta", "--model", str(pipeline / "m"),
                 "--data", str(pipeline / "toy_test.txt")]) == 1


def test_stats(pipeline, capsys):
    capsys.readouterr()
    assert main(["stats", "--model", str(pipeline / "m")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["small_fraction"] == 0.0
    assert stats["total_nnz"] == read_manifest(pipeline / "m").total_nnz


def test_usage_errors(pipeline):
    with pytest.raises(SystemExit) as ei:
        main(["predict", "--model", str(pipeline / "m"), "--data", "x", "--topk", "0",
              "--out", "y"])
    assert ei.value.code == 2
    with pytest.raises(SystemExit):
        main(["train", "--data", "x", "--out", "y", "--delta", "-1"])


def test_threads_env_fallback(pipeline, monkeypatch):
    monkeypatch.setenv("DISMEC_THREADS", "zero")
    with pytest.raises(SystemExit):
        main(["train", "--data", "x", "--out", "y"])


def test_resume_requires_existing_model(tmp_path, pipeline):
    assert main(["train", "--data", str(pipeline / "toy_train.txt"),
                 "--out", str(tmp_path / "none"), "--resume"]) == 1


def test_missing_block_is_reported(tmp_path, pipeline, capsys):
    import shutil

    shutil.copytree(pipeline / "m", tmp_path / "m")
    os.remove(block_path(tmp_path / "m", 2))
    rc = main(["predict", "--model", str(tmp_path / "m"), "--data",
               str(pipeline / "toy_test.txt"), "--out", str(tmp_path / "p.txt")])
    assert rc == 3
    assert "missing batches: [2]" in capsys.readouterr().err


def test_bad_input_file(tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("1 2 2\n5 0:1\n")
    assert main(["train", "--data", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "m")]) == 1
    assert "bad.txt:2: label id 5" in capsys.readouterr().err
