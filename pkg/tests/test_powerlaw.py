import numpy as np
import pytest

from dismec.data import LabelMatrix
from dismec.powerlaw import (
    InfeasibleSpecError,
    PowerLawSpec,
    fit_powerlaw,
    generate_powerlaw,
    label_frequency_stats,
    powerlaw_sizes,
    train_test_split,
)


def test_sizes_follow_rank_formula():
    sizes = powerlaw_sizes(64, 100, 1.0)
    assert sizes[0] == 100
    assert sizes[9] == 10
    assert sizes[63] == 2  # 100 / 64 = 1.5625
    assert powerlaw_sizes(5, 1, 2.0).tolist() == [1, 1, 1, 1, 1]


@pytest.fixture(scope="module")
def small_spec():
    return PowerLawSpec(n_labels=40, head_size=60, beta=1.1, n_features=200,
                        prototype_nnz=8, noise_nnz=3, seed=7)


def test_generated_rank_sizes_are_exact(small_spec):
    ds = generate_powerlaw(small_spec)
    expected = powerlaw_sizes(40, 60, 1.1)
    stats = label_frequency_stats(ds.labels)
    assert stats.counts.tolist() == expected.tolist()
    # label ids are assigned in rank order
    assert ds.labels.label_counts().tolist() == expected.tolist()


def test_rows_carry_one_to_three_labels(small_spec):
    ds = generate_powerlaw(small_spec)
    per_row = np.diff(ds.labels.indptr)
    assert per_row.min() >= 1 and per_row.max() <= 3
    norms = np.sqrt(np.asarray(ds.features.multiply(ds.features).sum(axis=1)).ravel())
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_generation_is_deterministic(small_spec, tmp_path):
    from dismec.data import save_xmc

    a, b = generate_powerlaw(small_spec), generate_powerlaw(small_spec)
    save_xmc(a, tmp_path / "a.txt")
    save_xmc(b, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    c = generate_powerlaw(PowerLawSpec(**{**small_spec.__dict__, "seed": 8}))
    assert not (c == a)


def test_explicit_row_count():
    spec = PowerLawSpec(n_labels=30, head_size=50, beta=1.0, n_features=100,
                        prototype_nnz=5, noise_nnz=2, n_rows=100)
    ds = generate_powerlaw(spec)
    assert ds.n_rows == 100
    assert ds.labels.nnz == powerlaw_sizes(30, 50, 1.0).sum()


def test_infeasible_specs():
    # 10 positives for the head label but only 5 rows
    with pytest.raises(InfeasibleSpecError):
        generate_powerlaw(PowerLawSpec(n_labels=3, head_size=10, beta=1.0, n_features=10,
                                       prototype_nnz=2, noise_nnz=0, n_rows=5))
    # 1 label of size 1 spread over 5 rows leaves rows empty
    with pytest.raises(InfeasibleSpecError):
        generate_powerlaw(PowerLawSpec(n_labels=1, head_size=1, beta=1.0, n_features=10,
                                       prototype_nnz=2, noise_nnz=0, n_rows=5))
    with pytest.raises(ValueError):
        PowerLawSpec(n_labels=3, head_size=10, beta=0.0, n_features=10)


def test_fit_on_exact_power_law_counts():
    ranks = np.arange(1, 65)
    n1, beta = fit_powerlaw(100.0 * ranks ** -1.0)
    assert beta == pytest.approx(1.0, abs=1e-6)
    assert n1 == pytest.approx(100.0, rel=1e-6)


def test_fit_matches_polyfit_on_integer_counts():
    ranks = np.arange(1, 65)
    counts = 6400 // ranks
    rows = [[lab] for lab, c in enumerate(counts) for _ in range(c)]
    stats = label_frequency_stats(LabelMatrix.from_rows(rows, 64))
    slope, intercept = np.polyfit(np.log(ranks), np.log(counts), 1)
    assert stats.beta_hat == pytest.approx(-slope, abs=1e-9)
    assert stats.head_size_hat == pytest.approx(np.exp(intercept), rel=1e-9)


def test_fit_flat_and_degenerate():
    flat = LabelMatrix.from_rows([[0, 1, 2, 3]] * 5, 4)
    stats = label_frequency_stats(flat)
    assert stats.beta_hat == pytest.approx(0.0, abs=1e-12)
    single = LabelMatrix.from_rows([[0], [0]], 1)
    stats = label_frequency_stats(single)
    assert stats.table() == [(1, 0, 2)]
    assert stats.beta_hat is None and stats.head_size_hat is None


def test_ties_rank_by_label_id():
    Y = LabelMatrix.from_rows([[1, 2], [0, 2], [1]], 3)
    assert label_frequency_stats(Y).table() == [(1, 1, 2), (2, 2, 2), (3, 0, 1)]


def test_train_test_split_partitions_rows(small_spec):
    ds = generate_powerlaw(small_spec)
    tr, te = train_test_split(ds, 0.25, seed=1)
    assert tr.n_rows + te.n_rows == ds.n_rows
    assert te.n_rows == round(ds.n_rows * 0.25)
    assert tr.labels.nnz + te.labels.nnz == ds.labels.nnz
