"""
Pruning threshold vs model size
===============================

Train once without pruning, then re-prune the stored weights at several
thresholds.  Most learned weights are tiny; dropping them barely moves
precision.
"""

import tempfile

from dismec import PowerLawSpec, TrainConfig, generate_powerlaw, run_training, train_test_split
from dismec.store import model_stats
from dismec.sweep import sweep_delta
from dismec.tron import SolverConfig

spec = PowerLawSpec(n_labels=300, head_size=1500, beta=1.0, n_features=2000,
                    n_rows=8000, seed=2)
train, test = train_test_split(generate_powerlaw(spec), 0.2, seed=2)

cfg = TrainConfig(C=1.0, delta=0.0, batch_size=100, bias=True,
                  solver=SolverConfig(C=1.0, eps=1e-3))
model_dir = tempfile.mkdtemp(prefix="dismec-delta-")
run_training(train, cfg, model_dir)

stats = model_stats(model_dir)
print(f"unpruned: {stats['total_nnz']} weights, {stats['bytes']} bytes")
print(f"{stats['small_fraction']:.1%} of weights lie in (-0.01, 0.01)")

print(f"{'delta':>8} {'bytes':>10} {'nnz':>9} {'P@1':>7} {'P@5':>7}")
for row in sweep_delta(model_dir, test, deltas=(0.0, 0.001, 0.01, 0.05, 0.1), ks=(1, 5)):
    print(f"{row['delta']:8g} {row['bytes']:10d} {row['nnz']:9d} "
          f"{row['p@1']:7.4f} {row['p@5']:7.4f}")
