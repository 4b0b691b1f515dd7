"""
Train, predict, evaluate
========================

One-vs-rest squared-hinge classifiers trained label batch by label batch,
then top-k prediction over the stored blocks and P@k / nDCG@k.
"""

import tempfile
import time

from dismec import (
    PowerLawSpec,
    TrainConfig,
    evaluate_rankings,
    generate_powerlaw,
    load_model,
    predict_batch,
    run_training,
    train_test_split,
)
from dismec.tron import SolverConfig

spec = PowerLawSpec(n_labels=300, head_size=1500, beta=1.0, n_features=2000,
                    n_rows=8000, seed=1)
train, test = train_test_split(generate_powerlaw(spec), 0.2, seed=1)

# bias column on, tighter tolerance so tail labels are fit well
cfg = TrainConfig(C=1.0, delta=0.01, batch_size=100, workers_per_batch=4, bias=True,
                  solver=SolverConfig(C=1.0, eps=1e-3))
model_dir = tempfile.mkdtemp(prefix="dismec-demo-")

t0 = time.perf_counter()
manifest = run_training(train, cfg, model_dir)
print(f"trained {manifest.L} labels in {manifest.B} batches, "
      f"{manifest.total_nnz} stored weights, {time.perf_counter() - t0:.1f}s")

model = load_model(model_dir)
preds = predict_batch(test.features, model, k=5)
print("first test row:", preds[0][:3], "gold:", test.labels.row(0).tolist())

report = evaluate_rankings(
    (test.labels.row(i) for i in range(test.n_rows)),
    ([l for l, _ in p] for p in preds),
)
print(report.table())
