"""
Power-law label data
====================

Generate a synthetic multi-label dataset whose label sizes follow
N_r = N_1 * r^-beta, then fit the exponent back from the label counts.
"""

from dismec import PowerLawSpec, generate_powerlaw, label_frequency_stats

spec = PowerLawSpec(n_labels=500, head_size=2000, beta=1.0, n_features=3000, seed=0)
ds = generate_powerlaw(spec)
print(f"{ds.n_rows} rows, {ds.n_features} features, {ds.n_labels} labels")
print(f"{ds.features.nnz} stored feature values, {ds.labels.nnz} positive labels")

# a few ranks from the head and the tail
stats = label_frequency_stats(ds.labels)
for rank, label, count in stats.table()[:3] + stats.table()[-3:]:
    print(f"rank {rank:4d}  label {label:4d}  {count:5d} instances")

# the fit runs least squares on log(count) vs log(rank)
print(f"fitted N1={stats.head_size_hat:.1f} beta={stats.beta_hat:.3f}")

# most labels are tail labels
tail = (stats.counts <= 5).mean()
print(f"{tail:.0%} of labels have at most 5 positive instances")
