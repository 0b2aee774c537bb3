"""Synthetic trial where a treatment raises clicks but lowers post-click
conversion. Looking only at clicked users makes the treatment look harmful,
while the whole-population conversion rate actually goes up.

    python demos/01_chain_bias.py
"""

import numpy as np

from chainuplift import SyntheticSpec, dataset_stats, generate_synthetic, segment_uplift

spec = SyntheticSpec.from_preset("chainbias", n=50_000, seed=7, K=2)
ds, truth = generate_synthetic(spec)

# the anchor user (all features at their centre) under control and treatment 1
dense, sparse = np.zeros((1, 4)), np.full((1, 2), 2)
for arm in (0, 1):
    ctr, cvr = spec.probabilities(dense, sparse, arm)
    print(f"arm {arm}: pCTR={ctr[0]:.2f} pCVR={cvr[0]:.2f} pCTCVR={ctr[0] * cvr[0]:.3f}")

stats = dataset_stats(ds)
print(f"\n{ds.N} rows, click ratio {stats.click_ratio:.3f}, conversion ratio {stats.conversion_ratio:.3f}")
print(f"click uplift {stats.click_uplift:+.4f}, conversion uplift {stats.conversion_uplift:+.4f}")

# random segments: CVR uplift (clicked rows) vs CTCVR uplift (all rows)
report = segment_uplift(ds, segments=10, seed=0, treatment_k=1)
print("\nsegment  CVR-uplift  CTCVR-uplift")
for i, (all_rows, clicked) in enumerate(zip(report.ctcvr, report.cvr)):
    print(f"{i:7d}  {clicked.uplift:+10.4f}  {all_rows.uplift:+12.4f}")
print(f"sign-discordant segments: {report.sign_discordant()}")

# true per-user effects carry the same story
print(f"\nmean true tau_cvr (k=1): {truth.tau_cvr[:, 0].mean():+.4f}")
print(f"mean true tau_z   (k=1): {truth.tau_z[:, 0].mean():+.4f}")
