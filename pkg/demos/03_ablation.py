"""Train every architecture variant on the same synthetic trial and
compare held-out CTCVR AUUC. Expect several minutes per seed.

    python demos/03_ablation.py [seed ...]
"""

import sys
import time

from chainuplift import EcupConfig, SyntheticSpec, generate_synthetic, per_treatment_eval, train
from chainuplift.ecenet import VARIANTS

seeds = [int(s) for s in sys.argv[1:]] or [11]
results = {v: [] for v in VARIANTS}
for seed in seeds:
    tr, _ = generate_synthetic(SyntheticSpec.from_preset("chainbias", 50_000, seed))
    va, _ = generate_synthetic(SyntheticSpec.from_preset("chainbias", 10_000, seed + 100))
    te, truth = generate_synthetic(SyntheticSpec.from_preset("chainbias", 20_000, seed + 200))
    oracle = per_treatment_eval(te, truth, "Z").auuc
    print(f"seed {seed}: oracle AUUC {oracle:.4f}")
    for variant in VARIANTS:
        t0 = time.perf_counter()
        cfg = EcupConfig(variant=variant, seed=seed, lr=1e-2, epochs=6)
        model, _ = train(tr, va, cfg)
        score = per_treatment_eval(te, model.predict_ite(te), "Z").auuc
        results[variant].append(score)
        print(f"  {variant:16s} AUUC {score:.4f}  ({time.perf_counter() - t0:.0f}s)")

print("\nmean over seeds")
for variant, scores in results.items():
    print(f"  {variant:16s} {sum(scores) / len(scores):.4f}")
