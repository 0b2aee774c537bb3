"""Train the full model on a synthetic trial and compare its effect
estimates with the known ground truth. Takes about a minute on one core.

    python demos/02_train_and_evaluate.py
"""

import logging

import numpy as np

from chainuplift import EcupConfig, SyntheticSpec, generate_synthetic, per_treatment_eval, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

train_ds, _ = generate_synthetic(SyntheticSpec.from_preset("chainbias", 50_000, seed=1))
valid_ds, _ = generate_synthetic(SyntheticSpec.from_preset("chainbias", 10_000, seed=2))
test_ds, truth = generate_synthetic(SyntheticSpec.from_preset("chainbias", 20_000, seed=3))

config = EcupConfig(variant="full", d=8, h=128, h_gate=64, lr=1e-2, epochs=6)
model, history = train(train_ds, valid_ds, config)
best = max(history, key=lambda r: r["valid_auuc"])
print(f"best validation epoch {best['epoch']} (AUUC {best['valid_auuc']:.4f})")

# S-learner inference: one pass per treatment arm
ite = model.predict_ite(test_ds)
for k in range(test_ds.schema.K):
    r = np.corrcoef(ite.tau_z[:, k], truth.tau_z[:, k])[0, 1]
    print(f"treatment {k + 1}: Pearson r(predicted, true tau_z) = {r:.3f}")

learned = per_treatment_eval(test_ds, ite, "Z")
oracle = per_treatment_eval(test_ds, truth, "Z")
print(f"CTCVR AUUC: model {learned.auuc:.4f}, ranking by true effect {oracle.auuc:.4f}")
print(f"CTCVR Qini: model {learned.qini:.2f}, ranking by true effect {oracle.qini:.2f}")

ctr = per_treatment_eval(test_ds, ite, "Y")
print(f"CTR AUUC per treatment: {[round(a, 4) for a in ctr.auuc_per_k]}")
