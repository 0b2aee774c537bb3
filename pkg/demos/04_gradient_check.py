"""The model is built on a small reverse-mode autodiff engine. This script
checks its gradients against central finite differences on a tiny model.

    python demos/04_gradient_check.py
"""

import numpy as np

from chainuplift import EcupConfig, EcupModel, SyntheticSpec, generate_synthetic
from chainuplift import diffcore as dc

ds, _ = generate_synthetic(SyntheticSpec.from_preset("chainbias", 8, seed=0))
model = EcupModel(ds.schema, EcupConfig(d=4, h=8, h_gate=4, heads=2, lam=1e-3))

# gate output layers start at zero; give them values so their gradients are informative
rng = np.random.default_rng(0)
for name in model.store.names():
    if name.endswith((".w2", ".b2", ".b")):
        model.store.set(name, rng.normal(scale=0.5, size=model.store[name].shape))

batch = (ds.dense, ds.sparse, ds.t, ds.y, ds.z)
# keys of the task-prior attention are detached from the graph; hold them
# fixed so the finite differences see the function the tape differentiates
keys = model.representation(*batch[:3]).value
errors = dc.check_gradients(lambda: model.loss(*batch, prior_keys=keys), model.store)

for name, err in sorted(errors.items(), key=lambda kv: -kv[1])[:8]:
    print(f"{name:28s} relative error {err:.2e}")
print(f"{len(errors)} parameters, worst {max(errors.values()):.2e}")
