"""Multi-treatment uplift modelling for click-then-conversion chains.

Submodules:

- ``data``: schemas, CSV loading, synthetic randomized trials, statistics
- ``diffcore``: tape-based reverse-mode autodiff, Adam, gradient checks
- ``tenet``: treatment-aware feature representation
- ``ecenet``: task-gated towers, training and counterfactual inference
- ``metrics``: AUUC, Qini and per-treatment evaluation
- ``cli``: the ``chainuplift`` command
"""

from .data import (Dataset, FeatureSchema, Field, GroundTruth, Instance, SyntheticSpec,
                   dataset_stats, generate_synthetic, load_csv, save_csv, segment_uplift, split)
from .ecenet import EcupConfig, EcupModel, IteEstimate, predict_ite, predict_probs, train
from .errors import (ChainViolation, CodeOutOfRange, DegenerateGain, Divergence, EmptyGroup,
                     FingerprintMismatch, InvalidSpec, MissingColumn, NonFinite, ParseError,
                     SchemaError, ShapeMismatch, UpliftError)
from .metrics import auuc, per_treatment_eval, qini

__version__ = "0.1.0"
