"""From-scratch random forest with exchangeable numeric kernels.

The heavy loops (tree growth, LOOCV retraining) exist twice: a compiled
version under numba and a vectorized numpy version. Both are importable
directly; `backend` picks one at import time from the
ETONGUE_FOREST_BACKEND environment variable ("numba" is the default,
"numpy" forces the fallback). The two produce bit-identical models; a
test suite holds them to that.
"""

from .api import (
    ConfusionMatrix,
    DatasetError,
    ForestModel,
    Hyperparams,
    LoocvResult,
    accuracy_from_confusion,
    assemble_dataset,
    feature_importance,
    loocv,
    model_from_document,
    model_to_document,
    predict,
    predict_proba,
    proximity,
    similarity_to_training,
    train,
)
from .backend import BACKEND

__all__ = [
    "BACKEND",
    "ConfusionMatrix",
    "DatasetError",
    "ForestModel",
    "Hyperparams",
    "LoocvResult",
    "accuracy_from_confusion",
    "assemble_dataset",
    "feature_importance",
    "loocv",
    "model_from_document",
    "model_to_document",
    "predict",
    "predict_proba",
    "proximity",
    "similarity_to_training",
    "train",
]
