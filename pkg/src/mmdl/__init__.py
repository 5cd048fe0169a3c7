"""Multi-margin decorrelation learning for two-domain (NIR/VIS) matching."""

from .decorr import Decorrelation, DecorrLayer, fit_decorrelation, jacobi_eigh, project
from .estimator import MMDLEmbedder
from .evalkit import EvalReport, evaluate, rank_k_accuracy, similarity_matrix, vr_at_far
from .synthdata import NIR, VIS, Dataset, SynthConfig, generate
from .training import TrainConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "NIR",
    "VIS",
    "Dataset",
    "DecorrLayer",
    "Decorrelation",
    "EvalReport",
    "MMDLEmbedder",
    "SynthConfig",
    "TrainConfig",
    "evaluate",
    "fit_decorrelation",
    "generate",
    "jacobi_eigh",
    "project",
    "rank_k_accuracy",
    "run_training",
    "similarity_matrix",
    "vr_at_far",
]
