"""Out-of-distribution detection from precomputed features via approximated
kernel-PCA reconstruction errors, with an exact small-instance reference,
baseline detectors, and FPR95/AUROC evaluation."""

from .approx import (
    EnergyScores,
    NystromMap,
    RffMap,
    apply_nystrom,
    apply_rff,
    energy_scores,
    fit_nystrom,
    fit_rff,
    select_landmarks,
)
from .dataio import (
    DatasetBundle,
    FeatureMatrix,
    gen_synthetic,
    read_matrix,
    write_matrix,
)
from .detectors import (
    DetectorConfig,
    DetectorModel,
    clip_features,
    fit_detector,
    load_model,
    median_gamma,
    save_model,
    score,
    score_with_rejects,
)
from .kernels import KernelSpec, cos_map, kernel_eval, kernel_matrix
from .linalg import EigenDecomposition, SeededRng, covariance, pairwise_sq_dist, sym_eigen
from .metrics import EvalReport, auroc, evaluate, fpr_at_95tpr
from .oracle import (
    ExactKpcaModel,
    exact_error_paper_form,
    exact_error_standard_form,
    fit_exact,
)
from .subspace import SubspaceModel, fit_subspace, reconstruction_error, residual_form_error

__version__ = "0.1.0"

__all__ = [
    "DatasetBundle",
    "DetectorConfig",
    "DetectorModel",
    "EigenDecomposition",
    "EnergyScores",
    "EvalReport",
    "ExactKpcaModel",
    "FeatureMatrix",
    "KernelSpec",
    "NystromMap",
    "RffMap",
    "SeededRng",
    "SubspaceModel",
    "apply_nystrom",
    "apply_rff",
    "auroc",
    "clip_features",
    "cos_map",
    "covariance",
    "energy_scores",
    "evaluate",
    "exact_error_paper_form",
    "exact_error_standard_form",
    "fit_detector",
    "fit_exact",
    "fit_nystrom",
    "fit_rff",
    "fit_subspace",
    "fpr_at_95tpr",
    "gen_synthetic",
    "kernel_eval",
    "kernel_matrix",
    "load_model",
    "median_gamma",
    "pairwise_sq_dist",
    "read_matrix",
    "reconstruction_error",
    "residual_form_error",
    "save_model",
    "score",
    "score_with_rejects",
    "select_landmarks",
    "sym_eigen",
    "write_matrix",
]
