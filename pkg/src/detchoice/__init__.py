"""Determinantal subset-choice modeling toolkit."""

__version__ = "0.1.0"

from .data import Dataset, Observation, PriorSpec, Standardization
from .exceptions import (
    CapacityError,
    DataError,
    DiagnosticsError,
    FitError,
    NumericalError,
)
from .kernel import (
    Assortment,
    KernelBundle,
    ModelParams,
    SimilarityMode,
    build_kernel,
    psd_check,
    quality,
    quality_vector,
    rbf_similarity,
    rbf_similarity_matrix,
)
from .likelihood import (
    UtilityDecomposition,
    dataset_log_posterior,
    enumerate_pmf,
    grad_log_posterior,
    implied_utility,
    log_det_submatrix,
    log_normalizer,
    subset_log_likelihood,
)
from .baselines import (
    baseline_predict,
    fit_baseline,
    logistic_log_likelihood,
    mnl_log_likelihood,
)
from .inference import (
    Diagnostics,
    FitResult,
    McmcConfig,
    OptConfig,
    PosteriorChains,
    PosteriorObjective,
    adaptive_mh,
    diagnostics,
    map_fit,
    posterior_predict,
)
from .sampling import (
    enumeration_sample,
    gumbel_rum_sample,
    spectral_sample,
)
from .simulation import (
    LoraGenConfig,
    SpatialConfig,
    Transmission,
    gen_lora_assortment,
    gen_lora_dataset,
    gen_spatial_dataset,
    gen_spatial_observation,
    lora_features,
    matern_iii_thin,
    radius_sweep,
    synthetic_capture_labels,
)
from .evaluation import SweepReport, evaluate_model, mcc, run_sweep_experiment
from .rng import RngState, as_generator

__all__ = [
    "Assortment",
    "CapacityError",
    "DataError",
    "Dataset",
    "Diagnostics",
    "DiagnosticsError",
    "FitError",
    "FitResult",
    "KernelBundle",
    "LoraGenConfig",
    "McmcConfig",
    "ModelParams",
    "NumericalError",
    "Observation",
    "OptConfig",
    "PosteriorChains",
    "PosteriorObjective",
    "PriorSpec",
    "RngState",
    "SimilarityMode",
    "SpatialConfig",
    "Standardization",
    "SweepReport",
    "Transmission",
    "UtilityDecomposition",
    "adaptive_mh",
    "as_generator",
    "baseline_predict",
    "build_kernel",
    "dataset_log_posterior",
    "diagnostics",
    "enumerate_pmf",
    "enumeration_sample",
    "evaluate_model",
    "fit_baseline",
    "gen_lora_assortment",
    "gen_lora_dataset",
    "gen_spatial_dataset",
    "gen_spatial_observation",
    "grad_log_posterior",
    "gumbel_rum_sample",
    "implied_utility",
    "log_det_submatrix",
    "log_normalizer",
    "logistic_log_likelihood",
    "lora_features",
    "map_fit",
    "matern_iii_thin",
    "mcc",
    "mnl_log_likelihood",
    "posterior_predict",
    "psd_check",
    "quality",
    "quality_vector",
    "radius_sweep",
    "rbf_similarity",
    "rbf_similarity_matrix",
    "run_sweep_experiment",
    "spectral_sample",
    "subset_log_likelihood",
    "synthetic_capture_labels",
]
