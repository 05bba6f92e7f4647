"""Nonparametric likelihood-kernel learning for continuous determinantal
point processes: fitting by a regularized PSD fixed-point iteration,
randomized correlation-kernel estimation, sampled Fredholm determinant
diagnostics, and a grid-spectral ground-truth sampler."""

from .errors import (
    AccuracyWarning,
    ConditioningError,
    DppLearnError,
    EvaluationError,
    InputError,
    NotPsdError,
    NumericError,
    ParseError,
    VersionError,
)
from .model import (
    CorrelationModel,
    LikelihoodModel,
    PointPattern,
    RkhsKernel,
    SampleBlocks,
    Window,
    eval_correlation_kernel,
    eval_likelihood_kernel,
    intensity_grid,
)
from .io import load_model, read_pattern, save_model, write_pattern
from .solver import FitConfig, PicardTrace, closed_form, fit
from .correlation import d_eff, estimate_correlation, grid_correlation_oracle, required_p
from .fredholm import c_n_bound, quadrature_fredholm, sampled_logdet
from .synthgen import GridSpectralSampler, GroundTruthDpp, sample_dpp, validate_kernel

__version__ = "0.1.0"

__all__ = [
    "AccuracyWarning",
    "ConditioningError",
    "CorrelationModel",
    "DppLearnError",
    "EvaluationError",
    "FitConfig",
    "GridSpectralSampler",
    "GroundTruthDpp",
    "InputError",
    "LikelihoodModel",
    "NotPsdError",
    "NumericError",
    "ParseError",
    "PicardTrace",
    "PointPattern",
    "RkhsKernel",
    "SampleBlocks",
    "VersionError",
    "Window",
    "c_n_bound",
    "closed_form",
    "d_eff",
    "estimate_correlation",
    "eval_correlation_kernel",
    "eval_likelihood_kernel",
    "fit",
    "grid_correlation_oracle",
    "intensity_grid",
    "load_model",
    "quadrature_fredholm",
    "read_pattern",
    "required_p",
    "sample_dpp",
    "sampled_logdet",
    "save_model",
    "validate_kernel",
    "write_pattern",
]
