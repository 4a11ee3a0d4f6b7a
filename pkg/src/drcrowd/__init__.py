"""Doubly robust label aggregation for crowdsourced annotations.

Estimates the all-workers voting score of an item from a handful of
sampled annotations plus per-worker imitators, with adaptive item/worker
selection for further cost savings.
"""

from ._kernels import available_backends, backend_name, use_backend
from .core import (
    EPS_SMOOTH,
    AnnotationMatrix,
    ConfusionMatrix,
    DSParams,
    EstimateVector,
    FeatureMatrix,
    ProblemDims,
    ScoreTable,
    SoftAnnotation,
    ds_posterior,
    ds_prior_offset,
    ds_score_table,
    expected_score,
    make_estimate,
    mv_score_table,
)
from .errors import AnnotationUnavailableError, ConfigError, InputError, ParseError

__version__ = "0.1.0"

__all__ = [
    "AnnotationMatrix",
    "AnnotationUnavailableError",
    "ConfigError",
    "ConfusionMatrix",
    "DSParams",
    "EPS_SMOOTH",
    "EstimateVector",
    "FeatureMatrix",
    "InputError",
    "ParseError",
    "ProblemDims",
    "ScoreTable",
    "SoftAnnotation",
    "available_backends",
    "backend_name",
    "ds_posterior",
    "ds_prior_offset",
    "ds_score_table",
    "expected_score",
    "make_estimate",
    "mv_score_table",
    "use_backend",
    "__version__",
]
