from .mechanism import (
    DpParams,
    error_report,
    event_probability_noisy,
    expected_error,
    laplace_sample,
    laplace_samples,
    measure_mean_noise_variance,
    measure_pipeline_variance,
    privacy_epsilon,
    user_probability,
)
from .models import ExposureModel, SheddingModel, exposure_score, shedding
from .pipeline import BatchScores, event_probability_raw, event_weights, normalize_weights, score_events

__all__ = [
    "BatchScores",
    "DpParams",
    "ExposureModel",
    "SheddingModel",
    "error_report",
    "event_probability_noisy",
    "event_probability_raw",
    "event_weights",
    "expected_error",
    "exposure_score",
    "laplace_sample",
    "laplace_samples",
    "measure_mean_noise_variance",
    "measure_pipeline_variance",
    "normalize_weights",
    "privacy_epsilon",
    "score_events",
    "shedding",
    "user_probability",
]
