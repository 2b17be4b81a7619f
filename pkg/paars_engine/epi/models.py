"""
Exposure and viral-shedding models.

Both are small closed forms: a logistic exposure score in effective
duration, and a rise-then-decay shedding curve normalized to peak at 1.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..exceptions import NegativeDaysError, NonPositiveInputError

logger = logging.getLogger(__name__)

SHEDDING_HORIZON_DAYS = 30.0
SHEDDING_GRID_POINTS = 3001


@dataclass(frozen=True)
class ExposureModel:
    sigmoid_midpoint_s: float = 300.0
    sigmoid_slope: float = 0.01
    distance_ref_m: float = 1.0

    def __post_init__(self):
        if min(self.sigmoid_midpoint_s, self.sigmoid_slope, self.distance_ref_m) <= 0:
            raise NonPositiveInputError(
                sigmoid_midpoint_s=self.sigmoid_midpoint_s,
                sigmoid_slope=self.sigmoid_slope,
                distance_ref_m=self.distance_ref_m,
            )

    @classmethod
    def from_settings(cls, cfg) -> "ExposureModel":
        return cls(cfg.EPI_SIGMOID_MIDPOINT_S, cfg.EPI_SIGMOID_SLOPE, cfg.EPI_DISTANCE_REF_M)


@dataclass(frozen=True)
class SheddingModel:
    peak_day: float = 0.5
    rise_rate: float = 2.0
    decay_rate: float = 0.3
    # grid maximum of the unnormalized curve, fixed at construction
    scale: float = field(init=False, repr=False, compare=False, default=1.0)

    def __post_init__(self):
        if self.peak_day < 0:
            raise NegativeDaysError(self.peak_day)
        if self.rise_rate <= 0 or self.decay_rate <= 0:
            raise NonPositiveInputError(rise_rate=self.rise_rate, decay_rate=self.decay_rate)

        days = np.union1d(np.linspace(0.0, SHEDDING_HORIZON_DAYS, SHEDDING_GRID_POINTS), [self.peak_day])
        object.__setattr__(self, "scale", float(np.max(self._raw(days))))

    def _raw(self, days):
        days = np.asarray(days, dtype=float)
        decay = np.exp(-self.decay_rate * np.maximum(0.0, days - self.peak_day))
        rise = 1.0 - np.exp(-self.rise_rate * (days + 1.0))
        return decay * rise

    @classmethod
    def from_settings(cls, cfg) -> "SheddingModel":
        return cls(cfg.EPI_PEAK_DAY, cfg.EPI_RISE_RATE, cfg.EPI_DECAY_RATE)


def exposure_score(duration_s: float, distance_m: float, model: ExposureModel) -> float:
    """Severity of a contact: logistic in duration scaled by inverse-square distance"""
    if duration_s <= 0 or distance_m <= 0:
        raise NonPositiveInputError(duration_s=duration_s, distance_m=distance_m)
    effective = duration_s * (model.distance_ref_m / distance_m) ** 2
    return float(expit(model.sigmoid_slope * (effective - model.sigmoid_midpoint_s)))


def shedding(days_since_onset: float, model: SheddingModel) -> float:
    """Relative transmissibility of the infected party, days after onset"""
    if days_since_onset < 0:
        raise NegativeDaysError(days_since_onset)
    return float(min(1.0, model._raw(days_since_onset) / model.scale))
