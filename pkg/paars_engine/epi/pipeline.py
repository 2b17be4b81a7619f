"""
Event scoring pipeline: E x S per event, normalized by the batch maximum,
then noised per event.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..contactstore.events import ContactEvent
from ..exceptions import EmptyEventsError, log_operation
from .mechanism import DpParams, event_probability_noisy
from .models import ExposureModel, SheddingModel, exposure_score, shedding

logger = logging.getLogger(__name__)


def event_weights(events: Sequence[ContactEvent], exposure: ExposureModel, shed: SheddingModel) -> List[float]:
    """Unnormalized E x S per event"""
    return [
        exposure_score(e.duration_s, e.distance_m, exposure) * shedding(e.days_since_onset, shed)
        for e in events
    ]


def event_probability_raw(
    events: Sequence[ContactEvent],
    exposure: ExposureModel,
    shed: SheddingModel,
) -> List[float]:
    if not events:
        raise EmptyEventsError()
    return normalize_weights(event_weights(events, exposure, shed))


def normalize_weights(weights: Sequence[float]) -> List[float]:
    """Divide by the batch maximum; the largest weight maps to exactly 1.0"""
    if not weights:
        raise EmptyEventsError()
    peak = max(weights)
    return [1.0 if w == peak else w / peak for w in weights]


@dataclass
class BatchScores:
    raw: List[float]
    noisy: List[float]
    by_rand: Dict[int, float]

    @property
    def n_events(self) -> int:
        return len(self.raw)


def score_events(
    events: Sequence[ContactEvent],
    exposure: ExposureModel,
    shed: SheddingModel,
    dp: DpParams,
    rng: np.random.Generator,
) -> BatchScores:
    """Score one diagnosis batch; every peer row of an event receives the event's noisy value"""
    raw = event_probability_raw(events, exposure, shed)
    noisy = event_probability_noisy(raw, dp, rng)

    by_rand: Dict[int, float] = {}
    for event, p in zip(events, noisy):
        for _, rand, _ in event.member_keys:
            by_rand[rand] = p

    log_operation("score_events", {"events": len(events), "subjects": len(by_rand), "alpha": dp.alpha})
    return BatchScores(raw, noisy, by_rand)
