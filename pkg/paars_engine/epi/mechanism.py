"""
Laplace mechanism over per-event probabilities, the per-user average, and
the error accounting reported alongside it.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from ..exceptions import DataValidationError, EmptyInputError, NonPositiveInputError, log_operation

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.1


@dataclass(frozen=True)
class DpParams:
    """alpha = 0 switches noise off"""
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not self.alpha >= 0 or math.isinf(self.alpha):
            raise DataValidationError(f"alpha must be a finite non-negative number, got {self.alpha}")

    @property
    def enabled(self) -> bool:
        return self.alpha > 0

    def scale(self, n_events: int) -> float:
        return self.alpha / n_events


def _check_scale_inputs(alpha: float, n_events: int) -> None:
    if alpha <= 0 or n_events < 1:
        raise NonPositiveInputError(alpha=alpha, n_events=n_events)


def laplace_samples(alpha: float, n_events: int, size, rng: np.random.Generator) -> np.ndarray:
    """Vectorized inverse-CDF draws from Laplace(0, alpha / n_events)"""
    _check_scale_inputs(alpha, n_events)
    b = alpha / n_events
    u = rng.uniform(-0.5, 0.5, size)
    # ln(0) at the closed end of the interval
    edge = np.abs(u) >= 0.5
    while np.any(edge):
        u[edge] = rng.uniform(-0.5, 0.5, int(np.count_nonzero(edge)))
        edge = np.abs(u) >= 0.5
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_sample(alpha: float, n_events: int, rng: np.random.Generator) -> float:
    """One draw: -b * sgn(u) * ln(1 - 2|u|), u ~ U(-1/2, 1/2), b = alpha / N"""
    _check_scale_inputs(alpha, n_events)
    b = alpha / n_events
    u = rng.uniform(-0.5, 0.5)
    while abs(u) >= 0.5:
        u = rng.uniform(-0.5, 0.5)
    return float(-b * np.sign(u) * math.log1p(-2.0 * abs(u)))


def event_probability_noisy(raw: Sequence[float], dp: DpParams, rng: np.random.Generator) -> List[float]:
    """Add an independent Laplace(0, alpha/N) draw to every event; no clamping"""
    if not raw:
        raise EmptyInputError("raw probabilities")
    if not dp.enabled:
        return [float(p) for p in raw]
    noise = laplace_samples(dp.alpha, len(raw), len(raw), rng)
    return [float(p + z) for p, z in zip(raw, noise)]


def user_probability(noisy: Sequence[float]) -> float:
    """Mean over exactly N per-event values"""
    if len(noisy) == 0:
        raise EmptyInputError("event probabilities")
    return float(sum(noisy) / len(noisy))


def expected_error(alpha: float, n_events: int) -> float:
    """The accumulated error as stated for the mechanism: 2 alpha^2 / N^2"""
    _check_scale_inputs(alpha, n_events)
    return 2.0 * alpha ** 2 / n_events ** 2


def mean_noise_variance(alpha: float, n_events: int) -> float:
    """Variance of the mean of N independent Laplace(0, alpha/N) terms: 2 alpha^2 / N^3"""
    _check_scale_inputs(alpha, n_events)
    return 2.0 * alpha ** 2 / n_events ** 3


def privacy_epsilon(alpha: float, n_events: int) -> float:
    """Displayed privacy level N / alpha; accounting only, not a proof"""
    if n_events < 1:
        raise NonPositiveInputError(n_events=n_events)
    if alpha == 0:
        return math.inf
    return n_events / alpha


def measure_mean_noise_variance(alpha: float, batch_sizes: Sequence[int], trials: int, rng: np.random.Generator) -> float:
    """Monte-Carlo variance of the mean of one Laplace(0, alpha / N_i) draw per event, N_i its batch size"""
    if trials < 2:
        raise NonPositiveInputError(trials=trials - 1)
    sizes = np.asarray(batch_sizes, dtype=float)
    if sizes.size == 0 or np.any(sizes < 1):
        raise NonPositiveInputError(n_events=int(sizes.min()) if sizes.size else 0)
    noise = laplace_samples(alpha, 1, (trials, sizes.size), rng) / sizes
    return float(np.var(noise.mean(axis=1), ddof=1))


def measure_pipeline_variance(alpha: float, n_events: int, trials: int, rng: np.random.Generator) -> float:
    """Monte-Carlo variance of user_probability(noisy) - mean(raw)"""
    return measure_mean_noise_variance(alpha, [n_events] * n_events, trials, rng)


@dataclass
class ErrorReport:
    alpha: float
    n_events: int
    trials: int
    epsilon: float
    stated_error: float
    mean_variance: float
    measured_variance: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def error_report(alpha: float, n_events: int, trials: int, rng: np.random.Generator) -> ErrorReport:
    """Both error figures side by side: the stated 2a^2/N^2 and the measured pipeline variance"""
    report = ErrorReport(
        alpha=alpha,
        n_events=n_events,
        trials=trials,
        epsilon=privacy_epsilon(alpha, n_events),
        stated_error=expected_error(alpha, n_events),
        mean_variance=mean_noise_variance(alpha, n_events),
        measured_variance=measure_pipeline_variance(alpha, n_events, trials, rng),
    )
    log_operation("error_report", report.to_dict())
    return report
