"""
Epoch clock and the rotating network key K_net broadcast by every access point.
"""

import hashlib
import hmac
import logging
import math
from dataclasses import dataclass

from ..exceptions import BeforeReferenceError, DataValidationError

logger = logging.getLogger(__name__)

SEED_BYTES = 32
KEY_BYTES = 16
DEFAULT_TAU_SECONDS = 15

_NETKEY_LABEL = b"paars-netkey"


@dataclass(frozen=True)
class EpochClock:
    tau_seconds: int = DEFAULT_TAU_SECONDS
    t0: float = 0.0

    def __post_init__(self):
        if self.tau_seconds < 1:
            raise DataValidationError(f"tau must be a positive number of seconds, got {self.tau_seconds}")


@dataclass(frozen=True)
class NetKey:
    epoch: int
    value: bytes

    def __post_init__(self):
        if len(self.value) != KEY_BYTES:
            raise DataValidationError(f"Network key must be {KEY_BYTES} bytes")


def epoch_of(clock: EpochClock, timestamp: float) -> int:
    """floor((t - t0) / tau)"""
    if timestamp < clock.t0:
        raise BeforeReferenceError(timestamp, clock.t0)
    return math.floor((timestamp - clock.t0) / clock.tau_seconds)


def net_key(seed: bytes, epoch: int) -> NetKey:
    """K_net for an epoch: HMAC-SHA256(seed, label || epoch) truncated to 128 bits"""
    if len(seed) != SEED_BYTES:
        raise DataValidationError(f"System seed must be {SEED_BYTES} bytes, got {len(seed)}")
    message = _NETKEY_LABEL + int(epoch).to_bytes(8, "big", signed=True)
    digest = hmac.new(seed, message, hashlib.sha256).digest()
    return NetKey(int(epoch), digest[:KEY_BYTES])


class KeySchedule:
    """The broadcast side: one key per epoch, shared by all access points"""

    def __init__(self, seed: bytes, clock: EpochClock):
        if len(seed) != SEED_BYTES:
            raise DataValidationError(f"System seed must be {SEED_BYTES} bytes, got {len(seed)}")
        self._seed = seed
        self.clock = clock

    def for_epoch(self, epoch: int) -> NetKey:
        return net_key(self._seed, epoch)

    def at(self, timestamp: float) -> NetKey:
        return self.for_epoch(epoch_of(self.clock, timestamp))
