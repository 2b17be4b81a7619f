"""
Turn the TBD peer rows of one diagnosis into contact events for scoring.
"""

import logging
from dataclasses import dataclass
from itertools import groupby
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from ..client.token import Token
from ..environment.grid import MAX_CELL_SIZE_M
from ..environment.netkey import DEFAULT_TAU_SECONDS
from ..exceptions import DataValidationError, EmptyEventsError, log_operation
from .store import ContactRow, RowKey

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class ContactEvent:
    token_run: Tuple[Token, ...]
    peer_rand: int
    subject_rand: int
    start_epoch: int
    duration_s: float
    distance_m: float
    days_since_onset: int
    member_keys: Tuple[RowKey, ...] = ()

    def __post_init__(self):
        if not self.token_run:
            raise DataValidationError("Contact event has no tokens")
        if self.distance_m <= 0 or self.distance_m > MAX_CELL_SIZE_M:
            raise DataValidationError(f"Event distance {self.distance_m} m outside (0, {MAX_CELL_SIZE_M}]")

    @property
    def n_epochs(self) -> int:
        return len(self.token_run)


def _consecutive_runs(epochs: Sequence[int]) -> List[List[int]]:
    # epoch - position is constant inside a run of consecutive integers
    return [
        [e for _, e in run]
        for _, run in groupby(enumerate(sorted(set(epochs))), key=lambda pair: pair[1] - pair[0])
    ]


def reconstruct_events(
    peer_rows: Sequence[ContactRow],
    infected_rand: Union[int, Mapping[int, int]],
    onset_epoch: int,
    cell_size_m: float,
    tau_seconds: int = DEFAULT_TAU_SECONDS,
) -> List[ContactEvent]:
    """
    One event per maximal run of consecutive epochs with peer rows.

    `infected_rand` is either the reporter's single rand or the map
    epoch -> reporter rand returned by apply_diagnosis.
    """
    if not peer_rows:
        raise EmptyEventsError()

    by_epoch: Dict[int, List[ContactRow]] = {}
    for row in sorted(peer_rows, key=lambda r: (r.epoch, r.rand)):
        by_epoch.setdefault(row.epoch, []).append(row)

    distance_m = cell_size_m / 2
    events = []
    for run in _consecutive_runs(list(by_epoch)):
        start = run[0]
        rows = [r for e in run for r in by_epoch[e]]
        if isinstance(infected_rand, Mapping):
            reporter_rand = infected_rand.get(start, 0)
        else:
            reporter_rand = int(infected_rand)
        days = max(0, ((start - onset_epoch) * tau_seconds) // SECONDS_PER_DAY)
        events.append(ContactEvent(
            token_run=tuple(by_epoch[e][0].token for e in run),
            peer_rand=reporter_rand,
            subject_rand=by_epoch[start][0].rand,
            start_epoch=start,
            duration_s=float(len(run) * tau_seconds),
            distance_m=distance_m,
            days_since_onset=int(days),
            member_keys=tuple(r.key for r in rows),
        ))

    log_operation("reconstruct_events", {"peer_rows": len(peer_rows), "events": len(events)})
    return events
