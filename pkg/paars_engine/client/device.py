"""
The user device: ticks the ledger every epoch, shares a diagnosis when the
user chooses to, and queries its own exposure through PSI.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..environment.grid import AccessPoint, Grid, Position
from ..environment.netkey import NetKey
from ..epi.mechanism import user_probability
from ..exceptions import log_operation
from ..psi.protocol import PsiSession, ScoredPair
from .ledger import ClientLedger, DiagnosisReport, client_tick, share_diagnosis
from .token import ClientRecord, Token

logger = logging.getLogger(__name__)

DEFAULT_ALERT_THRESHOLD = 0.5


class ScoreTransport(Protocol):
    """What a device needs from the server side of a query"""

    def psi_round1(self, blinded: Sequence[int]) -> Tuple[List[int], List[int]]: ...

    def scores(self, pairs: Sequence[Tuple[Token, int]]) -> List[ScoredPair]: ...


@dataclass
class ExposureResult:
    probability: float
    n_events: int
    alert: bool
    scored_epochs: List[Tuple[int, float]] = field(default_factory=list)


def group_events(scored: Sequence[Tuple[int, float]]) -> List[List[Tuple[int, float]]]:
    """Consecutive epochs carrying the same stored probability form one event"""
    groups: List[List[Tuple[int, float]]] = []
    for epoch, p in sorted(scored):
        last = groups[-1][-1] if groups else None
        if last is not None and epoch == last[0] + 1 and p == last[1]:
            groups[-1].append((epoch, p))
        else:
            groups.append([(epoch, p)])
    return groups


def exposure_probability(scored: Sequence[Tuple[int, float]], alert_threshold: float = DEFAULT_ALERT_THRESHOLD) -> ExposureResult:
    """Average one value per contact event"""
    if not scored:
        return ExposureResult(0.0, 0, False)
    groups = group_events(scored)
    probability = user_probability([g[0][1] for g in groups])
    return ExposureResult(probability, len(groups), probability >= alert_threshold, sorted(scored))


class UserDevice:

    def __init__(
        self,
        grid: Grid,
        rng: Optional[np.random.Generator] = None,
        ledger: Optional[ClientLedger] = None,
        alert_threshold: float = DEFAULT_ALERT_THRESHOLD,
    ):
        self.grid = grid
        # OS-seeded unless a simulation hands in its own generator
        self.rng = rng if rng is not None else np.random.default_rng()
        self.ledger = ledger if ledger is not None else ClientLedger()
        self.alert_threshold = alert_threshold

    def tick(self, position: Position, key: NetKey, ap: AccessPoint) -> ClientRecord:
        record, self.ledger = client_tick(position, self.grid, key, ap, self.rng, self.ledger)
        return record

    def share_diagnosis(self, verification_code: str, onset_epoch: int, since_epoch: Optional[int] = None) -> DiagnosisReport:
        return share_diagnosis(self.ledger, verification_code, onset_epoch, since_epoch)

    def query_scores(self, transport: ScoreTransport, since_epoch: Optional[int] = None) -> ExposureResult:
        """PSI over the ledger's tokens, then a score request for the matching (token, rand) pairs"""
        records = self.ledger.since(since_epoch)
        if not records:
            return ExposureResult(0.0, 0, False)

        session = PsiSession([r.token for r in records])
        doubly, server_set = transport.psi_round1(session.round1())
        matches = session.finish(doubly, server_set)
        if not matches:
            log_operation("query_scores", {"records": len(records), "matches": 0})
            return ExposureResult(0.0, 0, False)

        matched = [records[i] for i, _ in matches]
        scores = transport.scores([(r.token, r.rand) for r in matched])
        epoch_of_pair = {(r.token.digest, r.rand): r.epoch for r in matched}
        scored = [(epoch_of_pair[(s.token.digest, s.rand)], s.probability) for s in scores]

        result = exposure_probability(scored, self.alert_threshold)
        log_operation("query_scores", {"records": len(records), "matches": len(matches), "events": result.n_events})
        return result
