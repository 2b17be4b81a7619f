"""
Two-round Diffie-Hellman style private set intersection and the
rand-gated score lookup that follows it.

    client                                  server
    a = H(x)^c            --round1-->
                          <--round2--       (a^s, shuffle{H(y)^s : y in H_sys})
    match (H(y)^s)^c against a^s
"""

import logging
import secrets
import threading
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..client.token import Token
from ..contactstore.store import ContactStore
from ..exceptions import DataValidationError, EmptySetError, PsiStateError, UnknownPairError, log_operation
from .group import blind, hash_to_group, is_valid_element, random_scalar

logger = logging.getLogger(__name__)


class PsiState(str, Enum):
    INIT = "Init"
    ROUND1_SENT = "Round1Sent"
    COMPLETE = "Complete"


class PsiSession:
    """Client side of one protocol run; the secret is used once and never serialized"""

    def __init__(self, items: Sequence[Token], secret: Optional[int] = None):
        if not items:
            raise EmptySetError()
        self.items: Tuple[Token, ...] = tuple(items)
        self._secret = secret if secret is not None else random_scalar()
        self.state = PsiState.INIT

    def __repr__(self) -> str:
        return f"PsiSession(items={len(self.items)}, state={self.state.value})"

    def round1(self) -> List[int]:
        if self.state is not PsiState.INIT:
            raise PsiStateError(PsiState.INIT.value, self.state.value)
        blinded = client_round1(self.items, self._secret)
        self.state = PsiState.ROUND1_SENT
        return blinded

    def finish(self, doubly_blinded_client: Sequence[int], server_blinded_set: Sequence[int]) -> List[Tuple[int, Token]]:
        return client_finish(self, doubly_blinded_client, server_blinded_set)


def client_round1(items: Sequence[Token], secret: int) -> List[int]:
    if not items:
        raise EmptySetError()
    return [blind(hash_to_group(t), secret) for t in items]


def server_round(
    client_blinded: Sequence[int],
    server_set: Sequence[Token],
    server_secret: int,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[List[int], List[int]]:
    """Re-blind the client's items in order; blind and shuffle the server's own set"""
    for y in client_blinded:
        if not is_valid_element(y):
            raise DataValidationError("Client sent a value outside the group")
    doubly = [blind(y, server_secret) for y in client_blinded]
    return doubly, blind_server_set(server_set, server_secret, rng)


def blind_server_set(server_set: Sequence[Token], server_secret: int, rng: Optional[np.random.Generator] = None) -> List[int]:
    blinded = [blind(hash_to_group(t), server_secret) for t in server_set]
    if rng is not None:
        order = rng.permutation(len(blinded))
        return [blinded[i] for i in order]
    secrets.SystemRandom().shuffle(blinded)
    return blinded


def client_finish(
    session: PsiSession,
    doubly_blinded_client: Sequence[int],
    server_blinded_set: Sequence[int],
) -> List[Tuple[int, Token]]:
    """Indices and tokens of the client items that are in the server set"""
    if session.state is not PsiState.ROUND1_SENT:
        raise PsiStateError(PsiState.ROUND1_SENT.value, session.state.value)
    if len(doubly_blinded_client) != len(session.items):
        raise DataValidationError(
            f"Server returned {len(doubly_blinded_client)} items for {len(session.items)} sent"
        )

    server_side = {blind(y, session._secret) for y in server_blinded_set}
    matches = [
        (i, session.items[i])
        for i, y in enumerate(doubly_blinded_client)
        if y in server_side
    ]
    session.state = PsiState.COMPLETE
    session._secret = None
    log_operation("psi_client_finish", {"items": len(session.items), "matches": len(matches)})
    return matches


class PsiServer:
    """
    Server half bound to a contact store.

    The blinded H_sys is computed once per (secret, store version) and reused
    across rounds until the next diagnosis rotates the secret.
    """

    def __init__(self, store: ContactStore, rng: Optional[np.random.Generator] = None):
        self.store = store
        self._rng = rng
        self._lock = threading.Lock()
        self._secret = random_scalar()
        self._generation = 0
        self._cache: Optional[Tuple[int, List[int]]] = None

    @property
    def generation(self) -> int:
        return self._generation

    def rotate(self) -> None:
        with self._lock:
            self._secret = random_scalar()
            self._generation += 1
            self._cache = None
        logger.info(f"PSI server secret rotated (generation {self._generation})")

    def _snapshot(self) -> Tuple[int, List[int]]:
        # never hold our lock while waiting on the store's writer lock
        version, tokens = self.store.positive_snapshot()
        with self._lock:
            if self._cache is None or self._cache[0] != version:
                self._cache = (version, blind_server_set(tokens, self._secret, self._rng))
            return self._secret, self._cache[1]

    def round(self, client_blinded: Sequence[int]) -> Tuple[List[int], List[int]]:
        if not client_blinded:
            raise EmptySetError()
        secret, server_blinded = self._snapshot()
        doubly, _ = server_round(client_blinded, [], secret)
        log_operation("psi_server_round", {"items": len(client_blinded), "server_set": len(server_blinded)})
        return doubly, list(server_blinded)


class ScoredPair(NamedTuple):
    token: Token
    rand: int
    probability: float


def score_request(store: ContactStore, pairs: Sequence[Tuple[Token, int]]) -> List[ScoredPair]:
    """Probabilities for rows matching both token and rand; any unknown pair fails the request"""
    if not pairs:
        raise EmptySetError()

    results = []
    unknown = 0
    for token, rand in pairs:
        rows = store.find_pair(token, rand)
        if not rows:
            unknown += 1
            continue
        row = max(rows, key=lambda r: r.epoch)
        results.append(ScoredPair(token, rand, row.probability))
    if unknown:
        raise UnknownPairError(unknown)

    log_operation("score_request", {"pairs": len(pairs)})
    return results
