from .group import (
    ELEMENT_BYTES,
    P,
    Q,
    blind,
    decode_element,
    encode_element,
    hash_to_group,
    is_valid_element,
    random_scalar,
    unblind,
)
from .protocol import (
    PsiServer,
    PsiSession,
    PsiState,
    ScoredPair,
    client_finish,
    client_round1,
    score_request,
    server_round,
)

__all__ = [
    "ELEMENT_BYTES",
    "P",
    "PsiServer",
    "PsiSession",
    "PsiState",
    "Q",
    "ScoredPair",
    "blind",
    "client_finish",
    "client_round1",
    "decode_element",
    "encode_element",
    "hash_to_group",
    "is_valid_element",
    "random_scalar",
    "score_request",
    "server_round",
    "unblind",
]
