from .ledger import ClientLedger, DiagnosisReport, client_tick, share_diagnosis
from .token import ClientRecord, Token, derive_token, gen_rand, token_preimage

__all__ = [
    "ClientLedger",
    "ClientRecord",
    "DiagnosisReport",
    "Token",
    "client_tick",
    "derive_token",
    "gen_rand",
    "share_diagnosis",
    "token_preimage",
]
