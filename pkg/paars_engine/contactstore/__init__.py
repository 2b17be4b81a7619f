from .events import ContactEvent, reconstruct_events
from .registry import VerificationRegistry
from .store import ContactRow, ContactStatus, ContactStore, DiagnosisOutcome, OccupancyReport

__all__ = [
    "ContactEvent",
    "ContactRow",
    "ContactStatus",
    "ContactStore",
    "DiagnosisOutcome",
    "OccupancyReport",
    "VerificationRegistry",
    "reconstruct_events",
]
