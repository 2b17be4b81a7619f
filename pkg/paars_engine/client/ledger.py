"""
Device-side ledger of uploaded (token, rand, epoch) records and the
diagnosis report built from it.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from ..environment.grid import AccessPoint, Grid, Position, block_of
from ..environment.netkey import NetKey
from ..exceptions import (
    DataValidationError,
    DuplicateEpochError,
    EmptyLedgerError,
    StoreError,
    log_operation,
)
from .token import ClientRecord, derive_token, gen_rand

logger = logging.getLogger(__name__)


class ClientLedger:
    """Append-only, epoch-ordered; optionally mirrored to an NDJSON file"""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self._records: List[ClientRecord] = []
        self._epochs = set()
        self.path = Path(path) if path else None

    @classmethod
    def open(cls, path: Union[str, Path]) -> "ClientLedger":
        """Replay an existing ledger file, or start a new one at `path`"""
        ledger = cls(path)
        if ledger.path.exists():
            try:
                with ledger.path.open("r", encoding="utf-8") as f:
                    for line in f:
                        if line.strip():
                            ledger._insert(ClientRecord.from_wire(json.loads(line)))
            except (OSError, json.JSONDecodeError) as e:
                raise StoreError(f"Failed to replay ledger {ledger.path}: {e}", operation="ledger_open") from e
            logger.info(f"Ledger replayed: {len(ledger)} records")
        return ledger

    def _insert(self, record: ClientRecord) -> None:
        if record.epoch in self._epochs:
            raise DuplicateEpochError(record.epoch)
        if self._records and record.epoch < self._records[-1].epoch:
            raise DataValidationError(
                f"Epoch {record.epoch} precedes the last ledger epoch {self._records[-1].epoch}"
            )
        self._records.append(record)
        self._epochs.add(record.epoch)

    def append(self, record: ClientRecord) -> None:
        self._insert(record)
        if self.path is not None:
            try:
                with self.path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps(record.to_wire(), sort_keys=True) + "\n")
            except OSError as e:
                raise StoreError(f"Failed to append to ledger {self.path}: {e}", operation="ledger_append") from e

    def has_epoch(self, epoch: int) -> bool:
        return epoch in self._epochs

    @property
    def records(self) -> Tuple[ClientRecord, ...]:
        return tuple(self._records)

    def since(self, epoch: Optional[int]) -> List[ClientRecord]:
        if epoch is None:
            return list(self._records)
        return [r for r in self._records if r.epoch >= epoch]

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ClientRecord]:
        return iter(self._records)


def client_tick(
    position: Position,
    grid: Grid,
    key: NetKey,
    ap: AccessPoint,
    rng: np.random.Generator,
    ledger: ClientLedger,
) -> Tuple[ClientRecord, ClientLedger]:
    """Derive this epoch's token, draw a fresh rand and record both"""
    if ledger.has_epoch(key.epoch):
        raise DuplicateEpochError(key.epoch)
    block = block_of(grid, position)
    record = ClientRecord(derive_token(block, key, ap.network_address), gen_rand(rng), key.epoch)
    ledger.append(record)
    return record, ledger


@dataclass(frozen=True)
class DiagnosisReport:
    verification_code: str
    onset_epoch: int
    entries: Tuple[ClientRecord, ...] = field(default_factory=tuple)

    def to_wire(self) -> Dict[str, Any]:
        return {
            "code": self.verification_code,
            "onset_epoch": self.onset_epoch,
            "entries": [r.to_wire() for r in self.entries],
        }

    @classmethod
    def from_wire(cls, data: Dict[str, Any]) -> "DiagnosisReport":
        try:
            entries = tuple(ClientRecord.from_wire(e) for e in data["entries"])
            return cls(str(data["code"]), int(data["onset_epoch"]), entries)
        except KeyError as e:
            raise DataValidationError(f"Diagnosis report is missing field {e}") from e


def share_diagnosis(
    ledger: ClientLedger,
    verification_code: str,
    onset_epoch: int,
    since_epoch: Optional[int] = None,
) -> DiagnosisReport:
    """Package the ledger for a voluntary diagnosis upload; nothing shares automatically"""
    entries = tuple(ledger.since(since_epoch))
    if not entries:
        raise EmptyLedgerError()
    log_operation("share_diagnosis", {"entries": len(entries), "onset_epoch": onset_epoch})
    return DiagnosisReport(verification_code, int(onset_epoch), entries)
