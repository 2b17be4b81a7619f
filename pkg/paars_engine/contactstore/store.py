"""
Server-side contact database.

Rows are kept in an in-memory index and mirrored to an append-only NDJSON
file; every committed state change appends the row's full new state and the
index is rebuilt on start by replaying the file (last line per key wins).
A persisted row has exactly five fields: token, rand, epoch, status, p.
"""

import json
import logging
import threading
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from ..client.ledger import DiagnosisReport
from ..client.token import Token, parse_rand
from ..exceptions import (
    DataValidationError,
    DuplicateRowError,
    NoMatchingRowsError,
    StoreError,
    UnknownRowError,
    VerificationFailedError,
    handle_exception,
    log_operation,
)
from .registry import VerificationRegistry

logger = logging.getLogger(__name__)

RowKey = Tuple[bytes, int, int]
UNATTRIBUTED_AP = "unattributed"


class ContactStatus(str, Enum):
    NOT_APPLICABLE = "NA"
    TO_BE_DETERMINED = "TBD"
    INFECTED = "INFECTED"
    SCORED = "SCORED"


@dataclass(frozen=True)
class ContactRow:
    token: Token
    rand: int
    epoch: int
    status: ContactStatus = ContactStatus.NOT_APPLICABLE
    probability: float = 0.0

    @property
    def key(self) -> RowKey:
        return (self.token.digest, self.rand, self.epoch)

    def to_wire(self) -> Dict[str, object]:
        return {
            "token": self.token.hex,
            "rand": str(self.rand),
            "epoch": self.epoch,
            "status": self.status.value,
            "p": self.probability,
        }

    @classmethod
    def from_wire(cls, data: Mapping[str, object]) -> "ContactRow":
        return cls(
            Token.from_hex(str(data["token"])),
            parse_rand(data["rand"]),
            int(data["epoch"]),
            ContactStatus(data["status"]),
            float(data["p"]),
        )


@dataclass
class DiagnosisOutcome:
    infected_rows: List[ContactRow]
    peer_rows: List[ContactRow]
    reporter_rands: Dict[int, int]

    @property
    def updated(self) -> int:
        return len(self.infected_rows)


@dataclass
class OccupancyReport:
    from_epoch: int
    to_epoch: int
    per_ap: Dict[str, int]
    total: int
    peak: int
    threshold: int
    alert: bool


@dataclass
class _Transaction:
    before: Dict[RowKey, Optional[ContactRow]] = field(default_factory=dict)
    dirty: List[RowKey] = field(default_factory=list)
    on_commit: List[Callable[[], object]] = field(default_factory=list)


def clamp_probability(p: float) -> float:
    return min(1.0, max(0.0, float(p)))


class ContactStore:
    """Single writer; readers copy under the same lock and get a consistent snapshot"""

    def __init__(self, path: Optional[Union[str, Path]] = None, occupancy_threshold: int = 50):
        self.path = Path(path) if path else None
        self.occupancy_threshold = occupancy_threshold
        self._rows: Dict[RowKey, ContactRow] = {}
        self._by_token: Dict[bytes, List[RowKey]] = defaultdict(list)
        # epoch -> rand -> access point label
        self._presence: Dict[int, Dict[int, str]] = defaultdict(dict)
        self._lock = threading.RLock()
        self._txn: Optional[_Transaction] = None
        self._version = 0

        if self.path is not None and self.path.exists():
            self._replay()

    # --- persistence -----------------------------------------------------

    @handle_exception
    def _replay(self) -> None:
        try:
            with self.path.open("r", encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    row = ContactRow.from_wire(json.loads(line))
                    if row.key not in self._rows:
                        self._index(row, UNATTRIBUTED_AP)
                    self._rows[row.key] = row
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
            raise StoreError(f"Failed to replay contact store {self.path}: {e}", operation="replay") from e
        logger.info(f"Contact store replayed: {len(self._rows)} rows from {self.path}")

    def _append(self, rows: Sequence[ContactRow]) -> None:
        if self.path is None or not rows:
            return
        payload = "".join(json.dumps(r.to_wire(), sort_keys=True) + "\n" for r in rows)
        try:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(payload)
        except OSError as e:
            raise StoreError(f"Failed to append to contact store {self.path}: {e}", operation="append") from e

    def persisted_bytes(self) -> bytes:
        if self.path is None or not self.path.exists():
            return b""
        return self.path.read_bytes()

    # --- transactions ----------------------------------------------------

    @contextmanager
    def transaction(self) -> Iterator[_Transaction]:
        """Group writes under the writer lock; on failure every touched row is restored and nothing is appended"""
        with self._lock:
            if self._txn is not None:
                yield self._txn
                return
            txn = _Transaction()
            self._txn = txn
            try:
                yield txn
                self._commit(txn)
            except BaseException:
                self._rollback(txn)
                raise
            finally:
                self._txn = None

    def _commit(self, txn: _Transaction) -> None:
        self._append([self._rows[k] for k in txn.dirty])
        if txn.dirty:
            self._version += 1
        for callback in txn.on_commit:
            callback()

    def _rollback(self, txn: _Transaction) -> None:
        for key, before in txn.before.items():
            if before is None:
                self._unindex(key)
            else:
                self._rows[key] = before
        if txn.before:
            logger.warning(f"Contact store transaction rolled back ({len(txn.before)} rows restored)")

    def _put(self, row: ContactRow, ap_label: Optional[str] = None) -> None:
        txn = self._txn
        key = row.key
        if key not in txn.before:
            txn.before[key] = self._rows.get(key)
            txn.dirty.append(key)
        if key not in self._rows:
            self._index(row, ap_label or UNATTRIBUTED_AP)
        self._rows[key] = row

    def _index(self, row: ContactRow, ap_label: str) -> None:
        self._rows[row.key] = row
        self._by_token[row.token.digest].append(row.key)
        self._presence[row.epoch].setdefault(row.rand, ap_label)

    def _unindex(self, key: RowKey) -> None:
        token, rand, epoch = key
        self._rows.pop(key, None)
        keys = self._by_token.get(token, [])
        if key in keys:
            keys.remove(key)
        if not keys:
            self._by_token.pop(token, None)
        if not any(k[1] == rand and k[2] == epoch for k in self._rows):
            self._presence.get(epoch, {}).pop(rand, None)

    # --- reads -----------------------------------------------------------

    @property
    def version(self) -> int:
        return self._version

    def __len__(self) -> int:
        with self._lock:
            return len(self._rows)

    def rows(self) -> List[ContactRow]:
        with self._lock:
            return sorted(self._rows.values(), key=lambda r: (r.epoch, r.token.digest, r.rand))

    def get(self, token: Token, rand: int, epoch: int) -> Optional[ContactRow]:
        with self._lock:
            return self._rows.get((token.digest, rand, epoch))

    def find_contacts(self, token: Token) -> List[ContactRow]:
        """All rows carrying `token`: the co-located uploads of one block and epoch"""
        with self._lock:
            keys = list(self._by_token.get(token.digest, ()))
            return sorted((self._rows[k] for k in keys), key=lambda r: (r.epoch, r.rand))

    def find_pair(self, token: Token, rand: int) -> List[ContactRow]:
        with self._lock:
            return [self._rows[k] for k in self._by_token.get(token.digest, ()) if k[1] == rand]

    def positive_tokens(self) -> List[Token]:
        """H_sys: tokens of Infected or Scored rows with positive probability"""
        return self.positive_snapshot()[1]

    def positive_snapshot(self) -> Tuple[int, List[Token]]:
        """Store version together with the positive tokens it holds"""
        with self._lock:
            version = self._version
            digests = {
                r.token.digest for r in self._rows.values()
                if r.status in (ContactStatus.INFECTED, ContactStatus.SCORED) and r.probability > 0
            }
        return version, [Token(d) for d in sorted(digests)]

    # --- writes ----------------------------------------------------------

    def ingest(self, token: Token, rand: int, epoch: int, ap_id: Optional[int] = None) -> ContactRow:
        """Store an uploaded record as {N/A, 0}"""
        with self.transaction():
            if (token.digest, rand, epoch) in self._rows:
                raise DuplicateRowError(epoch)
            row = ContactRow(token, rand, epoch)
            self._put(row, UNATTRIBUTED_AP if ap_id is None else str(ap_id))
        return row

    def apply_diagnosis(self, report: DiagnosisReport, registry: VerificationRegistry) -> DiagnosisOutcome:
        """Mark the reporter's rows Infected and every co-located peer row TBD"""
        with self.transaction() as txn:
            code = report.verification_code
            if not registry.is_valid(code):
                raise VerificationFailedError()

            matched: List[ContactRow] = []
            for entry in report.entries:
                row = self._rows.get((entry.token.digest, entry.rand, entry.epoch))
                if row is not None:
                    matched.append(row)
            if not matched:
                raise NoMatchingRowsError(len(report.entries))

            matched_keys = {r.key for r in matched}
            infected = []
            for row in matched:
                updated = replace(row, status=ContactStatus.INFECTED, probability=1.0)
                self._put(updated)
                infected.append(updated)

            peers = []
            for digest in {r.token.digest for r in matched}:
                for key in list(self._by_token.get(digest, ())):
                    if key in matched_keys:
                        continue
                    row = self._rows[key]
                    if row.status is ContactStatus.INFECTED:
                        continue
                    pending = replace(row, status=ContactStatus.TO_BE_DETERMINED, probability=0.0)
                    self._put(pending)
                    peers.append(pending)

            txn.on_commit.append(lambda: registry.verify(code))

        peers.sort(key=lambda r: (r.epoch, r.rand))
        log_operation("apply_diagnosis", {"infected_rows": len(infected), "peer_rows": len(peers)})
        return DiagnosisOutcome(infected, peers, {r.epoch: r.rand for r in infected})

    def record_scores(self, rows: Sequence[ContactRow], noisy_probabilities: Mapping[int, float]) -> int:
        """Write one clamped probability per subject rand onto its TBD rows"""
        with self.transaction():
            by_rand: Dict[int, List[RowKey]] = defaultdict(list)
            for row in rows:
                by_rand[row.rand].append(row.key)

            written = 0
            for rand, p in noisy_probabilities.items():
                keys = [k for k in by_rand.get(rand, ())
                        if k in self._rows and self._rows[k].status is ContactStatus.TO_BE_DETERMINED]
                if not keys:
                    raise UnknownRowError("No TBD row for a scored subject", {'subject_rows': len(by_rand.get(rand, ()))})
                clamped = clamp_probability(p)
                for key in keys:
                    current = self._rows[key]
                    if clamped > 0:
                        self._put(replace(current, status=ContactStatus.SCORED, probability=clamped))
                    else:
                        # excluded from H_sys
                        self._put(replace(current, status=ContactStatus.NOT_APPLICABLE, probability=0.0))
                    written += 1
        log_operation("record_scores", {"rows": written})
        return written

    # --- occupancy -------------------------------------------------------

    def occupancy(self, from_epoch: int, to_epoch: int, threshold: Optional[int] = None) -> OccupancyReport:
        """Distinct rands ingested in [from_epoch, to_epoch], grouped by access point"""
        if from_epoch > to_epoch:
            raise DataValidationError(f"Bad epoch window {from_epoch}..{to_epoch}")
        limit = self.occupancy_threshold if threshold is None else threshold

        with self._lock:
            window = {e: dict(p) for e, p in self._presence.items() if from_epoch <= e <= to_epoch}

        per_ap_rands: Dict[str, set] = defaultdict(set)
        all_rands = set()
        peak = 0
        for presence in window.values():
            peak = max(peak, len(presence))
            for rand, ap_label in presence.items():
                per_ap_rands[ap_label].add(rand)
                all_rands.add(rand)

        total = len(all_rands)
        report = OccupancyReport(
            from_epoch=from_epoch,
            to_epoch=to_epoch,
            per_ap={ap: len(r) for ap, r in sorted(per_ap_rands.items())},
            total=total,
            peak=peak,
            threshold=limit,
            alert=total > limit,
        )
        if report.alert:
            logger.warning(f"Occupancy {total} exceeds threshold {limit} in epochs {from_epoch}..{to_epoch}")
        return report
