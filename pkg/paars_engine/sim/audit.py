"""
Privacy audits over what left the devices and what the server persisted.
"""

import base64
import binascii
import json
import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Mapping, Sequence

from ..client.token import ClientRecord, Token
from ..psi.group import ELEMENT_BYTES, hash_to_group
from .transport import Exchange

logger = logging.getLogger(__name__)

STORE_FIELDS = frozenset({"token", "rand", "epoch", "status", "p"})
PSI_ENDPOINTS = frozenset({"/v1/psi/round1"})


@dataclass(frozen=True)
class Finding:
    audit: str
    subject: str
    detail: str

    def to_dict(self) -> Dict[str, str]:
        return asdict(self)


def canonical_bytes(record: ClientRecord) -> bytes:
    """Fixed-width token || rand; the epoch field is left out"""
    return record.token.digest + record.rand.to_bytes(8, "big")


def _constant_positions(streams: Sequence[bytes]) -> set:
    if not streams:
        return set()
    width = min(len(s) for s in streams)
    return {i for i in range(width) if len({s[i] for s in streams}) == 1}


def constant_byte_findings(records_by_client: Mapping[str, Sequence[ClientRecord]], min_records: int = 10) -> List[Finding]:
    """Byte positions constant across one client's records but not across all clients"""
    everyone = [canonical_bytes(r) for records in records_by_client.values() for r in records]
    shared = _constant_positions(everyone)

    findings = []
    for label, records in records_by_client.items():
        if len(records) < min_records:
            continue
        positions = _constant_positions([canonical_bytes(r) for r in records]) - shared
        if positions:
            findings.append(Finding("constant_bytes", label, f"positions {sorted(positions)[:8]}"))
    return findings


def store_schema_findings(store_bytes: bytes) -> List[Finding]:
    findings = []
    for lineno, line in enumerate(store_bytes.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = set(json.loads(line))
        if fields != STORE_FIELDS:
            findings.append(Finding("store_schema", f"line {lineno}", f"fields {sorted(fields)}"))
    return findings


def substring_findings(blobs: Iterable[bytes], needles: Mapping[str, bytes], audit: str) -> List[Finding]:
    findings = []
    blobs = list(blobs)
    for label, needle in needles.items():
        if any(needle in blob for blob in blobs):
            findings.append(Finding(audit, label, "present in captured bytes"))
    return findings


def _json_strings(value) -> Iterable[str]:
    if isinstance(value, str):
        yield value
    elif isinstance(value, dict):
        for v in value.values():
            yield from _json_strings(v)
    elif isinstance(value, list):
        for v in value:
            yield from _json_strings(v)


def psi_transcript_findings(exchanges: Sequence[Exchange], tokens: Iterable[Token]) -> List[Finding]:
    """PSI messages may carry only blinded elements: no token, in any encoding, and no plain hash-to-group value"""
    strings = set()
    elements = set()
    for ex in exchanges:
        if ex.endpoint not in PSI_ENDPOINTS:
            continue
        for blob in (ex.request, ex.response):
            if not blob:
                continue
            for s in _json_strings(json.loads(blob)):
                strings.add(s)
                try:
                    raw = base64.b64decode(s, validate=True)
                except (binascii.Error, ValueError):
                    continue
                if len(raw) == ELEMENT_BYTES:
                    elements.add(int.from_bytes(raw, "big"))

    findings = []
    for token in tokens:
        encodings = {token.hex, token.hex.upper(), base64.b64encode(token.digest).decode("ascii")}
        if encodings & strings:
            findings.append(Finding("psi_transcript", token.hex[:16], "token encoding in PSI message"))
        elif hash_to_group(token) in elements:
            findings.append(Finding("psi_transcript", token.hex[:16], "unblinded group element in PSI message"))
    return findings


def transcript_blobs(exchanges: Sequence[Exchange]) -> List[bytes]:
    return [blob for ex in exchanges for blob in (ex.request, ex.response) if blob]
