"""
Wire transports used by simulated devices.

Both speak the service's JSON API and keep a transcript of every request
and response body for the privacy audits.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import requests

from ..client.ledger import DiagnosisReport
from ..client.token import ClientRecord, Token, parse_rand
from ..contactstore.store import ContactRow
from ..exceptions import StoreError, TransportError
from ..psi.group import decode_element, encode_element
from ..psi.protocol import ScoredPair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Exchange:
    endpoint: str
    request: bytes
    response: bytes


class _JsonTransport:
    """Request encoding, transcript capture and error mapping shared by both transports"""

    def __init__(self):
        self.transcript: List[Exchange] = []

    def _send(self, method: str, path: str, payload: Any = None, params: Optional[Dict[str, Any]] = None):
        raise NotImplementedError

    def _call(self, method: str, path: str, payload: Any = None, params: Optional[Dict[str, Any]] = None,
              accept: Tuple[int, ...] = ()) -> Tuple[int, Any]:
        body = b"" if payload is None else json.dumps(payload, sort_keys=True).encode("utf-8")
        status_code, content = self._send(method, path, body, params)
        self.transcript.append(Exchange(path, body, content))
        data = json.loads(content) if content else None
        if status_code >= 400 and status_code not in accept:
            error = data if isinstance(data, dict) else {}
            raise TransportError(path, status_code, error.get("error_code"), error.get("error", ""))
        return status_code, data

    # --- endpoints -------------------------------------------------------

    def ingest(self, record: ClientRecord, ap_id: Optional[int] = None) -> int:
        payload = dict(record.to_wire())
        if ap_id is not None:
            payload["ap_id"] = ap_id
        status_code, _ = self._call("POST", "/v1/records", payload, accept=(409,))
        return status_code

    def diagnosis(self, report: DiagnosisReport) -> Dict[str, int]:
        _, data = self._call("POST", "/v1/diagnosis", report.to_wire())
        return data

    def psi_round1(self, blinded: Sequence[int]) -> Tuple[List[int], List[int]]:
        _, data = self._call("POST", "/v1/psi/round1", [encode_element(y) for y in blinded])
        return [decode_element(v) for v in data["client"]], [decode_element(v) for v in data["server"]]

    def scores(self, pairs: Sequence[Tuple[Token, int]]) -> List[ScoredPair]:
        payload = [{"token": t.hex, "rand": str(r)} for t, r in pairs]
        _, data = self._call("POST", "/v1/scores", payload)
        return [ScoredPair(Token.from_hex(d["token"]), parse_rand(d["rand"]), float(d["p"])) for d in data]

    def occupancy(self, from_epoch: int, to_epoch: int) -> Dict[str, Any]:
        _, data = self._call("GET", "/v1/occupancy", params={"from": from_epoch, "to": to_epoch})
        return data

    def health(self) -> Dict[str, Any]:
        _, data = self._call("GET", "/health")
        return data

    # --- server-side view, for verification only -------------------------

    def server_rows(self) -> List[ContactRow]:
        raise NotImplementedError

    def store_bytes(self) -> bytes:
        raise NotImplementedError


class InProcessTransport(_JsonTransport):
    """Drives an in-process app through the ASGI test client"""

    def __init__(self, cfg, rng: Optional[np.random.Generator] = None):
        super().__init__()
        from fastapi.testclient import TestClient
        from main import create_app

        self.app = create_app(cfg, rng)
        self.client = TestClient(self.app)

    @property
    def service(self):
        return self.app.state.service

    def _send(self, method, path, body, params):
        response = self.client.request(
            method, path, content=body or None, params=params,
            headers={"Content-Type": "application/json"} if body else None,
        )
        return response.status_code, response.content

    def server_rows(self) -> List[ContactRow]:
        return self.service.store.rows()

    def store_bytes(self) -> bytes:
        return self.service.store.persisted_bytes()

    def close(self) -> None:
        self.client.close()


class HttpTransport(_JsonTransport):
    """Talks to a running service; the server view comes from its store file on the same host"""

    def __init__(self, base_url: str, store_path: Optional[Union[str, Path]] = None, timeout: float = 10.0):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.store_path = Path(store_path) if store_path else None
        self.timeout = timeout
        self.session = requests.Session()

    def _send(self, method, path, body, params):
        response = self.session.request(
            method, f"{self.base_url}{path}", data=body or None, params=params,
            headers={"Content-Type": "application/json"} if body else None,
            timeout=self.timeout,
        )
        return response.status_code, response.content

    def store_bytes(self) -> bytes:
        if self.store_path is None:
            raise StoreError("HTTP transport has no store path to read", operation="store_bytes")
        return self.store_path.read_bytes()

    def server_rows(self) -> List[ContactRow]:
        latest: Dict[tuple, ContactRow] = {}
        for line in self.store_bytes().decode("utf-8").splitlines():
            if line.strip():
                row = ContactRow.from_wire(json.loads(line))
                latest[row.key] = row
        return sorted(latest.values(), key=lambda r: (r.epoch, r.token.digest, r.rand))

    def close(self) -> None:
        self.session.close()
