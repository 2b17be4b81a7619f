"""
In-process stand-in for the health authority's verification service.
Each code verifies a diagnosis claim at most once.
"""

import logging
import threading
from typing import Iterable

from ..exceptions import log_operation

logger = logging.getLogger(__name__)


class VerificationRegistry:

    def __init__(self, codes: Iterable[str] = ()):
        self._unused = set(codes)
        self._lock = threading.Lock()

    def is_valid(self, code: str) -> bool:
        with self._lock:
            return code in self._unused

    def verify(self, code: str) -> bool:
        """Check and consume in one step"""
        with self._lock:
            if code not in self._unused:
                return False
            self._unused.discard(code)
        log_operation("registry_verify", {"remaining": len(self._unused)})
        return True

    def __len__(self) -> int:
        return len(self._unused)
