"""
Token derivation and per-epoch random values.

Preimage layout, 38 bytes:
    block id (8, big-endian) || epoch (8, big-endian) || K_net (16) || AP address (6)
"""

import hashlib
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from ..environment.grid import ADDRESS_BITS, BlockId
from ..environment.netkey import NetKey
from ..exceptions import DataValidationError

TOKEN_BYTES = 32
RAND_BITS = 64
PREIMAGE_BYTES = 8 + 8 + 16 + ADDRESS_BITS // 8


@dataclass(frozen=True)
class Token:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != TOKEN_BYTES:
            raise DataValidationError(f"Token must be {TOKEN_BYTES} bytes, got {len(self.digest)}")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, value: str) -> "Token":
        if len(value) != 2 * TOKEN_BYTES:
            raise DataValidationError(f"Token must be {2 * TOKEN_BYTES} hex characters")
        try:
            return cls(bytes.fromhex(value))
        except ValueError as e:
            raise DataValidationError(f"Token is not valid hex: {e}") from e

    def __repr__(self) -> str:
        return f"Token({self.hex[:16]}…)"


def token_preimage(block: BlockId, key: NetKey, ap_address: int) -> bytes:
    if not 0 <= ap_address < (1 << ADDRESS_BITS):
        raise DataValidationError("Access point address must be a 48-bit value")
    return (
        block.value.to_bytes(8, "big")
        + key.epoch.to_bytes(8, "big", signed=True)
        + key.value
        + ap_address.to_bytes(ADDRESS_BITS // 8, "big")
    )


def derive_token(block: BlockId, key: NetKey, ap_address: int) -> Token:
    """ID <- SHA-256(block || epoch || K_net || AP address)"""
    return Token(hashlib.sha256(token_preimage(block, key, ap_address)).digest())


def gen_rand(rng: np.random.Generator) -> int:
    """Uniform 64-bit value; seeded generator in simulation, OS-seeded on devices"""
    return int.from_bytes(rng.bytes(RAND_BITS // 8), "big")


def parse_rand(value: Any) -> int:
    """Rands travel as decimal strings"""
    try:
        rand = int(str(value), 10)
    except ValueError as e:
        raise DataValidationError(f"rand is not a decimal integer: {value!r}") from e
    if not 0 <= rand < (1 << RAND_BITS):
        raise DataValidationError("rand must fit in 64 bits")
    return rand


@dataclass(frozen=True)
class ClientRecord:
    token: Token
    rand: int
    epoch: int

    def to_wire(self) -> Dict[str, Any]:
        return {"token": self.token.hex, "rand": str(self.rand), "epoch": self.epoch}

    @classmethod
    def from_wire(cls, data: Dict[str, Any]) -> "ClientRecord":
        try:
            return cls(Token.from_hex(data["token"]), parse_rand(data["rand"]), int(data["epoch"]))
        except KeyError as e:
            raise DataValidationError(f"Record is missing field {e}") from e
