"""
Prime-order group for commutative blinding.

Quadratic residues modulo the 2048-bit MODP safe prime (RFC 3526, group 14):
P = 2q + 1 with q prime, so the residues form a subgroup of prime order q.
Elements travel as 256-byte big-endian integers, base64 on the wire.
"""

import base64
import binascii
import hashlib
import secrets

from ..client.token import Token
from ..exceptions import DataValidationError

P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9"
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
Q = (P - 1) // 2
ELEMENT_BYTES = 256
SCALAR_BITS = 256

_H2G_LABEL = b"paars-h2g"
# 16 bytes past the modulus keep the reduction bias below 2^-128
_H2G_EXPAND_BYTES = ELEMENT_BYTES + 16


def is_valid_element(y: int) -> bool:
    return 1 < y < P and pow(y, Q, P) == 1


def hash_to_group(token: Token) -> int:
    """Expand the token with SHAKE-256, reduce mod P and square into the residue subgroup"""
    wide = hashlib.shake_256(_H2G_LABEL + token.digest).digest(_H2G_EXPAND_BYTES)
    x = int.from_bytes(wide, "big") % P
    if x in (0, 1, P - 1):
        # unreachable for a 256-bit hash input; keeps the codomain contract total
        x = 2
    return pow(x, 2, P)


def random_scalar() -> int:
    """Uniform in [1, q), OS-sourced"""
    while True:
        s = secrets.randbits(SCALAR_BITS)
        if 0 < s < Q:
            return s


def blind(element: int, scalar: int) -> int:
    return pow(element, scalar, P)


def unblind(element: int, scalar: int) -> int:
    return pow(element, pow(scalar, -1, Q), P)


def encode_element(y: int) -> str:
    return base64.b64encode(y.to_bytes(ELEMENT_BYTES, "big")).decode("ascii")


def decode_element(value: str) -> int:
    try:
        raw = base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as e:
        raise DataValidationError(f"Group element is not valid base64: {e}") from e
    if len(raw) != ELEMENT_BYTES:
        raise DataValidationError(f"Group element must be {ELEMENT_BYTES} bytes, got {len(raw)}")
    y = int.from_bytes(raw, "big")
    if not is_valid_element(y):
        raise DataValidationError("Value is not an element of the residue subgroup")
    return y
