"""Ed25519 signatures keyed by a raw scalar.

Wallet view keys are already reduced scalars, so signing skips the usual
seed expansion: the secret scalar is used as-is and the nonce is derived
deterministically from it. Signatures verify under any standard Ed25519
verifier given ``A = a*G``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .group import L, Point, decode_point, scalar_bytes, scalar_mul_base, point_mul, point_add

NONCE_DOMAIN = b"mbct-eddsa-nonce"


@dataclass(frozen=True)
class Signature:
    r: bytes
    s: bytes

    def __post_init__(self):
        if len(self.r) != 32 or len(self.s) != 32:
            raise ValueError("signature halves must be 32 bytes")

    def to_bytes(self) -> bytes:
        return self.r + self.s

    @classmethod
    def from_bytes(cls, b: bytes) -> Signature:
        if len(b) != 64:
            raise ValueError("signature must be 64 bytes")
        return cls(b[:32], b[32:])

    def hex(self) -> str:
        return self.to_bytes().hex()


def _h512(*parts: bytes) -> int:
    return int.from_bytes(hashlib.sha512(b"".join(parts)).digest(), "little") % L


def sign(secret: int, message: bytes) -> Signature:
    pub = scalar_mul_base(secret)
    nonce = _h512(NONCE_DOMAIN, scalar_bytes(secret), message)
    if nonce == 0:
        nonce = 1
    big_r = scalar_mul_base(nonce)
    k = _h512(big_r.encode(), pub.encode(), message)
    s = (nonce + k * secret) % L
    return Signature(big_r.encode(), scalar_bytes(s))


def verify(pub: Point, message: bytes, sig: Signature) -> bool:
    s = int.from_bytes(sig.s, "little")
    if s >= L or s == 0:
        return False
    big_r = decode_point(sig.r)
    if big_r is None:
        return False
    k = _h512(sig.r, pub.encode(), message)
    lhs = scalar_mul_base(s)
    rhs = point_add(big_r, point_mul(k, pub)) if k else big_r
    return lhs == rhs
