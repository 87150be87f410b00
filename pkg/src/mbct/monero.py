"""Monero-style wallets, one-time (stealth) outputs and amount masking.

This is the baseline that covert transactions have to blend into: a normal
payment has one output for the recipient at index 0 and a change output for
the sender at the last index.

Transaction wire layout (all integers little-endian)::

    tx_pub      32 bytes
    n_outputs   u16
    outputs     n_outputs * (stealth_address 32 bytes || masked_amount 8 bytes)
    fee         u64

The transaction id is Keccak-256 of that byte string.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .group import (
    Point, decode_point, keccak256, hash_to_scalar, point_mul, random_scalar,
    scalar_mul_base, varint, xor_bytes, InvalidPoint,
)

AMOUNT_DOMAIN = b"amount"
DEFAULT_FEE = 30_000_000
MAX_AMOUNT = 2**64 - 1


class PublicKeys(NamedTuple):
    view: Point
    spend: Point

    def hex(self) -> dict:
        return {"view_pub": self.view.hex(), "spend_pub": self.spend.hex()}


@dataclass(frozen=True)
class KeyQuad:
    view_priv: int
    spend_priv: int
    view_pub: Point = field(repr=False)
    spend_pub: Point = field(repr=False)

    @classmethod
    def from_private(cls, view_priv: int, spend_priv: int) -> KeyQuad:
        return cls(view_priv, spend_priv, scalar_mul_base(view_priv), scalar_mul_base(spend_priv))

    @classmethod
    def generate(cls, rng) -> KeyQuad:
        return cls.from_private(random_scalar(rng), random_scalar(rng))

    @property
    def public(self) -> PublicKeys:
        return PublicKeys(self.view_pub, self.spend_pub)

    def check(self) -> bool:
        return (self.view_pub == scalar_mul_base(self.view_priv)
                and self.spend_pub == scalar_mul_base(self.spend_priv))

    def to_json(self) -> dict:
        return {
            "view_priv": self.view_priv.to_bytes(32, "little").hex(),
            "view_pub": self.view_pub.hex(),
            "spend_priv": self.spend_priv.to_bytes(32, "little").hex(),
            "spend_pub": self.spend_pub.hex(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> KeyQuad:
        quad = cls.from_private(int.from_bytes(bytes.fromhex(doc["view_priv"]), "little"),
                                int.from_bytes(bytes.fromhex(doc["spend_priv"]), "little"))
        for name in ("view_pub", "spend_pub"):
            if name in doc and doc[name] != getattr(quad, name).hex():
                raise ValueError(f"wallet {name} does not match its private key")
        return quad


def save_wallet(quad: KeyQuad, path) -> None:
    Path(path).write_text(json.dumps(quad.to_json(), indent=2) + "\n")


def load_wallet(path) -> KeyQuad:
    return KeyQuad.from_json(json.loads(Path(path).read_text()))


def load_public(path) -> PublicKeys:
    """Read the public half of a wallet or a ``*.pub`` file."""
    doc = json.loads(Path(path).read_text())
    return PublicKeys(Point.fromhex(doc["view_pub"]), Point.fromhex(doc["spend_pub"]))


@dataclass(frozen=True)
class TxKeys:
    tx_priv: int
    tx_pub: Point

    @classmethod
    def generate(cls, rng) -> TxKeys:
        k = random_scalar(rng)
        return cls(k, scalar_mul_base(k))


@dataclass(frozen=True)
class Output:
    stealth_address: bytes
    masked_amount: bytes
    index: int

    def __post_init__(self):
        if len(self.stealth_address) != 32 or len(self.masked_amount) != 8:
            raise ValueError("output field has the wrong width")


@dataclass(frozen=True)
class Transaction:
    tx_pub: Point
    outputs: tuple[Output, ...]
    fee: int = DEFAULT_FEE

    def __post_init__(self):
        if not self.outputs:
            raise ValueError("transaction needs at least one output")

    def serialize(self) -> bytes:
        parts = [self.tx_pub.encode(), struct.pack("<H", len(self.outputs))]
        for out in self.outputs:
            parts += [out.stealth_address, out.masked_amount]
        parts.append(struct.pack("<Q", self.fee))
        return b"".join(parts)

    @classmethod
    def deserialize(cls, buf: bytes) -> Transaction:
        if len(buf) < 34:
            raise ValueError("transaction truncated")
        (n,) = struct.unpack_from("<H", buf, 32)
        if len(buf) != 34 + 40 * n + 8:
            raise ValueError(f"transaction length {len(buf)} does not match {n} outputs")
        # tx_pub is published by the sender; keep it even if it fails to decode
        tx_pub = Point(buf[:32])
        outputs = tuple(
            Output(buf[34 + 40 * i: 66 + 40 * i], buf[66 + 40 * i: 74 + 40 * i], i) for i in range(n)
        )
        (fee,) = struct.unpack_from("<Q", buf, 34 + 40 * n)
        return cls(tx_pub, outputs, fee)

    @property
    def id(self) -> bytes:
        return keccak256(self.serialize())

    @property
    def change(self) -> Output:
        return self.outputs[-1]


# --- shared secret, one-time address and amount mask

def derive_shared_secret(priv: int, pub: Point) -> Point:
    return point_mul(priv, pub)


def output_hash(shared: Point, t: int) -> bytes:
    return keccak256(shared.encode() + varint(t))


def stealth_address(shared: Point, t: int, spend_pub: Point) -> Point:
    return scalar_mul_base(hash_to_scalar(shared.encode() + varint(t))) + spend_pub


def amount_pad(shared: Point, t: int) -> bytes:
    return keccak256(AMOUNT_DOMAIN + output_hash(shared, t))[:8]


def _check_amount(a: int) -> None:
    if not 0 <= a <= MAX_AMOUNT:
        raise ValueError(f"amount out of 64-bit range: {a}")


def mask_amount(a: int, shared: Point, t: int) -> bytes:
    _check_amount(a)
    return xor_bytes(a.to_bytes(8, "little"), amount_pad(shared, t))


def unmask_amount(h: bytes, shared: Point, t: int) -> int:
    return int.from_bytes(xor_bytes(h, amount_pad(shared, t)), "little")


def payment_output(tx_priv: int, to: PublicKeys, t: int, amount: int) -> Output:
    shared = derive_shared_secret(tx_priv, to.view)
    return Output(stealth_address(shared, t, to.spend).encode(), mask_amount(amount, shared, t), t)


def random_amount(rng) -> int:
    return rng.randrange(1, 10**12)


def build_normal_tx(sender: KeyQuad, recipient_view_pub: Point, recipient_spend_pub: Point,
                    amount: int, rng, fee: int = DEFAULT_FEE) -> Transaction:
    keys = TxKeys.generate(rng)
    pay = payment_output(keys.tx_priv, PublicKeys(recipient_view_pub, recipient_spend_pub), 0, amount)
    change = payment_output(keys.tx_priv, sender.public, 1, random_amount(rng))
    return Transaction(keys.tx_pub, (pay, change), fee)


def scan_output(tx: Transaction, out: Output, view_priv: int, spend_pub: Point) -> int | None:
    """Return the unmasked amount if ``out`` belongs to the wallet, else None."""
    try:
        shared = derive_shared_secret(view_priv, tx.tx_pub)
    except InvalidPoint:
        return None
    if stealth_address(shared, out.index, spend_pub).encode() != out.stealth_address:
        return None
    return unmask_amount(out.masked_amount, shared, out.index)


def scan_tx(tx: Transaction, wallet: KeyQuad) -> list[tuple[int, int]]:
    found = []
    for out in tx.outputs:
        amount = scan_output(tx, out, wallet.view_priv, wallet.spend_pub)
        if amount is not None:
            found.append((out.index, amount))
    return found


def is_chain_valid_address(b: bytes) -> bool:
    return decode_point(b) is not None
