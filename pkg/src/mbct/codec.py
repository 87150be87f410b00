"""Embedding and extraction for the three covert transaction kinds.

* AuthTx  - a 64-byte signature over H(K^r) split across two stealth addresses.
* TransTx - one 32-byte encrypted segment overlaid on one stealth address,
            with a sequence-bearing amount masked under the sender signature.
* FbTx    - the responder's signature as in AuthTx, plus an optional
            missing-sequence amount.

Layout choices that both endpoints must share:

* signed amount pad = Keccak("amount" || H(S, t) || r || s)[:8]
* session key = Keccak(K_ori || K_B^v || K_B^s)
* segment cipher = AES-256-CTR, 16-byte all-zero initial counter block
* every covert output sits at index 0 (and 1 for signature carriers); the
  change output is always last.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from Crypto.Cipher import AES

from .eddsa import Signature, sign, verify
from .group import Point, decode_point, keccak256, xor_bytes, InvalidPoint
from .monero import (
    AMOUNT_DOMAIN, DEFAULT_FEE, KeyQuad, Output, PublicKeys, Transaction, TxKeys,
    derive_shared_secret, mask_amount, output_hash, payment_output, random_amount,
    stealth_address,
)

SEGMENT_SIZE = 32
MAX_SEQ = 999
CODE_LIMIT = 2 * 10**9
DEFAULT_MAX_DRAWS = 1000


class EmbeddingFailed(RuntimeError):
    """No valid carrier address was found within the retry budget."""


class AmountCode(NamedTuple):
    flag: int
    middle: int
    seq: int

    @property
    def is_final(self) -> bool:
        return self.flag == 0

    @property
    def value(self) -> int:
        return self.flag * 10**9 + self.middle * 10**3 + self.seq


def encode_amount(seq: int, is_final: bool, rng, middle: int | None = None) -> int:
    if not 0 <= seq <= MAX_SEQ:
        raise ValueError(f"sequence {seq} does not fit in three digits")
    if middle is None:
        middle = rng.randrange(10**6)
    elif not 0 <= middle < 10**6:
        raise ValueError("middle digits out of range")
    return AmountCode(0 if is_final else 1, middle, seq).value


def decode_amount(a: int) -> AmountCode | None:
    if not 0 <= a < CODE_LIMIT:
        return None
    return AmountCode(a // 10**9, a // 10**3 % 10**6, a % 10**3)


# --- signatures and signed amounts

def tx_key_message(tx_pub: Point) -> bytes:
    return keccak256(tx_pub.encode())


def sign_tx_key(tx_keys: TxKeys, signer_view_priv: int) -> Signature:
    return sign(signer_view_priv, tx_key_message(tx_keys.tx_pub))


def signed_pad(shared: Point, t: int, sig: Signature) -> bytes:
    return keccak256(AMOUNT_DOMAIN + output_hash(shared, t) + sig.r + sig.s)[:8]


def mask_amount_signed(a: int, shared: Point, t: int, sig: Signature) -> bytes:
    if not 0 <= a < 2**64:
        raise ValueError(f"amount out of 64-bit range: {a}")
    return xor_bytes(a.to_bytes(8, "little"), signed_pad(shared, t, sig))


def unmask_amount_signed(h: bytes, shared: Point, t: int, sig: Signature) -> int:
    return int.from_bytes(xor_bytes(h, signed_pad(shared, t, sig)), "little")


# --- session keys and the segment cipher

def derive_session_key(k_ori: Point, view_pub: Point, spend_pub: Point) -> bytes:
    return keccak256(k_ori.encode() + view_pub.encode() + spend_pub.encode())


def _ctr(key: bytes):
    return AES.new(key, AES.MODE_CTR, nonce=b"", initial_value=0)


def encrypt_segment(segment: bytes, key: bytes) -> bytes:
    if len(segment) != SEGMENT_SIZE:
        raise ValueError("segments are exactly 32 bytes")
    return _ctr(key).encrypt(segment)


def decrypt_segment(ciphertext: bytes, key: bytes) -> bytes:
    if len(ciphertext) != SEGMENT_SIZE:
        raise ValueError("segments are exactly 32 bytes")
    return _ctr(key).decrypt(ciphertext)


# --- signature carriers (AuthTx and FbTx)

@dataclass(frozen=True)
class SignatureField:
    """Two overlaid addresses carrying (r, s); shared by AuthTx and FbTx."""
    addresses: tuple[bytes, bytes]
    tx_keys: TxKeys
    signature: Signature
    draws: int = 1


@dataclass(frozen=True)
class SpecialFieldAuth(SignatureField):
    pass


@dataclass(frozen=True)
class SpecialFieldFb(SignatureField):
    masked_amount: bytes | None = None


def signature_addresses(tx_keys: TxKeys, sig: Signature, to: PublicKeys) -> tuple[bytes, bytes]:
    shared = derive_shared_secret(tx_keys.tx_priv, to.view)
    k0 = stealth_address(shared, 0, to.spend).encode()
    k1 = stealth_address(shared, 1, to.spend).encode()
    return xor_bytes(sig.r, k0), xor_bytes(sig.s, k1)


def _draw_signature_field(rng, signer_view_priv: int, to: PublicKeys, max_draws: int):
    for draw in range(1, max_draws + 1):
        keys = TxKeys.generate(rng)
        sig = sign_tx_key(keys, signer_view_priv)
        addrs = signature_addresses(keys, sig, to)
        if all(decode_point(a) is not None for a in addrs):
            return keys, sig, addrs, draw
    raise EmbeddingFailed(f"no valid signature carrier after {max_draws} draws")


def gen_auth_field(rng, sender_view_priv: int, recipient: PublicKeys,
                   max_draws: int = DEFAULT_MAX_DRAWS) -> SpecialFieldAuth:
    keys, sig, addrs, draws = _draw_signature_field(rng, sender_view_priv, recipient, max_draws)
    return SpecialFieldAuth(addrs, keys, sig, draws)


def _signature_tx(field: SignatureField, to: PublicKeys, owner: KeyQuad, amount0: bytes,
                  rng, fee: int) -> Transaction:
    priv = field.tx_keys.tx_priv
    # the carriers keep ordinary-looking masked amounts
    decoy = lambda t: payment_output(priv, to, t, random_amount(rng)).masked_amount
    outputs = (
        Output(field.addresses[0], amount0 if amount0 is not None else decoy(0), 0),
        Output(field.addresses[1], decoy(1), 1),
        payment_output(priv, owner.public, 2, random_amount(rng)),
    )
    return Transaction(field.tx_keys.tx_pub, outputs, fee)


def build_auth_tx(sender: KeyQuad, recipient: PublicKeys, rng, fee: int = DEFAULT_FEE,
                  max_draws: int = DEFAULT_MAX_DRAWS) -> tuple[Transaction, SpecialFieldAuth]:
    field = gen_auth_field(rng, sender.view_priv, recipient, max_draws)
    return _signature_tx(field, recipient, sender, None, rng, fee), field


class Authenticated(NamedTuple):
    sender: Point
    signature: Signature


def recover_signature(tx: Transaction, recipient: KeyQuad) -> Signature | None:
    """XOR the expected addresses out of outputs 0 and 1."""
    if len(tx.outputs) < 3:
        return None
    try:
        shared = derive_shared_secret(recipient.view_priv, tx.tx_pub)
    except InvalidPoint:
        return None
    k0 = stealth_address(shared, 0, recipient.spend_pub).encode()
    k1 = stealth_address(shared, 1, recipient.spend_pub).encode()
    return Signature(xor_bytes(tx.outputs[0].stealth_address, k0),
                     xor_bytes(tx.outputs[1].stealth_address, k1))


def extract_auth(tx: Transaction, recipient: KeyQuad,
                 candidate_senders: Sequence[Point]) -> Authenticated | None:
    sig = recover_signature(tx, recipient)
    if sig is None:
        return None
    msg = tx_key_message(tx.tx_pub)
    for view_pub in candidate_senders:
        if verify(view_pub, msg, sig):
            return Authenticated(view_pub, sig)
    return None


# --- message segments (TransTx)

@dataclass(frozen=True)
class SpecialFieldTrans:
    address: bytes
    masked_amount: bytes
    tx_keys: TxKeys
    session_key: bytes
    amount: int
    draws: int = 1


class Segment(NamedTuple):
    data: bytes
    seq: int
    is_final: bool


def trans_field_for_key(tx_keys: TxKeys, segment: bytes, amount: int, recipient: PublicKeys,
                        sig: Signature, t: int = 0) -> SpecialFieldTrans:
    shared = derive_shared_secret(tx_keys.tx_priv, recipient.view)
    k_ori = stealth_address(shared, t, recipient.spend)
    key = derive_session_key(k_ori, recipient.view, recipient.spend)
    address = xor_bytes(k_ori.encode(), encrypt_segment(segment, key))
    return SpecialFieldTrans(address, mask_amount_signed(amount, shared, t, sig), tx_keys, key, amount)


def gen_trans_field(segment: bytes, seq: int, is_final: bool, recipient: PublicKeys,
                    sig: Signature, rng, max_draws: int = DEFAULT_MAX_DRAWS) -> SpecialFieldTrans:
    if len(segment) != SEGMENT_SIZE:
        raise ValueError("segments are exactly 32 bytes")
    amount = encode_amount(seq, is_final, rng)
    for draw in range(1, max_draws + 1):
        field = trans_field_for_key(TxKeys.generate(rng), segment, amount, recipient, sig)
        if decode_point(field.address) is not None:
            return SpecialFieldTrans(field.address, field.masked_amount, field.tx_keys,
                                     field.session_key, amount, draw)
    raise EmbeddingFailed(f"no valid segment carrier after {max_draws} draws")


def build_trans_tx(sender: KeyQuad, recipient: PublicKeys, segment: bytes, seq: int, is_final: bool,
                   sig: Signature, rng, fee: int = DEFAULT_FEE,
                   max_draws: int = DEFAULT_MAX_DRAWS) -> tuple[Transaction, SpecialFieldTrans]:
    field = gen_trans_field(segment, seq, is_final, recipient, sig, rng, max_draws)
    change = payment_output(field.tx_keys.tx_priv, sender.public, 1, random_amount(rng))
    tx = Transaction(field.tx_keys.tx_pub, (Output(field.address, field.masked_amount, 0), change), fee)
    return tx, field


def extract_segment(tx: Transaction, recipient: KeyQuad, sig: Signature) -> Segment | None:
    out = tx.outputs[0]
    try:
        shared = derive_shared_secret(recipient.view_priv, tx.tx_pub)
    except InvalidPoint:
        return None
    k_ori = stealth_address(shared, 0, recipient.spend_pub)
    if out.stealth_address == k_ori.encode():
        return None  # an ordinary payment to us
    code = decode_amount(unmask_amount_signed(out.masked_amount, shared, 0, sig))
    if code is None:
        return None
    key = derive_session_key(k_ori, recipient.view_pub, recipient.spend_pub)
    data = decrypt_segment(xor_bytes(out.stealth_address, k_ori.encode()), key)
    return Segment(data, code.seq, code.is_final)


# --- feedback (FbTx)

def gen_fb_field(rng, responder_view_priv: int, originator: PublicKeys, mms: int,
                 max_draws: int = DEFAULT_MAX_DRAWS) -> SpecialFieldFb:
    if not 0 <= mms <= MAX_SEQ:
        raise ValueError(f"missing sequence {mms} out of range")
    keys, sig, addrs, draws = _draw_signature_field(rng, responder_view_priv, originator, max_draws)
    masked = None
    if mms != 0:
        shared = derive_shared_secret(keys.tx_priv, originator.view)
        masked = mask_amount_signed(encode_amount(mms, True, rng), shared, 0, sig)
    return SpecialFieldFb(addrs, keys, sig, draws, masked)


def build_fb_tx(responder: KeyQuad, originator: PublicKeys, mms: int, rng, fee: int = DEFAULT_FEE,
                max_draws: int = DEFAULT_MAX_DRAWS) -> tuple[Transaction, SpecialFieldFb]:
    field = gen_fb_field(rng, responder.view_priv, originator, mms, max_draws)
    return _signature_tx(field, originator, responder, field.masked_amount, rng, fee), field


class Feedback(NamedTuple):
    missing: int
    signature: Signature

    @property
    def ack(self) -> bool:
        return self.missing == 0


def parse_feedback(tx: Transaction, originator: KeyQuad, responder_view_pub: Point) -> Feedback | None:
    auth = extract_auth(tx, originator, [responder_view_pub])
    if auth is None:
        return None
    shared = derive_shared_secret(originator.view_priv, tx.tx_pub)
    code = decode_amount(unmask_amount_signed(tx.outputs[0].masked_amount, shared, 0, auth.signature))
    return Feedback(code.seq if code is not None else 0, auth.signature)


def segment_bits(tx: Transaction) -> int:
    """Covert payload capacity of a TransTx: one overlaid address."""
    return 8 * len(tx.outputs[0].stealth_address)
