"""Sender and receiver state machines driven block by block.

Neither machine does any I/O. ``start``/``on_block`` return the transactions
the caller must broadcast, wrapped in :class:`Outgoing` so a simulator can
attach attack metadata without looking inside the transaction.

Message framing: ``len(m)`` as a 2-byte big-endian prefix, then ``m``, then
random padding up to a multiple of 32 bytes. Sequence numbers start at 1.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .codec import (
    MAX_SEQ, SEGMENT_SIZE, build_auth_tx, build_fb_tx, build_trans_tx, extract_auth,
    extract_segment, parse_feedback,
)
from .eddsa import Signature
from .group import Point
from .monero import DEFAULT_FEE, KeyQuad, PublicKeys, Transaction

HEADER = 2
MAX_MESSAGE = MAX_SEQ * SEGMENT_SIZE - HEADER


class MessageTooLarge(ValueError):
    pass


class SessionAborted(RuntimeError):
    pass


def segment_message(m: bytes, rng) -> list[bytes]:
    if len(m) > MAX_MESSAGE:
        raise MessageTooLarge(
            f"message of {len(m)} bytes exceeds {MAX_MESSAGE}; split it across sessions")
    frame = len(m).to_bytes(HEADER, "big") + m
    frame += rng.randbytes(-len(frame) % SEGMENT_SIZE)
    return [frame[i:i + SEGMENT_SIZE] for i in range(0, len(frame), SEGMENT_SIZE)]


def reassemble(segments: list[bytes]) -> bytes:
    frame = b"".join(segments)
    n = int.from_bytes(frame[:HEADER], "big")
    if n > len(frame) - HEADER:
        raise ValueError("frame length prefix exceeds the received data")
    return frame[HEADER:HEADER + n]


class Outgoing(NamedTuple):
    tx: Transaction
    kind: str            # auth | trans | fb
    seq: int = 0
    attempt: int = 0

    @property
    def tag(self) -> dict:
        return {"kind": self.kind, "seq": self.seq, "attempt": self.attempt}


class SenderState(str, enum.Enum):
    IDLE = "Idle"
    AUTH_SENT = "AuthSent"
    TRANSMITTING = "Transmitting"
    AWAIT_FEEDBACK = "AwaitFeedback"
    RESENDING = "Resending"
    DONE = "Done"
    TIMED_OUT = "TimedOut"
    ABORTED = "Aborted"


class ReceiverState(str, enum.Enum):
    LISTENING = "Listening"
    RECEIVING = "Receiving"
    COMPLETE = "Complete"


def _record(transcript, role, stage, height, action, tx=None, seq=None, **extra):
    rec = {"role": role, "stage": stage, "height": height, "action": action,
           "tx": tx.id.hex() if tx is not None else None, "seq": seq}
    rec.update(extra)
    transcript.append(rec)


@dataclass
class SenderSession:
    wallet: KeyQuad
    recipient: PublicKeys
    message: bytes
    rng: object
    feedback_timeout_blocks: int = 10
    max_draws: int = 1000
    fee: int = DEFAULT_FEE
    state: SenderState = SenderState.IDLE
    segments: list[bytes] = field(default_factory=list)
    signature: Signature | None = None
    sent: dict[int, list[str]] = field(default_factory=dict)
    auth_tx: str | None = None
    blocks_waited: int = 0
    last_height: int = -1
    feedback_rounds: int = 0
    seen: set[str] = field(default_factory=set)
    diagnostic: str | None = None
    transcript: list[dict] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.state in (SenderState.DONE, SenderState.TIMED_OUT, SenderState.ABORTED)

    def _trans(self, seq: int, attempt: int, height: int) -> Outgoing:
        is_final = seq == len(self.segments)
        tx, _ = build_trans_tx(self.wallet, self.recipient, self.segments[seq - 1], seq, is_final,
                               self.signature, self.rng, self.fee, self.max_draws)
        self.sent.setdefault(seq, []).append(tx.id.hex())
        _record(self.transcript, "sender", "transmission", height,
                "resend" if attempt else "send", tx, seq, final=is_final)
        return Outgoing(tx, "trans", seq, attempt)

    def start(self, height: int = 0) -> list[Outgoing]:
        if self.state is not SenderState.IDLE:
            raise RuntimeError("session already started")
        self.segments = segment_message(self.message, self.rng)
        tx, auth = build_auth_tx(self.wallet, self.recipient, self.rng, self.fee, self.max_draws)
        self.signature = auth.signature
        self.auth_tx = tx.id.hex()
        self.state = SenderState.AUTH_SENT
        _record(self.transcript, "sender", "authentication", height, "send", tx, draws=auth.draws)
        out = [Outgoing(tx, "auth")]
        self.state = SenderState.TRANSMITTING
        out += [self._trans(seq, 0, height) for seq in range(1, len(self.segments) + 1)]
        self.state = SenderState.AWAIT_FEEDBACK
        self.blocks_waited = 0
        self.last_height = height
        return out

    def abort(self, reason: str) -> None:
        self.state = SenderState.ABORTED
        self.diagnostic = reason
        _record(self.transcript, "sender", "transmission", self.last_height, "abort", reason=reason)

    def on_block(self, block) -> list[Outgoing]:
        if self.finished or self.state is SenderState.IDLE or block.height <= self.last_height:
            return []
        self.last_height = block.height
        out: list[Outgoing] = []
        got_feedback = False
        for tx in block.txs:
            txid = tx.id.hex()
            if txid in self.seen:
                continue
            fb = parse_feedback(tx, self.wallet, self.recipient.view)
            if fb is None:
                continue
            self.seen.add(txid)
            got_feedback = True
            self.feedback_rounds += 1
            if fb.ack:
                _record(self.transcript, "sender", "feedback", block.height, "ack", tx)
                self.state = SenderState.DONE
                return out
            _record(self.transcript, "sender", "feedback", block.height, "nack", tx, fb.missing)
            if not 1 <= fb.missing <= len(self.segments):
                continue
            self.state = SenderState.RESENDING
            out.append(self._trans(fb.missing, len(self.sent.get(fb.missing, ())), block.height))
            self.state = SenderState.AWAIT_FEEDBACK
        if got_feedback:
            self.blocks_waited = 0
            return out
        self.blocks_waited += 1
        if self.blocks_waited >= self.feedback_timeout_blocks:
            self.state = SenderState.TIMED_OUT
            self.diagnostic = (f"no feedback within {self.feedback_timeout_blocks} blocks "
                               f"after height {block.height - self.blocks_waited}; check node status")
            _record(self.transcript, "sender", "feedback", block.height, "timeout",
                    reason=self.diagnostic)
        return out

    def to_json(self) -> dict:
        return {
            "recipient": self.recipient.hex(),
            "message": self.message.hex(),
            "feedback_timeout_blocks": self.feedback_timeout_blocks,
            "max_draws": self.max_draws,
            "fee": self.fee,
            "state": self.state.value,
            "segments": [s.hex() for s in self.segments],
            "signature": self.signature.hex() if self.signature else None,
            "sent": {str(k): v for k, v in self.sent.items()},
            "auth_tx": self.auth_tx,
            "blocks_waited": self.blocks_waited,
            "last_height": self.last_height,
            "feedback_rounds": self.feedback_rounds,
            "seen": sorted(self.seen),
            "diagnostic": self.diagnostic,
        }

    @classmethod
    def from_json(cls, doc: dict, wallet: KeyQuad, rng) -> SenderSession:
        rec = doc["recipient"]
        return cls(
            wallet=wallet,
            recipient=PublicKeys(Point.fromhex(rec["view_pub"]), Point.fromhex(rec["spend_pub"])),
            message=bytes.fromhex(doc["message"]),
            rng=rng,
            feedback_timeout_blocks=doc["feedback_timeout_blocks"],
            max_draws=doc["max_draws"],
            fee=doc["fee"],
            state=SenderState(doc["state"]),
            segments=[bytes.fromhex(s) for s in doc["segments"]],
            signature=Signature.from_bytes(bytes.fromhex(doc["signature"])) if doc["signature"] else None,
            sent={int(k): v for k, v in doc["sent"].items()},
            auth_tx=doc["auth_tx"],
            blocks_waited=doc["blocks_waited"],
            last_height=doc["last_height"],
            feedback_rounds=doc["feedback_rounds"],
            seen=set(doc["seen"]),
            diagnostic=doc["diagnostic"],
        )


@dataclass
class ReceiverSession:
    """Listens for one covert session at a time from any candidate sender.

    Feedback is sent as soon as the final flag fixes the segment count, and
    again every time a resent segment arrives. If the final segment itself
    is lost, or a resend goes missing, the receiver re-issues a Nack after
    ``feedback_retry_blocks`` quiet blocks. That must stay below the sender's
    timeout.
    """
    wallet: KeyQuad
    senders: list[PublicKeys]
    rng: object
    feedback_retry_blocks: int = 3
    max_draws: int = 1000
    fee: int = DEFAULT_FEE
    buffer_size: int = 4096
    state: ReceiverState = ReceiverState.LISTENING
    sender: PublicKeys | None = None
    signature: Signature | None = None
    received: dict[int, bytes] = field(default_factory=dict)
    final_seq: int | None = None
    recovering: bool = False
    idle_blocks: int = 0
    last_height: int = -1
    feedback_sent: int = 0
    seen: set[str] = field(default_factory=set)
    pending: deque = field(default_factory=deque)
    completed: list[tuple[PublicKeys, bytes]] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)

    @property
    def message(self) -> bytes | None:
        if self.state is not ReceiverState.COMPLETE:
            return None
        return reassemble([self.received[s] for s in range(1, self.final_seq + 1)])

    def _missing(self) -> int:
        top = self.final_seq if self.final_seq is not None else max(self.received, default=0) + 1
        for seq in range(1, top + 1):
            if seq not in self.received:
                return seq
        return 0

    def _bootstrap(self, sender: PublicKeys, sig: Signature, tx, height: int) -> None:
        if self.state is ReceiverState.RECEIVING:
            _record(self.transcript, "receiver", "authentication", height, "supersede", tx)
        self.sender, self.signature = sender, sig
        self.received, self.final_seq = {}, None
        self.recovering, self.idle_blocks = False, 0
        self.state = ReceiverState.RECEIVING
        _record(self.transcript, "receiver", "authentication", height, "authenticated", tx,
                sender=sender.view.hex())

    def _take_segment(self, tx, height: int) -> bool:
        seg = extract_segment(tx, self.wallet, self.signature)
        if seg is None or not 1 <= seg.seq <= MAX_SEQ:
            return False
        if self.final_seq is not None and seg.seq > self.final_seq:
            return False
        if seg.seq in self.received:
            _record(self.transcript, "receiver", "transmission", height, "duplicate", tx, seg.seq)
            return False
        self.received[seg.seq] = seg.data
        if seg.is_final:
            self.final_seq = seg.seq
            for extra in [s for s in self.received if s > seg.seq]:
                del self.received[extra]
        _record(self.transcript, "receiver", "transmission", height, "segment", tx, seg.seq,
                final=seg.is_final)
        return True

    def _scan(self, tx, height: int) -> bool:
        by_view = {s.view: s for s in self.senders}
        auth = extract_auth(tx, self.wallet, list(by_view))
        if auth is not None:
            self._bootstrap(by_view[auth.sender], auth.signature, tx, height)
            buffered = list(self.pending)
            self.pending.clear()
            got = False
            for old in buffered:
                got |= self._take_segment(old, height)
            return got
        if self.state is not ReceiverState.RECEIVING:
            if len(self.pending) >= self.buffer_size:
                self.pending.popleft()
            self.pending.append(tx)
            return False
        return self._take_segment(tx, height)

    def _feedback(self, height: int) -> Outgoing:
        mms = self._missing()
        tx, _ = build_fb_tx(self.wallet, self.sender, mms, self.rng, self.fee, self.max_draws)
        self.feedback_sent += 1
        self.idle_blocks = 0
        if mms == 0:
            self.state = ReceiverState.COMPLETE
            self.completed.append((self.sender, self.message))
            _record(self.transcript, "receiver", "feedback", height, "ack", tx)
        else:
            self.recovering = True
            _record(self.transcript, "receiver", "feedback", height, "nack", tx, mms)
        return Outgoing(tx, "fb", mms, self.feedback_sent)

    def on_block(self, block) -> list[Outgoing]:
        if block.height <= self.last_height:
            return []
        self.last_height = block.height
        got = False
        for tx in block.txs:
            txid = tx.id.hex()
            if txid in self.seen:
                continue
            self.seen.add(txid)
            got |= self._scan(tx, block.height)
        if self.state is not ReceiverState.RECEIVING:
            return []
        if got and (self.final_seq is not None or self.recovering):
            return [self._feedback(block.height)]
        if got:
            self.idle_blocks = 0
            return []
        self.idle_blocks += 1
        if self.idle_blocks >= self.feedback_retry_blocks:
            return [self._feedback(block.height)]
        return []

    def to_json(self) -> dict:
        return {
            "senders": [s.hex() for s in self.senders],
            "feedback_retry_blocks": self.feedback_retry_blocks,
            "max_draws": self.max_draws,
            "fee": self.fee,
            "state": self.state.value,
            "sender": self.sender.hex() if self.sender else None,
            "signature": self.signature.hex() if self.signature else None,
            "received": {str(k): v.hex() for k, v in self.received.items()},
            "final_seq": self.final_seq,
            "recovering": self.recovering,
            "idle_blocks": self.idle_blocks,
            "last_height": self.last_height,
            "feedback_sent": self.feedback_sent,
            "seen": sorted(self.seen),
            "pending": [tx.serialize().hex() for tx in self.pending],
            "completed": [[s.hex(), m.hex()] for s, m in self.completed],
        }

    @classmethod
    def from_json(cls, doc: dict, wallet: KeyQuad, rng) -> ReceiverSession:
        pub = lambda d: PublicKeys(Point.fromhex(d["view_pub"]), Point.fromhex(d["spend_pub"]))
        return cls(
            wallet=wallet,
            senders=[pub(s) for s in doc["senders"]],
            rng=rng,
            feedback_retry_blocks=doc["feedback_retry_blocks"],
            max_draws=doc["max_draws"],
            fee=doc["fee"],
            state=ReceiverState(doc["state"]),
            sender=pub(doc["sender"]) if doc["sender"] else None,
            signature=Signature.from_bytes(bytes.fromhex(doc["signature"])) if doc["signature"] else None,
            received={int(k): bytes.fromhex(v) for k, v in doc["received"].items()},
            final_seq=doc["final_seq"],
            recovering=doc["recovering"],
            idle_blocks=doc["idle_blocks"],
            last_height=doc["last_height"],
            feedback_sent=doc["feedback_sent"],
            seen=set(doc["seen"]),
            pending=deque(Transaction.deserialize(bytes.fromhex(t)) for t in doc["pending"]),
            completed=[(pub(s), bytes.fromhex(m)) for s, m in doc["completed"]],
        )


def transcript_lines(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
