"""A deterministic single-producer chain with an adversarial mempool.

Loss is modelled before confirmation: a :class:`DropPolicy` decides, while a
block is being produced, which pending transactions never make it in.
Confirmed blocks are never touched again.

Chain file layout (little-endian)::

    magic       8 bytes  b"MBCTCHN1"
    n_blocks    u32
    blocks      n_blocks * (u32 length || block bytes)
    n_meta      u32 length || UTF-8 JSON   simulation annotations, not chain data

Block bytes: height u64 || prev_id 32 || n_tx u32 || n_tx * (u32 length || tx bytes).
"""
from __future__ import annotations

import json
import random
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .group import decode_point, keccak256
from .monero import PublicKeys, Transaction, TxKeys, payment_output

MAGIC = b"MBCTCHN1"
ZERO_ID = bytes(32)
DEFAULT_MIN_FEE = 1


class TxRejected(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class ChainFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def validate_tx(tx: Transaction, min_fee: int = DEFAULT_MIN_FEE) -> str | None:
    """Return None if the transaction is acceptable, else a reason code."""
    if decode_point(tx.tx_pub.encode()) is None:
        return "invalid-tx-key"
    for i, out in enumerate(tx.outputs):
        if out.index != i:
            return "index"
        if decode_point(out.stealth_address) is None:
            return "invalid-point"
    if tx.fee < min_fee:
        return "fee"
    return None


@dataclass(frozen=True)
class Block:
    height: int
    prev_id: bytes
    txs: tuple[Transaction, ...]

    def serialize(self) -> bytes:
        parts = [struct.pack("<Q", self.height), self.prev_id, struct.pack("<I", len(self.txs))]
        for tx in self.txs:
            raw = tx.serialize()
            parts += [struct.pack("<I", len(raw)), raw]
        return b"".join(parts)

    @property
    def id(self) -> bytes:
        return keccak256(self.serialize())


def _parse_block(buf: bytes, base: int) -> Block:
    if len(buf) < 44:
        raise ChainFormatError("block header truncated", base)
    height, = struct.unpack_from("<Q", buf, 0)
    prev_id = buf[8:40]
    n, = struct.unpack_from("<I", buf, 40)
    pos, txs = 44, []
    for _ in range(n):
        if pos + 4 > len(buf):
            raise ChainFormatError("transaction length truncated", base + pos)
        size, = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + size > len(buf):
            raise ChainFormatError("transaction body truncated", base + pos)
        try:
            txs.append(Transaction.deserialize(buf[pos:pos + size]))
        except ValueError as exc:
            raise ChainFormatError(f"bad transaction: {exc}", base + pos) from None
        pos += size
    if pos != len(buf):
        raise ChainFormatError("trailing bytes in block", base + pos)
    return Block(height, prev_id, tuple(txs))


@dataclass
class DropPolicy:
    """Which pending transactions an attacker keeps off the chain.

    ``mode`` is one of ``none``, ``random`` (each matching tx lost with
    probability ``rate``), ``seqs`` (first transmission of the listed
    segment numbers) or ``window`` (everything while ``start <= height <
    stop``). ``kinds`` optionally restricts ``random`` to tagged kinds and
    ``first_only`` to first transmissions (tag ``attempt == 0``).
    """
    mode: str = "none"
    rate: float = 0.0
    seqs: frozenset[int] = frozenset()
    window: tuple[int, int] = (0, 0)
    kinds: frozenset[str] | None = None
    first_only: bool = False
    seed: int = 0
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("none", "random", "seqs", "window"):
            raise ValueError(f"unknown drop mode {self.mode!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("drop rate must be in [0, 1]")
        self._rng = random.Random(self.seed)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> DropPolicy:
        """Parse ``none``, ``random:P[:kind,...[:first]]``, ``seqs:2,5``, ``window:A-B``."""
        head, _, rest = text.partition(":")
        if head == "none":
            return cls(seed=seed)
        if head == "random":
            rate, _, rest = rest.partition(":")
            kinds, _, qual = rest.partition(":")
            if qual not in ("", "first"):
                raise ValueError(f"unknown drop qualifier {qual!r}")
            return cls("random", rate=float(rate), kinds=frozenset(kinds.split(",")) if kinds else None,
                       first_only=qual == "first", seed=seed)
        if head == "seqs":
            return cls("seqs", seqs=frozenset(int(s) for s in rest.split(",") if s), seed=seed)
        if head == "window":
            a, _, b = rest.partition("-")
            return cls("window", window=(int(a), int(b)), seed=seed)
        raise ValueError(f"cannot parse drop policy {text!r}")

    def drops(self, tag: dict | None, height: int) -> bool:
        tag = tag or {}
        if self.mode == "random":
            if self.kinds is not None and tag.get("kind") not in self.kinds:
                return False
            if self.first_only and tag.get("attempt", 0) != 0:
                return False
            return self._rng.random() < self.rate
        if self.mode == "seqs":
            return tag.get("kind") == "trans" and tag.get("seq") in self.seqs and tag.get("attempt", 0) == 0
        if self.mode == "window":
            return self.window[0] <= height < self.window[1]
        return False


class ChainStore:
    """Append-only chain plus mempool. All writers go through one lock."""

    def __init__(self, min_fee: int = DEFAULT_MIN_FEE, policy: DropPolicy | None = None):
        self.min_fee = min_fee
        self.policy = policy or DropPolicy()
        self.blocks: list[Block] = []
        self.mempool: list[tuple[Transaction, dict | None]] = []
        self.tags: dict[str, dict] = {}
        self.dropped: list[tuple[str, dict | None, int]] = []
        self._index: dict[bytes, int] = {}
        self._lock = threading.RLock()

    @property
    def height(self) -> int:
        """Height the next block will get."""
        return len(self.blocks)

    def submit_tx(self, tx: Transaction, tag: dict | None = None) -> bytes:
        reason = validate_tx(tx, self.min_fee)
        if reason:
            raise TxRejected(reason, tx.id.hex())
        txid = tx.id
        with self._lock:
            if txid in self._index or any(t.id == txid for t, _ in self.mempool):
                raise TxRejected("duplicate", txid.hex())
            self.mempool.append((tx, tag))
        return txid

    def produce_block(self) -> Block:
        with self._lock:
            height = len(self.blocks)
            prev = self.blocks[-1].id if self.blocks else ZERO_ID
            kept = []
            for tx, tag in self.mempool:
                if self.policy.drops(tag, height):
                    self.dropped.append((tx.id.hex(), tag, height))
                else:
                    kept.append(tx)
                    if tag is not None:
                        self.tags[tx.id.hex()] = tag
            self.mempool = []
            block = Block(height, prev, tuple(kept))
            for tx in kept:
                self._index[tx.id] = height
            self.blocks.append(block)
            return block

    def get_blocks(self, from_height: int = 0) -> list[Block]:
        with self._lock:
            return list(self.blocks[from_height:])

    def get_tx(self, txid: bytes) -> tuple[Transaction, int] | None:
        h = self._index.get(txid)
        if h is None:
            return None
        return next(t for t in self.blocks[h].txs if t.id == txid), h

    def transactions(self):
        for block in self.blocks:
            yield from block.txs

    def grant(self, to: PublicKeys, amount: int, rng) -> Transaction:
        """Coinbase-style funding output; stands in for mining."""
        keys = TxKeys.generate(rng)
        tx = Transaction(keys.tx_pub, (payment_output(keys.tx_priv, to, 0, amount),), self.min_fee)
        self.submit_tx(tx, {"kind": "grant"})
        return tx

    def revalidate(self) -> list[tuple[int, str]]:
        problems = []
        prev = ZERO_ID
        for i, block in enumerate(self.blocks):
            if block.height != i:
                problems.append((i, "height"))
            if block.prev_id != prev:
                problems.append((i, "prev-id"))
            for tx in block.txs:
                reason = validate_tx(tx, self.min_fee)
                if reason:
                    problems.append((i, reason))
            prev = block.id
        return problems

    # --- persistence

    def to_bytes(self) -> bytes:
        with self._lock:
            parts = [MAGIC, struct.pack("<I", len(self.blocks))]
            for block in self.blocks:
                raw = block.serialize()
                parts += [struct.pack("<I", len(raw)), raw]
            meta = json.dumps({"min_fee": self.min_fee, "tags": self.tags}, sort_keys=True).encode()
            parts += [struct.pack("<I", len(meta)), meta]
            return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes, policy: DropPolicy | None = None) -> ChainStore:
        if buf[:8] != MAGIC:
            raise ChainFormatError("bad magic", 0)
        if len(buf) < 12:
            raise ChainFormatError("block count truncated", 8)
        n, = struct.unpack_from("<I", buf, 8)
        pos, blocks, prev = 12, [], ZERO_ID
        for i in range(n):
            if pos + 4 > len(buf):
                raise ChainFormatError("block length truncated", pos)
            size, = struct.unpack_from("<I", buf, pos)
            pos += 4
            if pos + size > len(buf):
                raise ChainFormatError("block body truncated", pos)
            block = _parse_block(buf[pos:pos + size], pos)
            if block.height != i or block.prev_id != prev:
                raise ChainFormatError(f"block {i} does not link to its parent", pos)
            blocks.append(block)
            prev = block.id
            pos += size
        if pos + 4 > len(buf):
            raise ChainFormatError("metadata length truncated", pos)
        size, = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + size != len(buf):
            raise ChainFormatError("metadata length mismatch", pos)
        try:
            meta = json.loads(buf[pos:].decode())
        except ValueError:
            raise ChainFormatError("metadata is not JSON", pos) from None
        store = cls(meta.get("min_fee", DEFAULT_MIN_FEE), policy)
        store.blocks = blocks
        store.tags = meta.get("tags", {})
        for block in blocks:
            for tx in block.txs:
                store._index[tx.id] = block.height
        return store

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path, policy: DropPolicy | None = None) -> ChainStore:
        return cls.from_bytes(Path(path).read_bytes(), policy)


def save_chain(chain: ChainStore, path) -> None:
    chain.save(path)


def load_chain(path, policy: DropPolicy | None = None) -> ChainStore:
    return ChainStore.load(path, policy)
