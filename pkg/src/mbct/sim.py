"""Run a sender and a receiver against one ChainStore, block by block."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .ledger import ChainStore, DropPolicy, TxRejected
from .monero import KeyQuad
from .session import Outgoing, ReceiverSession, SenderSession, SenderState


@dataclass
class ExchangeResult:
    sender: SenderSession
    receiver: ReceiverSession
    chain: ChainStore
    blocks: int

    @property
    def delivered(self) -> bytes | None:
        return self.receiver.completed[-1][1] if self.receiver.completed else None

    @property
    def intact(self) -> bool:
        return self.sender.state is SenderState.DONE and self.delivered == self.sender.message

    @property
    def drops(self) -> int:
        return len(self.chain.dropped)

    @property
    def transcript(self) -> list[dict]:
        return sorted(self.sender.transcript + self.receiver.transcript,
                      key=lambda r: (r["height"], r["role"] != "sender"))


def submit_all(chain: ChainStore, outgoing: list[Outgoing]) -> None:
    for o in outgoing:
        chain.submit_tx(o.tx, o.tag)


def run_exchange(chain: ChainStore, sender: SenderSession, receiver: ReceiverSession,
                 max_blocks: int = 10_000, disable_drops_after_rounds: int | None = None) -> ExchangeResult:
    blocks = 0
    try:
        submit_all(chain, sender.start(chain.height))
    except TxRejected as exc:
        sender.abort(f"ledger rejected transaction: {exc}")
        return ExchangeResult(sender, receiver, chain, blocks)
    while not sender.finished and blocks < max_blocks:
        block = chain.produce_block()
        blocks += 1
        try:
            submit_all(chain, receiver.on_block(block))
            submit_all(chain, sender.on_block(block))
        except TxRejected as exc:
            sender.abort(f"ledger rejected transaction: {exc}")
            break
        if disable_drops_after_rounds is not None and receiver.feedback_sent >= disable_drops_after_rounds:
            chain.policy = DropPolicy()
    return ExchangeResult(sender, receiver, chain, blocks)


def simulate(message: bytes, policy: DropPolicy, seed: int = 0, *, timeout_blocks: int = 10,
             retry_blocks: int = 3, disable_drops_after_rounds: int | None = None,
             sender_wallet: KeyQuad | None = None, receiver_wallet: KeyQuad | None = None,
             max_blocks: int = 10_000) -> ExchangeResult:
    rng = random.Random(seed)
    alice = sender_wallet or KeyQuad.generate(rng)
    bob = receiver_wallet or KeyQuad.generate(rng)
    chain = ChainStore(policy=policy)
    chain.grant(alice.public, 10**12, rng)
    chain.produce_block()
    sender = SenderSession(alice, bob.public, message, random.Random(rng.getrandbits(64)),
                           feedback_timeout_blocks=timeout_blocks)
    receiver = ReceiverSession(bob, [alice.public], random.Random(rng.getrandbits(64)),
                               feedback_retry_blocks=retry_blocks)
    # history up to now is already known to both parties
    sender.last_height = receiver.last_height = chain.height - 1
    return run_exchange(chain, sender, receiver, max_blocks, disable_drops_after_rounds)
