import random
from math import sqrt

import pytest

from mbct.group import P, scalar_mul_base
from mbct.ledger import ChainFormatError, ChainStore, DropPolicy, TxRejected, load_chain, save_chain, validate_tx
from mbct.monero import Output, Transaction, build_normal_tx, scan_tx

IDENTITY_ENC = (1).to_bytes(32, "little")
NON_CANONICAL = P.to_bytes(32, "little")


def normal(wallets, rng, fee=30_000_000):
    alice, bob = wallets["alice"], wallets["bob"]
    return build_normal_tx(alice, bob.view_pub, bob.spend_pub, rng.randrange(10**9), rng, fee)


def with_output(tx, i, addr):
    outs = list(tx.outputs)
    outs[i] = Output(addr, outs[i].masked_amount, i)
    return Transaction(tx.tx_pub, tuple(outs), tx.fee)


def test_validation_accepts_normal(wallets, rng):
    assert validate_tx(normal(wallets, rng)) is None


@pytest.mark.parametrize("bad", [IDENTITY_ENC, NON_CANONICAL, bytes(32)])
def test_validation_rejects_unusable_points(wallets, rng, bad):
    assert validate_tx(with_output(normal(wallets, rng), 0, bad)) == "invalid-point"


def test_validation_fee_and_index(wallets, rng):
    tx = normal(wallets, rng, fee=0)
    assert validate_tx(tx, min_fee=1) == "fee"
    tx = normal(wallets, rng)
    shuffled = Transaction(tx.tx_pub, tuple(reversed(tx.outputs)), tx.fee)
    assert validate_tx(shuffled) == "index"


def test_submit_rejects_and_dedupes(wallets, rng):
    chain = ChainStore()
    with pytest.raises(TxRejected) as err:
        chain.submit_tx(with_output(normal(wallets, rng), 1, IDENTITY_ENC))
    assert err.value.reason == "invalid-point"
    tx = normal(wallets, rng)
    chain.submit_tx(tx)
    with pytest.raises(TxRejected):
        chain.submit_tx(tx)
    chain.produce_block()
    with pytest.raises(TxRejected):
        chain.submit_tx(tx)


def test_block_order_and_lookup(wallets, rng):
    chain = ChainStore()
    txs = [normal(wallets, rng) for _ in range(5)]
    for tx in txs:
        chain.submit_tx(tx)
    block = chain.produce_block()
    assert [t.id for t in block.txs] == [t.id for t in txs]
    assert chain.get_tx(txs[3].id) == (txs[3], 0)
    assert chain.get_tx(bytes(32)) is None
    assert chain.produce_block().prev_id == block.id
    assert len(chain.get_blocks(1)) == 1


def test_drop_everything(wallets, rng):
    chain = ChainStore(policy=DropPolicy("random", rate=1.0))
    for _ in range(4):
        chain.submit_tx(normal(wallets, rng))
    assert chain.produce_block().txs == ()
    assert len(chain.dropped) == 4


def test_drop_rate_binomial():
    n, p = 1000, 0.2
    policy = DropPolicy("random", rate=p, seed=42)
    dropped = sum(policy.drops({"kind": "trans"}, 0) for _ in range(n))
    half = 2.576 * sqrt(n * p * (1 - p))
    assert abs(dropped - n * p) <= half


def test_drop_policy_parsing():
    assert DropPolicy.parse("none").mode == "none"
    pol = DropPolicy.parse("random:0.2:trans,fb")
    assert pol.rate == 0.2 and pol.kinds == {"trans", "fb"}
    assert not pol.drops({"kind": "auth"}, 0)
    first = DropPolicy.parse("random:1.0:trans:first")
    assert first.first_only and first.drops({"kind": "trans", "attempt": 0}, 0)
    assert not first.drops({"kind": "trans", "attempt": 1}, 0)
    seqs = DropPolicy.parse("seqs:2,5")
    assert seqs.drops({"kind": "trans", "seq": 2, "attempt": 0}, 0)
    assert not seqs.drops({"kind": "trans", "seq": 2, "attempt": 1}, 0)
    assert not seqs.drops({"kind": "trans", "seq": 3, "attempt": 0}, 0)
    win = DropPolicy.parse("window:3-5")
    assert [win.drops(None, h) for h in range(7)] == [False] * 3 + [True] * 2 + [False] * 2
    for bad in ("random:1.5", "burst:3", "random:x", "random:0.1:trans:later"):
        with pytest.raises(ValueError):
            DropPolicy.parse(bad)


def build_chain(wallets, blocks=100, seed=0):
    rng = random.Random(seed)
    chain = ChainStore()
    for h in range(blocks):
        for _ in range(h % 3):
            chain.submit_tx(normal(wallets, rng), {"kind": "normal"})
        chain.produce_block()
    return chain


@pytest.fixture(scope="module")
def hundred(wallets):
    return build_chain(wallets)


def test_save_load_roundtrip(hundred, tmp_path):
    path = tmp_path / "chain.bin"
    save_chain(hundred, path)
    loaded = load_chain(path)
    assert loaded.height == 100
    assert [b.id for b in loaded.blocks] == [b.id for b in hundred.blocks]
    assert loaded.tags == hundred.tags
    assert loaded.to_bytes() == hundred.to_bytes()
    assert loaded.revalidate() == []
    some = hundred.blocks[50].txs[0]
    assert loaded.get_tx(some.id) == (some, 50)


def test_truncated_file_reports_offset(hundred):
    raw = hundred.to_bytes()
    cut = len(raw) // 2
    with pytest.raises(ChainFormatError) as err:
        ChainStore.from_bytes(raw[:cut])
    assert 0 < err.value.offset <= cut
    with pytest.raises(ChainFormatError) as err:
        ChainStore.from_bytes(b"NOTCHAIN" + raw[8:])
    assert err.value.offset == 0


def test_broken_link_detected(hundred):
    chain = ChainStore.from_bytes(hundred.to_bytes())
    chain.blocks[10], chain.blocks[11] = chain.blocks[11], chain.blocks[10]
    assert chain.revalidate()
    with pytest.raises(ChainFormatError):
        ChainStore.from_bytes(chain.to_bytes())


def test_chain_deterministic(wallets):
    assert build_chain(wallets, 10, seed=4).to_bytes() == build_chain(wallets, 10, seed=4).to_bytes()


def test_grant_is_scannable(wallets, rng):
    chain = ChainStore()
    tx = chain.grant(wallets["carol"].public, 777, rng)
    chain.produce_block()
    assert scan_tx(tx, wallets["carol"]) == [(0, 777)]
    assert chain.tags[tx.id.hex()] == {"kind": "grant"}
