"""Command-line entry point: ``mbct keygen|send|receive|analyze|simulate|chain``.

``send`` and ``receive`` are single steps against a shared chain file: each
call catches up on unprocessed blocks, broadcasts whatever the session
wants to send, and mines one block. Alternate them to run a session across
processes, or use ``simulate`` to run both parties in one process.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import replace
from pathlib import Path

from .config import AnalysisConfig, RunConfig
from .ledger import ChainFormatError, ChainStore, DropPolicy, TxRejected
from .monero import KeyQuad, load_public, load_wallet, save_wallet
from .session import MessageTooLarge, ReceiverSession, ReceiverState, SenderSession, transcript_lines
from .sim import simulate
from .stego import run_experiment

SCENARIOS = {
    "none": ("none", None),
    "drop-seq-2": ("seqs:2", None),
    "random-20": ("random:0.2:trans:first", 10),
    "drop-all-forever": ("random:1.0", None),
}

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_NO_SESSION = 0, 2, 1, 3


def _rng(seed, *salt) -> random.Random:
    if seed is None:
        return random.SystemRandom()
    return random.Random(":".join(str(s) for s in (seed, *salt)))


def _positive(text: str) -> int:
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {n}")
    return n


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in ("chain", "drop_policy", "timeout_blocks", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return replace(cfg, **overrides)


def _emit(records: list[dict], out=None) -> None:
    text = transcript_lines(records)
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def cmd_keygen(args) -> int:
    out = Path(args.out)
    pub = out.with_suffix(".pub")
    if not args.force and (out.exists() or pub.exists()):
        print(f"error: {out} exists (use --force)", file=sys.stderr)
        return EXIT_FAILED
    quad = KeyQuad.generate(_rng(args.seed, "keygen"))
    save_wallet(quad, out)
    pub.write_text(json.dumps(quad.public.hex(), indent=2) + "\n")
    print(json.dumps(quad.public.hex()))
    return EXIT_OK


def _open_chain(cfg: RunConfig, policy: DropPolicy) -> ChainStore:
    path = Path(cfg.chain)
    if path.exists():
        return ChainStore.load(path, policy)
    return ChainStore(policy=policy)


def _catch_up(chain: ChainStore, session, start: int):
    out = []
    for block in chain.get_blocks(start):
        out += session.on_block(block)
    return out


def cmd_send(args) -> int:
    cfg = _config(args)
    wallet = load_wallet(args.wallet)
    recipient = load_public(args.to)
    chain = _open_chain(cfg, DropPolicy.parse(cfg.drop_policy, cfg.seed))
    state_path = Path(args.session)
    rng = _rng(cfg.seed, "send", chain.height)
    if state_path.exists():
        session = SenderSession.from_json(json.loads(state_path.read_text()), wallet, rng)
        before = len(session.transcript)
        outgoing = _catch_up(chain, session, session.last_height + 1)
    else:
        message = Path(args.message).read_bytes()
        if not chain.blocks:
            chain.grant(wallet.public, 10**12, rng)
            chain.produce_block()
        session = SenderSession(wallet, recipient, message, rng,
                                feedback_timeout_blocks=cfg.timeout_blocks, max_draws=cfg.max_draws)
        session.last_height = chain.height - 1
        before = 0
        try:
            outgoing = session.start(chain.height)
        except MessageTooLarge as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        for o in outgoing:
            chain.submit_tx(o.tx, o.tag)
    except TxRejected as exc:
        session.abort(f"ledger rejected transaction: {exc}")
    chain.produce_block()
    chain.save(cfg.chain)
    state_path.write_text(json.dumps(session.to_json(), indent=1) + "\n")
    _emit(session.transcript[before:], args.transcript)
    print(json.dumps({"state": session.state.value, "height": chain.height - 1,
                      "diagnostic": session.diagnostic}), file=sys.stderr)
    return EXIT_FAILED if session.state.value in ("TimedOut", "Aborted") else EXIT_OK


def cmd_receive(args) -> int:
    cfg = _config(args)
    wallet = load_wallet(args.wallet)
    senders = [load_public(p) for p in args.sender]
    path = Path(cfg.chain)
    if not path.exists():
        print(f"error: no chain at {path}", file=sys.stderr)
        return EXIT_FAILED
    chain = ChainStore.load(path, DropPolicy.parse(cfg.drop_policy, cfg.seed))
    rng = _rng(cfg.seed, "receive", chain.height)
    state_path = Path(args.session) if args.session else None
    if state_path and state_path.exists():
        session = ReceiverSession.from_json(json.loads(state_path.read_text()), wallet, rng)
    else:
        session = ReceiverSession(wallet, senders, rng, feedback_retry_blocks=cfg.retry_blocks,
                                  max_draws=cfg.max_draws)
    before = len(session.transcript)
    done_before = len(session.completed)
    outgoing = _catch_up(chain, session, session.last_height + 1)
    for o in outgoing:
        chain.submit_tx(o.tx, o.tag)
    if outgoing:
        chain.produce_block()
        chain.save(cfg.chain)
    if state_path:
        state_path.write_text(json.dumps(session.to_json(), indent=1) + "\n")
    _emit(session.transcript[before:], args.transcript)
    if len(session.completed) > done_before and args.out:
        Path(args.out).write_bytes(session.completed[-1][1])
    if session.state is ReceiverState.LISTENING and not session.completed:
        print(json.dumps({"result": "no session"}), file=sys.stderr)
        return EXIT_NO_SESSION
    print(json.dumps({"state": session.state.value, "segments": len(session.received),
                      "final_seq": session.final_seq}), file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    acfg = cfg.analysis
    overrides = {k: v for k, v in (("groups", args.groups), ("group_size", args.group_size),
                                   ("ks_samples", args.ks_samples), ("seed", args.seed))
                 if v is not None}
    acfg = replace(acfg, **overrides)
    chain = ChainStore.load(args.chain) if args.chain else None
    report = run_experiment(chain, acfg)
    report.save(args.out)
    sys.stdout.write(report.to_text())
    ok = report.kld_ratio_ok(3.0) and all(report.ks_pass_fraction(p) >= 0.95 for p in report.ks_pvalues)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_simulate(args) -> int:
    cfg = _config(args)
    policy_text, disable_after = SCENARIOS[args.scenario] if args.scenario else (cfg.drop_policy, None)
    if args.drop_policy:
        policy_text = args.drop_policy
    rng = random.Random(cfg.seed)
    message = Path(args.message).read_bytes() if args.message else rng.randbytes(args.message_size)
    result = simulate(message, DropPolicy.parse(policy_text, cfg.seed), cfg.seed,
                      timeout_blocks=cfg.timeout_blocks, retry_blocks=cfg.retry_blocks,
                      disable_drops_after_rounds=disable_after or cfg.disable_drops_after_rounds)
    _emit(result.transcript, args.transcript)
    if args.chain:
        result.chain.save(args.chain)
    summary = {"scenario": args.scenario or policy_text, "state": result.sender.state.value,
               "intact": result.intact, "drops": result.drops,
               "feedback_rounds": result.receiver.feedback_sent, "blocks": result.blocks,
               "diagnostic": result.sender.diagnostic}
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK if result.intact else EXIT_FAILED


def cmd_chain(args) -> int:
    chain = ChainStore.load(args.chain)
    if args.what == "height":
        print(chain.height - 1)
    elif args.what == "block":
        block = chain.blocks[args.key]
        print(json.dumps({"height": block.height, "id": block.id.hex(), "prev_id": block.prev_id.hex(),
                          "txs": [t.id.hex() for t in block.txs]}, indent=1))
    else:
        found = chain.get_tx(bytes.fromhex(args.key))
        if found is None:
            print("error: unknown transaction", file=sys.stderr)
            return EXIT_FAILED
        tx, height = found
        print(json.dumps({"id": tx.id.hex(), "height": height, "tx_pub": tx.tx_pub.hex(), "fee": tx.fee,
                          "outputs": [{"index": o.index, "stealth_address": o.stealth_address.hex(),
                                       "masked_amount": o.masked_amount.hex()} for o in tx.outputs]},
                         indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbct", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, chain=True):
        sp.add_argument("--config", help="JSON RunConfig")
        sp.add_argument("--seed", type=int)
        if chain:
            sp.add_argument("--chain")
            sp.add_argument("--drop-policy", dest="drop_policy")
            sp.add_argument("--timeout-blocks", dest="timeout_blocks", type=_positive)

    k = sub.add_parser("keygen", help="write a new wallet")
    k.add_argument("--out", required=True)
    k.add_argument("--seed", type=int)
    k.add_argument("--force", action="store_true")
    k.set_defaults(func=cmd_keygen)

    s = sub.add_parser("send", help="start or advance a sender session")
    common(s)
    s.add_argument("--wallet", required=True)
    s.add_argument("--to", required=True, help="recipient .pub file")
    s.add_argument("--message", help="message file (first call only)")
    s.add_argument("--session", required=True, help="sender state file")
    s.add_argument("--transcript")
    s.set_defaults(func=cmd_send)

    r = sub.add_parser("receive", help="scan the chain as the recipient")
    common(r)
    r.add_argument("--wallet", required=True)
    r.add_argument("--from", dest="sender", action="append", required=True, help="sender .pub file")
    r.add_argument("--session", help="receiver state file")
    r.add_argument("--out", help="where to write a completed message")
    r.add_argument("--transcript")
    r.set_defaults(func=cmd_receive)

    a = sub.add_parser("analyze", help="concealment statistics")
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--groups", type=_positive)
    a.add_argument("--group-size", dest="group_size", type=_positive)
    a.add_argument("--ks-samples", dest="ks_samples", type=_positive)
    a.add_argument("--chain", help="take fields from a tagged chain instead of generating them")
    a.add_argument("--out", default="analysis")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("simulate", help="run both parties in one process")
    common(m)
    m.add_argument("--scenario", choices=sorted(SCENARIOS))
    m.add_argument("--message")
    m.add_argument("--message-size", type=int, default=100)
    m.add_argument("--transcript")
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("chain", help="inspect a chain file")
    c.add_argument("what", choices=["height", "block", "tx"])
    c.add_argument("key", nargs="?")
    c.add_argument("--chain", required=True)
    c.set_defaults(func=cmd_chain)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "chain" and args.what != "height" and args.key is None:
        parser.error(f"chain {args.what} needs a key")
    if args.command == "chain" and args.what == "block":
        args.key = int(args.key)
    if args.command == "simulate" and args.scenario is None and args.drop_policy is None:
        args.scenario = "none"
    try:
        return args.func(args)
    except (ChainFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
