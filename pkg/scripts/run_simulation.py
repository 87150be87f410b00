"""Run covert sessions under a drop policy and summarise each run.

    python scripts/run_simulation.py --policy random:0.2:trans:first --segments 100 --seeds 0-9
"""
import argparse
import json
import random
import time

from mbct.ledger import DropPolicy
from mbct.session import HEADER, SEGMENT_SIZE
from mbct.sim import simulate


def seed_range(text):
    a, _, b = text.partition("-")
    return range(int(a), int(b or a) + 1)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--policy", default="random:0.2:trans:first")
    p.add_argument("--segments", type=int, default=100)
    p.add_argument("--seeds", type=seed_range, default=seed_range("0-4"))
    p.add_argument("--disable-after", type=int, default=10)
    p.add_argument("--timeout-blocks", type=int, default=10)
    args = p.parse_args()

    for seed in args.seeds:
        message = random.Random(seed).randbytes(args.segments * SEGMENT_SIZE - HEADER)
        t0 = time.perf_counter()
        res = simulate(message, DropPolicy.parse(args.policy, seed), seed,
                       timeout_blocks=args.timeout_blocks, disable_drops_after_rounds=args.disable_after)
        print(json.dumps({"seed": seed, "state": res.sender.state.value, "intact": res.intact,
                          "drops": res.drops, "feedback_rounds": res.receiver.feedback_sent,
                          "blocks": res.blocks, "seconds": round(time.perf_counter() - t0, 3)}))


if __name__ == "__main__":
    main()
