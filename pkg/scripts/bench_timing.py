"""Creation and extraction latency per transaction kind (ms, mean ± sd)."""
import argparse
import random
import statistics
import time

from mbct.codec import build_auth_tx, build_fb_tx, build_trans_tx, extract_auth, extract_segment, parse_feedback
from mbct.monero import KeyQuad, build_normal_tx, scan_tx


def measure(fn, n):
    out = []
    for _ in range(n):
        t0 = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t0) * 1000)
    return statistics.mean(out), statistics.stdev(out)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("-n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    n, r = args.n, random.Random(args.seed)
    alice, bob = KeyQuad.generate(r), KeyQuad.generate(r)
    auth, field = build_auth_tx(alice, bob.public, r)
    sig = field.signature
    trans, _ = build_trans_tx(alice, bob.public, bytes(32), 1, True, sig, r)
    fb, _ = build_fb_tx(bob, alice.public, 3, r)
    normal = build_normal_tx(alice, bob.view_pub, bob.spend_pub, 5, r)

    cases = [
        ("AuthTx", lambda: build_auth_tx(alice, bob.public, r), lambda: extract_auth(auth, bob, [alice.view_pub])),
        ("TransTx", lambda: build_trans_tx(alice, bob.public, bytes(32), 1, True, sig, r),
         lambda: extract_segment(trans, bob, sig)),
        ("FbTx", lambda: build_fb_tx(bob, alice.public, 3, r), lambda: parse_feedback(fb, alice, bob.view_pub)),
        ("normal", lambda: build_normal_tx(alice, bob.view_pub, bob.spend_pub, 5, r), lambda: scan_tx(normal, bob)),
    ]
    print(f"{'tx':<8} {'create ms':>18} {'extract ms':>18}   (n={n})")
    for name, create, extract in cases:
        cm, cs = measure(create, n)
        em, es = measure(extract, n)
        print(f"{name:<8} {cm:>10.3f} ± {cs:<6.3f} {em:>10.3f} ± {es:<6.3f}")


if __name__ == "__main__":
    main()
