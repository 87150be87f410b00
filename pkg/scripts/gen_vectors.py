"""Freeze byte-exact protocol vectors from the independent oracle.

    python scripts/gen_vectors.py > tests/data/vectors.json

The random draws replay ``random.Random(seed)`` exactly as the codecs consume
it (``randrange(1, l)`` per transaction key, ``randrange(10**6)`` for the
amount's middle digits), so the draw counts are part of the vector.
"""
import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
import oracle as o  # noqa: E402


def keyquad(rng):
    v, s = rng.randrange(1, o.l), rng.randrange(1, o.l)
    return {"view_priv": v, "spend_priv": s,
            "view_pub": o.encodepoint(o.pub(v)).hex(), "spend_pub": o.encodepoint(o.pub(s)).hex()}


def pt(h):
    return o.decodepoint(bytes.fromhex(h))


def signature_loop(seed, signer_view, to):
    rng = random.Random(seed)
    draws = 0
    while True:
        draws += 1
        k = rng.randrange(1, o.l)
        (r, s), (a0, a1) = o.signature_carrier(k, signer_view, pt(to["view_pub"]), pt(to["spend_pub"]))
        if o.valid(a0) and o.valid(a1):
            return rng, k, draws, r, s, a0, a1


def main():
    rng = random.Random(20240601)
    alice, bob = keyquad(rng), keyquad(rng)
    bv, bs = pt(bob["view_pub"]), pt(bob["spend_pub"])
    out = {"alice": alice, "bob": bob}

    out["hash"] = []
    for data in (b"", b"abc", bytes(range(200))):
        out["hash"].append({"in": data.hex(), "keccak": o.keccak256(data).hex(), "hs": o.hs(data)})

    k_r = rng.randrange(1, o.l)
    S = o.scalarmult(bv, k_r)
    out["ecdh"] = {"k_r": k_r, "tx_pub": o.encodepoint(o.pub(k_r)).hex(), "S": o.encodepoint(S).hex(),
                   "S_receiver": o.encodepoint(o.scalarmult(o.pub(k_r), bob["view_priv"])).hex()}
    out["stealth"] = [{"t": t, "address": o.encodepoint(o.stealth(S, t, bs)).hex()} for t in (0, 1, 7, 300)]
    out["mask"] = [{"a": a, "t": t, "h": o.mask(a, S, t).hex()}
                   for a, t in ((0, 0), (1, 0), (123456789, 1), (2**64 - 1, 0))]

    _, k, draws, r, s, a0, a1 = signature_loop(7, alice["view_priv"], bob)
    out["auth"] = {"seed": 7, "k_r": k, "draws": draws, "r": r.hex(), "s": s.hex(),
                   "addr0": a0.hex(), "addr1": a1.hex()}

    segment = b"attack at dawn by the north gate"
    assert len(segment) == 32
    trng = random.Random(11)
    middle = trng.randrange(10**6)
    amount = 1 * 10**9 + middle * 10**3 + 5
    draws = 0
    while True:
        draws += 1
        k = trng.randrange(1, o.l)
        addr, masked, key = o.trans_carrier(k, segment, amount, bv, bs, r, s)
        if o.valid(addr):
            break
    out["trans"] = {"seed": 11, "segment": segment.hex(), "seq": 5, "final": False, "middle": middle,
                    "amount": amount, "k_r": k, "draws": draws, "address": addr.hex(),
                    "masked": masked.hex(), "session_key": key.hex()}

    out["fb"] = []
    for seed, mms in ((13, 0), (17, 12)):
        frng, k, draws, fr, fs, f0, f1 = signature_loop(seed, bob["view_priv"], alice)
        masked = None
        if mms:
            fmiddle = frng.randrange(10**6)
            S_fb = o.scalarmult(pt(alice["view_pub"]), k)
            masked = o.mask_signed(fmiddle * 10**3 + mms, S_fb, 0, fr, fs).hex()
        out["fb"].append({"seed": seed, "mms": mms, "k_r": k, "draws": draws, "r": fr.hex(), "s": fs.hex(),
                          "addr0": f0.hex(), "addr1": f1.hex(), "masked": masked})

    out["aes"] = {"key": o.keccak256(b"k").hex(), "pt": segment.hex(),
                  "ct": o.aes_ctr(o.keccak256(b"k"), segment).hex()}
    json.dump(out, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
