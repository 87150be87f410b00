"""Concealment statistics: hex-character frequencies, KLD, ECDF and KS.

Every field (a 32-byte stealth address or an 8-byte masked amount) is viewed
as a string of hex characters. A KS "instance" is one field; a sample pools
the character values 0-15 of all its instances.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.stats import kstwobign

from .codec import build_auth_tx, build_trans_tx
from .config import AnalysisConfig
from .monero import KeyQuad, build_normal_tx, random_amount

HEX = "0123456789abcdef"
KINDS = ("auth_addr0", "auth_addr1", "trans_addr", "trans_amount", "normal_addr", "normal_amount")
# special field -> the normal field it must be indistinguishable from
PAIRS = {
    "auth_addr0": "normal_addr",
    "auth_addr1": "normal_addr",
    "trans_addr": "normal_addr",
    "trans_amount": "normal_amount",
}
_FIELD = {
    "auth_addr0": ("auth", 0, "addr"),
    "auth_addr1": ("auth", 1, "addr"),
    "trans_addr": ("trans", 0, "addr"),
    "trans_amount": ("trans", 0, "amount"),
    "normal_addr": ("normal", 0, "addr"),
    "normal_amount": ("normal", 0, "amount"),
}


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class CharFreq:
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != 16 or min(self.counts) < 0:
            raise ValueError("need 16 non-negative counts")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @classmethod
    def of(cls, strings) -> CharFreq:
        counts = [0] * 16
        for s in strings:
            for ch in s:
                counts[HEX.index(ch)] += 1
        return cls(tuple(counts))

    def probabilities(self, smoothing: float = 0.0) -> np.ndarray:
        c = np.asarray(self.counts, dtype=float) + smoothing
        if c.sum() <= 0:
            raise ValueError("empty distribution")
        return c / c.sum()


def nibbles(strings) -> np.ndarray:
    """(n, width) array of hex character values."""
    raw = np.frombuffer("".join(strings).encode(), dtype=np.uint8)
    vals = np.where(raw >= ord("a"), raw - ord("a") + 10, raw - ord("0"))
    return vals.reshape(len(strings), -1)


def nibble_counts(strings) -> np.ndarray:
    """(n, 16) per-instance character counts."""
    vals = nibbles(strings)
    out = np.zeros((vals.shape[0], 16), dtype=np.int64)
    np.add.at(out, (np.repeat(np.arange(vals.shape[0]), vals.shape[1]), vals.ravel()), 1)
    return out


def kld(p: CharFreq, q: CharFreq, smoothing: float = 1.0) -> float:
    """D(P || Q) in bits, with add-one smoothing on both sides."""
    if p.total == 0 or q.total == 0:
        raise ValueError("empty distribution")
    pp, qq = p.probabilities(smoothing), q.probabilities(smoothing)
    return float(np.sum(pp * np.log2(pp / qq)))


def ecdf(freq: CharFreq) -> np.ndarray:
    if freq.total == 0:
        raise ValueError("empty distribution")
    out = np.cumsum(np.asarray(freq.counts, dtype=float)) / freq.total
    out[-1] = 1.0
    return out


class KSResult(NamedTuple):
    statistic: float
    pvalue: float


def ks_from_counts(a: np.ndarray, b: np.ndarray) -> KSResult:
    na, nb = a.sum(), b.sum()
    if na == 0 or nb == 0:
        raise ValueError("KS samples must be non-empty")
    d = float(np.max(np.abs(np.cumsum(a) / na - np.cumsum(b) / nb)))
    en = na * nb / (na + nb)
    return KSResult(d, float(min(1.0, kstwobign.sf(np.sqrt(en) * d))))


def ks_test(sample_a, sample_b) -> KSResult:
    """Two-sample KS over values in 0..15 with the asymptotic p-value."""
    a = np.bincount(np.asarray(sample_a, dtype=np.int64), minlength=16)
    b = np.bincount(np.asarray(sample_b, dtype=np.int64), minlength=16)
    if len(a) > 16 or len(b) > 16:
        raise ValueError("values must lie in 0..15")
    return ks_from_counts(a, b)


def field_hex(tx, index: int, part: str) -> str:
    out = tx.outputs[index]
    return (out.stealth_address if part == "addr" else out.masked_amount).hex()


def collect_fields(chain, kind: str, n: int) -> list[str]:
    """Pull ``n`` hex fields of ``kind`` from transactions the simulator tagged."""
    tx_kind, index, part = _FIELD[kind]
    got = []
    for tx in chain.transactions():
        tag = chain.tags.get(tx.id.hex())
        if tag and tag.get("kind") == tx_kind:
            got.append(field_hex(tx, index, part))
            if len(got) == n:
                return got
    raise InsufficientData(f"{kind}: wanted {n} fields, chain has {len(got)} (short by {n - len(got)})")


_WORDS = ("attack", "at", "dawn", "the", "ledger", "keeps", "every", "secret", "meet", "by",
          "north", "gate", "bring", "keys", "no", "one", "knows", "river", "stone", "signal")


def plaintext_segment(rng) -> bytes:
    text = " ".join(rng.choice(_WORDS) for _ in range(12)).encode()
    return text[:32].ljust(32, b" ")


class CorpusFactory:
    """Builds covert and normal transactions between one fixed wallet pair."""

    def __init__(self, rng):
        self.rng = rng
        self.alice = KeyQuad.generate(rng)
        self.bob = KeyQuad.generate(rng)
        self.carol = KeyQuad.generate(rng)
        _, auth = build_auth_tx(self.alice, self.bob.public, rng)
        self.signature = auth.signature

    def auth(self):
        return build_auth_tx(self.alice, self.bob.public, self.rng)[0]

    def trans(self, seq: int = 1):
        seq = seq % 999 + 1
        return build_trans_tx(self.alice, self.bob.public, plaintext_segment(self.rng), seq,
                              seq % 50 == 0, self.signature, self.rng)[0]

    def normal(self):
        return build_normal_tx(self.carol, self.bob.view_pub, self.bob.spend_pub,
                               random_amount(self.rng), self.rng)


def generate_fields(n_auth: int, n_trans: int, n_normal: int, rng) -> dict[str, list[str]]:
    """Field corpus built in memory, never broadcast."""
    f = CorpusFactory(rng)
    out = {k: [] for k in KINDS}
    for _ in range(n_auth):
        tx = f.auth()
        out["auth_addr0"].append(field_hex(tx, 0, "addr"))
        out["auth_addr1"].append(field_hex(tx, 1, "addr"))
    for i in range(n_trans):
        tx = f.trans(i)
        out["trans_addr"].append(field_hex(tx, 0, "addr"))
        out["trans_amount"].append(field_hex(tx, 0, "amount"))
    for _ in range(n_normal):
        tx = f.normal()
        out["normal_addr"].append(field_hex(tx, 0, "addr"))
        out["normal_amount"].append(field_hex(tx, 0, "amount"))
    return out


def populate_chain(chain, n: int, rng, per_block: int = 500) -> None:
    """Broadcast ``n`` transactions of each kind into ``chain`` (tagged)."""
    f = CorpusFactory(rng)
    pending = 0
    for i in range(n):
        for kind, tx in (("auth", f.auth()), ("trans", f.trans(i)), ("normal", f.normal())):
            chain.submit_tx(tx, {"kind": kind})
            pending += 1
        if pending >= per_block:
            chain.produce_block()
            pending = 0
    if pending:
        chain.produce_block()


@dataclass
class AnalysisReport:
    config: dict
    kld_rows: list[dict] = field(default_factory=list)
    cdf: dict[str, list[float]] = field(default_factory=dict)
    ks_pvalues: dict[str, list[float]] = field(default_factory=dict)
    sizes: dict[str, int] = field(default_factory=dict)
    source: str = "generated"

    def ks_pass_fraction(self, pair: str) -> float:
        ps = np.asarray(self.ks_pvalues[pair])
        return float(np.mean(ps > self.config["alpha"]))

    def kld_ratio_ok(self, bound: float = 3.0) -> bool:
        return all(r["kld_special"] <= bound * r["kld_normal"] for r in self.kld_rows)

    def to_json(self) -> dict:
        return asdict(self)

    def rows(self) -> list[dict]:
        """Flat records for external plotting."""
        out = [dict(table="kld", **r) for r in self.kld_rows]
        for kind, vals in self.cdf.items():
            out += [dict(table="cdf", field=kind, char=HEX[i], value=v) for i, v in enumerate(vals)]
        for pair, ps in self.ks_pvalues.items():
            out += [dict(table="ks", pair=pair, sample=i, pvalue=p) for i, p in enumerate(ps)]
        return out

    def to_text(self) -> str:
        lines = ["KLD vs reference (bits)", f"{'group':>5} {'field':<14} {'special':>12} {'normal':>12} {'ratio':>7}"]
        for r in self.kld_rows:
            lines.append(f"{r['group']:>5} {r['field']:<14} {r['kld_special']:>12.3e} "
                         f"{r['kld_normal']:>12.3e} {r['ratio']:>7.3f}")
        lines += ["", "CDF of hex characters", f"{'field':<14} " + " ".join(f"{c:>5}" for c in HEX)]
        for kind, vals in self.cdf.items():
            lines.append(f"{kind:<14} " + " ".join(f"{v:5.3f}" for v in vals))
        lines += ["", f"KS battery ({self.config['ks_samples']} samples x {self.config['ks_instances']} instances)",
                  f"{'pair':<30} {'p>alpha':>8} {'median p':>9} {'min p':>8}"]
        for pair, ps in self.ks_pvalues.items():
            arr = np.asarray(ps)
            lines.append(f"{pair:<30} {self.ks_pass_fraction(pair):>8.3f} {np.median(arr):>9.3f} {arr.min():>8.4f}")
        return "\n".join(lines) + "\n"

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text())
        (out / "report.json").write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")
        (out / "rows.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in self.rows()))


def run_experiment(chain=None, config: AnalysisConfig | None = None) -> AnalysisReport:
    config = config or AnalysisConfig()
    rng = random.Random(config.seed)
    n = max(config.groups * config.group_size, config.corpus_size)
    if chain is None:
        fields_ = generate_fields(n, n, n, rng)
        source = "generated"
    else:
        fields_ = {k: collect_fields(chain, k, n) for k in KINDS}
        source = "chain"
    # fresh normal fields standing in for the independent reference set
    reference = generate_fields(0, 0, config.reference_size, rng)
    ref_freq = {
        "addr": CharFreq.of(reference["normal_addr"]),
        "amount": CharFreq.of(reference["normal_amount"]),
    }
    report = AnalysisReport(config=asdict(config), source=source,
                            sizes={k: len(v) for k, v in fields_.items()})
    report.sizes["reference"] = config.reference_size

    gs = config.group_size
    for g in range(config.groups):
        sl = slice(g * gs, (g + 1) * gs)
        for special, normal in PAIRS.items():
            part = _FIELD[special][2]
            ks = kld(CharFreq.of(fields_[special][sl]), ref_freq[part])
            kn = kld(CharFreq.of(fields_[normal][sl]), ref_freq[part])
            report.kld_rows.append({"group": g + 1, "field": special, "kld_special": ks,
                                    "kld_normal": kn, "ratio": ks / kn if kn else float("inf")})

    for kind in KINDS:
        report.cdf[kind] = ecdf(CharFreq.of(fields_[kind])).tolist()

    nprng = np.random.default_rng(config.seed)
    counts = {k: nibble_counts(v[:config.corpus_size]) for k, v in fields_.items()}
    m = config.ks_instances
    for special, normal in PAIRS.items():
        a_all, b_all = counts[special], counts[normal]
        ps = []
        for _ in range(config.ks_samples):
            a = a_all[nprng.choice(len(a_all), m, replace=False)].sum(axis=0)
            b = b_all[nprng.choice(len(b_all), m, replace=False)].sum(axis=0)
            ps.append(ks_from_counts(a, b).pvalue)
        report.ks_pvalues[f"{special}~{normal}"] = ps
    return report
