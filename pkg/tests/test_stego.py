import json
import math
import random

import numpy as np
import pytest
from scipy.stats import ks_2samp, kstwobign

from mbct.config import AnalysisConfig
from mbct.ledger import ChainStore
from mbct.stego import (
    KINDS, CharFreq, InsufficientData, collect_fields, ecdf, kld, ks_test, nibble_counts,
    populate_chain, run_experiment,
)

UNIFORM = CharFreq(tuple([1000] * 16))


def random_hex(rng, n_chars):
    return "".join("0123456789abcdef"[v] for v in rng.integers(0, 16, n_chars))


def test_charfreq_counts():
    f = CharFreq.of(["00ff", "a"])
    assert f.total == 5 and f.counts[0] == 2 and f.counts[15] == 2 and f.counts[10] == 1
    with pytest.raises(ValueError):
        CharFreq((1,) * 15)


def test_nibble_counts_match_charfreq():
    strings = ["0123abcd", "ffff0000", "9a9a9a9a"]
    assert tuple(nibble_counts(strings).sum(axis=0)) == CharFreq.of(strings).counts


def test_kld_identical_is_zero():
    assert kld(UNIFORM, UNIFORM) == 0.0


def test_kld_point_mass_vs_uniform():
    # ~log2(16) = 4 bits; add-one smoothing shaves a sliver off
    zeros = CharFreq((10**6,) + (0,) * 15)
    assert kld(zeros, UNIFORM) == pytest.approx(4.0, abs=0.01)


def test_kld_finite_sample_floor():
    n = 640_000
    rng = np.random.default_rng(3)
    a = CharFreq(tuple(np.bincount(rng.integers(0, 16, n), minlength=16)))
    b = CharFreq(tuple(np.bincount(rng.integers(0, 16, n), minlength=16)))
    expected = 15 / (2 * n * math.log(2))
    # two independent samples: roughly double the one-sided floor, well inside the band
    assert 0.25 * expected <= kld(a, b) <= 4 * 2 * expected


def test_kld_rejects_empty():
    with pytest.raises(ValueError):
        kld(CharFreq((0,) * 16), UNIFORM)


def test_ecdf_shapes():
    assert np.allclose(ecdf(UNIFORM), np.arange(1, 17) / 16)
    only_f = ecdf(CharFreq((0,) * 15 + (5,)))
    assert np.all(only_f[:15] == 0) and only_f[15] == 1.0
    with pytest.raises(ValueError):
        ecdf(CharFreq((0,) * 16))


def test_ecdf_dkw_bound():
    rng = np.random.default_rng(8)
    n = 500_000
    f = CharFreq(tuple(np.bincount(rng.integers(0, 16, n), minlength=16)))
    assert np.max(np.abs(ecdf(f) - np.arange(1, 17) / 16)) < 0.01


def test_ks_identical():
    sample = np.arange(16).repeat(20)
    res = ks_test(sample, sample)
    assert res.statistic == 0.0 and res.pvalue == 1.0


def test_ks_disjoint_support():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 8, 1000)
    res = ks_test(a, a + 8)
    assert res.statistic == 1.0 and res.pvalue < 0.001


def test_ks_rejects_out_of_range():
    with pytest.raises(ValueError):
        ks_test([16], [0])


def test_ks_null_rejection_rate():
    rng = np.random.default_rng(11)
    rejected = 0
    for _ in range(1000):
        rejected += ks_test(rng.integers(0, 16, 500), rng.integers(0, 16, 500)).pvalue <= 0.05
    assert rejected / 1000 <= 0.07


def test_ks_agrees_with_scipy():
    rng = np.random.default_rng(12)
    for _ in range(50):
        a, b = rng.integers(0, 16, 400), rng.integers(0, 16, 300)
        ours = ks_test(a, b)
        ref = ks_2samp(a, b, method="asymp")
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
        en = 400 * 300 / 700
        assert ours.pvalue == pytest.approx(min(1.0, kstwobign.sf(math.sqrt(en) * ref.statistic)), abs=1e-12)
        # scipy uses the finite-n law; the limiting one differs only slightly here
        assert ours.pvalue == pytest.approx(ref.pvalue, abs=0.03)


@pytest.fixture(scope="module")
def tagged_chain():
    chain = ChainStore()
    populate_chain(chain, 40, random.Random(5), per_block=30)
    return chain


def test_collect_fields(tagged_chain):
    for kind in KINDS:
        got = collect_fields(tagged_chain, kind, 40)
        width = 16 if kind.endswith("amount") else 64
        assert len(got) == 40 and all(len(s) == width for s in got)
    with pytest.raises(InsufficientData, match="short by 10"):
        collect_fields(tagged_chain, "trans_addr", 50)


SMALL = AnalysisConfig(groups=2, group_size=40, reference_size=200, corpus_size=80,
                       ks_samples=20, ks_instances=10, seed=4)


def test_report_schema(tmp_path):
    report = run_experiment(config=SMALL)
    assert len(report.kld_rows) == 2 * 4
    assert set(report.cdf) == set(KINDS)
    assert all(len(v) == 16 and v[-1] == 1.0 for v in report.cdf.values())
    assert all(len(ps) == 20 for ps in report.ks_pvalues.values())
    report.save(tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["config"]["groups"] == 2
    rows = (tmp_path / "rows.jsonl").read_text().splitlines()
    assert {json.loads(r)["table"] for r in rows} == {"kld", "cdf", "ks"}
    assert "KS battery" in (tmp_path / "report.txt").read_text()


def test_report_deterministic():
    assert run_experiment(config=SMALL).to_json() == run_experiment(config=SMALL).to_json()


def test_report_from_chain(tagged_chain):
    cfg = AnalysisConfig(groups=1, group_size=40, reference_size=100, corpus_size=40,
                         ks_samples=5, ks_instances=10)
    report = run_experiment(tagged_chain, cfg)
    assert report.source == "chain"
    with pytest.raises(InsufficientData):
        run_experiment(tagged_chain, AnalysisConfig(groups=1, group_size=41, corpus_size=41,
                                                    ks_instances=10, reference_size=10, ks_samples=1))


def test_config_validation():
    with pytest.raises(ValueError):
        AnalysisConfig(groups=0)
    with pytest.raises(ValueError):
        AnalysisConfig(corpus_size=10, ks_instances=20)
