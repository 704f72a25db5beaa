import itertools
import math

import numpy as np
import pytest

import slotprune as sp
from slotprune.errors import ConfigError


def test_coverage_counting():
    labels = np.array([0] * 4 + [1] * 4 + [2] * 4)
    assert sp.coverage(np.array([0, 4, 8]), labels) == 1.0
    assert sp.coverage(np.array([0, 1, 2]), labels) == pytest.approx(1 / 3)
    assert sp.coverage(np.array([], dtype=int), labels) == 0.0


def test_coverage_accepts_prune_result(small_corpus):
    item = small_corpus.items[0]
    dist = sp.QueryDistribution(item.c)
    mod = sp.SlotAttention(item.c, attn_dim=8, mlp_hidden=16, iterations=2, seed=0)
    result = sp.prune(sp.PruneInput(item.tokens, item.tokens, 3, "pad"), dist, mod, seed=1)
    value = sp.coverage(result, item.labels)
    assert 0.0 <= value <= 1.0


def test_coverage_requires_labels():
    with pytest.raises(ConfigError):
        sp.coverage(np.array([0]), None)


def brute_force_expected_coverage(labels, s):
    n = len(labels)
    distinct = len(set(labels.tolist()))
    total = 0.0
    count = 0
    for subset in itertools.combinations(range(n), s):
        hit = len({labels[i] for i in subset})
        total += hit / distinct
        count += 1
    assert count == math.comb(n, s)
    return total / count


@pytest.mark.parametrize("sizes,s", [((4, 4, 4), 3), ((2, 5, 3), 4), ((1, 6, 3, 2), 2), ((6, 6), 1)])
def test_expected_random_coverage_matches_enumeration(sizes, s):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    exact = sp.expected_random_coverage(sizes, s)
    brute = brute_force_expected_coverage(labels, s)
    assert exact == pytest.approx(brute, rel=1e-12)


def test_expected_random_coverage_validation():
    with pytest.raises(ConfigError):
        sp.expected_random_coverage((0, 3), 1)
    with pytest.raises(ConfigError):
        sp.expected_random_coverage((3, 3), 7)


def test_random_baseline_deterministic():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(20, 4))
    a = sp.baseline_select("random", v, 5, seed=3)
    b = sp.baseline_select("random", v, 5, seed=3)
    np.testing.assert_array_equal(a, b)
    assert len(set(a.tolist())) == 5
    c = sp.baseline_select("random", v, 5, seed=4)
    assert not np.array_equal(a, c)


def test_norm_topk_baseline():
    v = np.zeros((3, 2))
    v[0] = [3.0, 0.0]
    v[1] = [1.0, 0.0]
    v[2] = [0.0, 2.0]
    np.testing.assert_array_equal(sp.baseline_select("norm_topk", v, 2), [0, 2])


def test_medoid_baseline_hits_every_cluster(small_corpus):
    for item in small_corpus.items:
        idx = sp.baseline_select("medoid", item.tokens, 3)
        assert len(np.unique(item.labels[idx])) == 3


def test_baseline_rejects_unknown_method():
    with pytest.raises(ConfigError):
        sp.baseline_select("entropy", np.zeros((4, 2)), 2)


def trained_tiny_bundle(corpus):
    cfg = sp.TrainConfig(
        budget_set=(2, 3),
        steps=5,
        batch_size=2,
        learning_rate=1e-3,
        seed=0,
        attn_dim=8,
        mlp_hidden=16,
        decoder_width=16,
        decoder_depth=1,
        decoder_heads=2,
        decoder_ffn=32,
        max_tokens=32,
    )
    return sp.train(corpus, cfg)


def test_run_bench_report_roundtrip(small_corpus, tmp_path):
    bundle = trained_tiny_bundle(small_corpus)
    report = sp.run_bench(small_corpus, bundle, budgets=[2, 3], methods=["pruner", "random"], seeds=[0])
    assert len(report.rows) == 4
    again = sp.BenchReport.from_json(report.to_json())
    assert again == report
    for row in report.rows:
        assert 0.0 <= row.coverage <= 1.0
        assert row.recon_error >= 0.0
        if row.method != "pruner":
            assert row.empty_slot_rate is None

    csv_path = tmp_path / "bench.csv"
    report.write_csv(csv_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("method,budget")
    assert len(lines) == 5


def test_run_bench_validation(small_corpus):
    bundle = trained_tiny_bundle(small_corpus)
    with pytest.raises(ConfigError):
        sp.run_bench(small_corpus, bundle, budgets=[])
    with pytest.raises(ConfigError):
        sp.run_bench(small_corpus, bundle, budgets=[3], methods=["nope"])
    with pytest.raises(ConfigError):
        sp.run_bench(small_corpus, bundle, budgets=[3], seeds=[])
    with pytest.raises(ConfigError):
        sp.run_bench(small_corpus, bundle, budgets=[99])


def test_run_bench_requires_labels(small_corpus):
    bundle = trained_tiny_bundle(small_corpus)
    unlabeled = sp.TokenCorpus(
        items=tuple(
            sp.TokenSequence(tokens=item.tokens, item_id=item.item_id) for item in small_corpus.items
        )
    )
    with pytest.raises(ConfigError, match="labels"):
        sp.run_bench(unlabeled, bundle, budgets=[2])


def test_coverage_monotone_in_budget_for_nested_selections(small_corpus):
    # Growing a kept set can only cover more objects.
    rng = np.random.default_rng(1)
    for item in small_corpus.items:
        order = rng.permutation(item.n)
        last = 0.0
        for s in range(1, item.n + 1):
            value = sp.coverage(order[:s], item.labels)
            assert value >= last
            last = value
        assert last == 1.0
