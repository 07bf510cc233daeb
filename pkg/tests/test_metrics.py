import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powerniche.interactions import InteractionDataset, Quadrant, UserProfile, assign_quadrants
from powerniche.metrics import (disaggregate, evaluate, popularity_opportunity_bias, rank_items,
                                recall_precision_ndcg)
from powerniche.synthetic import random_dataset

import oracles
from oracles import FixedScores


def test_masking_and_order():
    ds = InteractionDataset.from_edges([(0, 0)], [(0, 1)], n=1, m=3)
    rr = rank_items(FixedScores([[0.9, 0.1, 0.5]]), ds, k=2)
    assert rr.topk[0].tolist() == [2, 1]
    assert rr.positions.tolist() == [2]


def test_ties_break_by_item_index():
    ds = InteractionDataset.from_edges([(0, 2)], [(0, 4)], n=1, m=6)
    rr = rank_items(FixedScores(np.zeros((1, 6))), ds, k=6)
    assert rr.topk[0].tolist() == [0, 1, 3, 4, 5, -1]
    assert rr.positions.tolist() == [4]


def test_recall_precision_examples():
    # test = {a, b}; top-20 only contains a
    m = 30
    scores = np.linspace(1, 0, m)[None, :]
    ds = InteractionDataset.from_edges([(0, 29)], [(0, 0), (0, 25)], n=1, m=m)
    rr = rank_items(FixedScores(scores), ds, k=20)
    r, p, n = recall_precision_ndcg(rr, ds, 20)
    assert r == 0.5 and p == 1 / 20


@pytest.mark.parametrize("position,expected", [(1, 1.0), (3, 0.5)])
def test_ndcg_examples(position, expected):
    m = 25
    scores = np.linspace(1, 0, m)[None, :]
    ds = InteractionDataset.from_edges([(0, 24)], [(0, position - 1)], n=1, m=m)
    rr = rank_items(FixedScores(scores), ds, k=20)
    assert recall_precision_ndcg(rr)[2] == pytest.approx(expected, abs=1e-15)


def test_users_without_test_items_excluded():
    ds = InteractionDataset.from_edges([(0, 0), (1, 1)], [(0, 2)], n=3, m=3)
    rr = rank_items(FixedScores(np.zeros((3, 3))), ds, k=1)
    assert rr.users.tolist() == [0]
    assert rr.excluded_users == 2


def test_bias_two_point():
    # item 0 popular and always first; item 1 niche and always last
    train = [(u, 0) for u in range(4)] + [(4, 1)] + [(u, 2) for u in range(5, 7)]
    test = [(5, 0), (6, 0), (0, 1), (1, 1)]
    ds = InteractionDataset.from_edges(train, test, n=7, m=5)
    scores = np.tile([5.0, -5.0, 0.0, 1.0, 2.0], (7, 1))
    rr = rank_items(FixedScores(scores), ds, k=2)
    bias, degenerate = popularity_opportunity_bias(rr, ds)
    assert bias == pytest.approx(1.0) and not degenerate


def test_bias_degenerate_for_equal_popularity():
    ds = InteractionDataset.from_edges([(0, 0), (1, 1), (2, 2)], [(1, 0), (2, 1), (0, 2)], n=3, m=3)
    rr = rank_items(FixedScores(np.random.default_rng(0).random((3, 3))), ds, k=1)
    assert popularity_opportunity_bias(rr, ds) == (0.0, True)


def test_bias_near_zero_when_scores_ignore_popularity():
    # per-seed sampling noise is about 1/sqrt(items); the 10-seed mean must sit near zero
    values = []
    for seed in range(10):
        ds = random_dataset(1000, 300, 0.05, seed=seed, test_frac=0.3)
        scores = np.random.default_rng(100 + seed).random((1000, 300))
        values.append(evaluate(rank_items(FixedScores(scores), ds, 20), ds).bias)
    assert abs(np.mean(values)) < 0.1
    assert max(abs(b) for b in values) < 0.3


def _instances(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, m = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        ds = random_dataset(n, m, float(rng.uniform(0.2, 0.6)), seed=int(rng.integers(1 << 30)), test_frac=0.4)
        # coarse scores force plenty of ties
        scores = rng.integers(0, 4, size=(n, m)).astype(float)
        yield ds, scores, int(rng.integers(1, 6))


def test_metrics_match_brute_force():
    for ds, scores, k in _instances(150, 1):
        if len(ds.test_edges) == 0:
            continue
        rr = rank_items(FixedScores(scores), ds, k)
        rep = evaluate(rr, ds)
        expected = oracles.brute_metrics(ds, scores, k)
        np.testing.assert_allclose([rep.recall, rep.precision, rep.ndcg, rep.bias], expected, atol=1e-12)


def test_metric_invariants():
    for ds, scores, k in _instances(60, 2):
        if len(ds.test_edges) == 0:
            continue
        rr = rank_items(FixedScores(scores), ds, k)
        rep = evaluate(rr, ds)
        assert 0 <= rep.recall <= 1 and 0 <= rep.precision <= 1 and 0 <= rep.ndcg <= 1
        assert -1 <= rep.bias <= 1
        for row, u in enumerate(rr.users):
            assert not set(rr.topk[row].tolist()) & set(ds.neighbors(u).tolist())
        # strictly increasing transform of the scores changes nothing
        rep2 = evaluate(rank_items(FixedScores(np.exp(3 * scores) - 7), ds, k), ds)
        assert rep2 == rep


def test_disaggregate_single_quadrant_equals_overall():
    ds = InteractionDataset.from_edges([(u, u) for u in range(4)], [(u, (u + 1) % 4) for u in range(4)],
                                       n=4, m=4)
    rr = rank_items(FixedScores(np.random.default_rng(3).random((4, 4))), ds, 2)
    quads = disaggregate(rr, ds, assign_quadrants(ds))
    assert quads["light_mainstream"] == evaluate(rr, ds)
    assert quads["power_niche"].recall is None and quads["power_niche"].users == 0


def test_disaggregate_matches_per_group_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(30):
        ds = random_dataset(8, 8, 0.4, seed=int(rng.integers(1 << 30)), test_frac=0.4)
        scores = rng.random((8, 8))
        rr = rank_items(FixedScores(scores), ds, 3)
        profiles = assign_quadrants(ds)
        quads = disaggregate(rr, ds, profiles)
        assert sum(r.users for r in quads.values()) == len(rr.users)
        for q in Quadrant:
            members = {p.user for p in profiles if p.quadrant is q}
            rep = quads[q.value]
            if rep.users == 0:
                continue
            expected = oracles.brute_metrics(ds, scores, 3, members)
            np.testing.assert_allclose([rep.recall, rep.precision, rep.ndcg, rep.bias], expected, atol=1e-12)


def test_spearman_option():
    ds = random_dataset(40, 30, 0.1, seed=0, test_frac=0.3)
    scores = np.tile(ds.d_i.astype(float), (40, 1))  # popularity ranking
    rr = rank_items(FixedScores(scores), ds, 5)
    pearson, _ = popularity_opportunity_bias(rr, ds)
    spearman, _ = popularity_opportunity_bias(rr, ds, method="spearman")
    assert pearson > 0.3 and spearman > 0.3
    with pytest.raises(ValueError):
        popularity_opportunity_bias(rr, ds, method="kendall")
