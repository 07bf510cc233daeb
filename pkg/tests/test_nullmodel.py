import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powerniche import nullmodel
from powerniche.interactions import InteractionDataset, assign_quadrants
from powerniche.nullmodel import (bin_boundaries, bin_users, rewire, sample_null, significance_grid,
                                  write_significance_csv)
from powerniche.synthetic import planted_power_niche, random_dataset


def degrees(edges, n, m):
    return np.bincount(edges[:, 0], minlength=n), np.bincount(edges[:, 1], minlength=m)


def assert_valid_null(ds, sample):
    du, di = degrees(sample.edges, ds.n, ds.m)
    np.testing.assert_array_equal(du, ds.d_u)
    np.testing.assert_array_equal(di, ds.d_i)
    keys = sample.edges[:, 0] * ds.m + sample.edges[:, 1]
    assert len(np.unique(keys)) == len(keys) == ds.num_train


def test_single_swap_exchanges_partners():
    ds = InteractionDataset.from_edges([(0, 0), (1, 1)], n=2, m=2)
    out = rewire(ds, 1, seed=0)
    assert out.swap_accepts == 1
    assert out.edges.tolist() == [[0, 1], [1, 0]]


def test_shared_item_never_swaps(caplog):
    ds = InteractionDataset.from_edges([(0, 0), (1, 0)], n=2, m=1)
    with caplog.at_level(logging.WARNING):
        out = rewire(ds, 5, seed=0, max_attempts=200)
    assert out.swap_accepts == 0
    assert out.swap_attempts == 200
    assert out.edges.tolist() == ds.train_edges.tolist()
    assert "stalled" in caplog.text


def test_swap_rejects_duplicates():
    # (0,0),(0,1),(1,1): the only distinct-user/item pair is (0,0)-(1,1), which would recreate (0,1)
    ds = InteractionDataset.from_edges([(0, 0), (0, 1), (1, 1)], n=2, m=2)
    out = rewire(ds, 3, seed=1, max_attempts=500)
    assert out.swap_accepts == 0
    assert_valid_null(ds, out)


def test_needs_two_edges():
    with pytest.raises(ValueError):
        rewire(InteractionDataset.from_edges([(0, 0)]), 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.floats(0.1, 0.7), st.integers(0, 2**31))
def test_rewire_preserves_degrees(n, m, density, seed):
    ds = random_dataset(n, m, density, seed=seed)
    if ds.num_train < 2:
        return
    out = rewire(ds, 5 * ds.num_train, seed=seed, max_attempts=50 * ds.num_train + 100)
    assert_valid_null(ds, out)
    assert out.swap_accepts <= out.swap_attempts


def test_sample_null_counts_accepted_swaps():
    ds = InteractionDataset.from_edges([(u, u) for u in range(8)], n=8, m=8)
    samples = sample_null(ds, 3, seed=7)
    assert len(samples) == 3
    assert all(s.swap_accepts == 80 for s in samples)
    for s in samples:
        assert_valid_null(ds, s)


def test_sample_null_deterministic_and_worker_independent():
    ds = random_dataset(30, 40, 0.15, seed=3)
    a = sample_null(ds, 1, seed=11)[0]
    b = sample_null(ds, 1, seed=11)[0]
    assert a.edges.tobytes() == b.edges.tobytes()
    serial = sample_null(ds, 4, seed=5)
    threaded = sample_null(ds, 4, seed=5, workers=2)
    for x, y in zip(serial, threaded):
        np.testing.assert_array_equal(x.edges, y.edges)


def test_null_samples_are_distinct():
    ds = random_dataset(20, 20, 0.15, seed=1)
    samples = sample_null(ds, 100, seed=0)
    keys = {s.edges.tobytes() for s in samples}
    assert len(keys) == 100


def test_toy_bins_match_hand_enumeration(toy):
    # activity cut 1.25 (mean) / 1 (median); preference cut 2.25 / 2.5
    # user 0 -> (1, 0); users 1, 2 -> (0, 1); user 3 -> (0, 0)
    for mode in ("mean", "quantile"):
        grid = bin_users(toy, bin_boundaries(toy, 2, mode))
        assert grid.tolist() == [[1, 2], [1, 0]]


def test_mean_bins_reproduce_quadrants():
    ds = random_dataset(60, 50, 0.1, seed=9)
    grid = bin_users(ds, bin_boundaries(ds, 2, "mean"))
    counts = {}
    for p in assign_quadrants(ds):
        counts[p.quadrant.value] = counts.get(p.quadrant.value, 0) + 1
    assert grid[1, 0] == counts.get("power_niche", 0)
    assert grid[1, 1] == counts.get("power_mainstream", 0)
    assert grid[0, 0] == counts.get("light_niche", 0)
    assert grid[0, 1] == counts.get("light_mainstream", 0)


def test_uniform_activity_lands_in_one_row(caplog):
    ds = InteractionDataset.from_edges([(u, (u + k) % 6) for u in range(6) for k in range(2)], n=6, m=6)
    with caplog.at_level(logging.WARNING):
        bounds = bin_boundaries(ds, 4)
    assert bounds.merged_activity == 2
    grid = bin_users(ds, bounds)
    assert grid[0].sum() == 6 and grid[1:].sum() == 0


def test_bin_users_on_null_sample_recomputes_preferences():
    ds, _ = planted_power_niche(200, 300, seed=2)
    bounds = bin_boundaries(ds, 5)
    sample = sample_null(ds, 1, seed=1)[0]
    g_obs = bin_users(ds, bounds)
    g_null = bin_users(ds, bounds, sample.edges)
    assert g_obs.sum() == g_null.sum() == (ds.d_u > 0).sum()
    np.testing.assert_array_equal(g_obs.sum(axis=1), g_null.sum(axis=1))  # activity rows fixed
    assert not np.array_equal(g_obs, g_null)


def test_significance_grid_basics():
    nulls = [np.array([[4, 1], [2, 3]]), np.array([[4, 3], [2, 5]]), np.array([[4, 2], [2, 4]])]
    obs = np.array([[4, 2], [10, 4]])
    g = significance_grid(obs, nulls)
    assert np.isnan(g.z[0, 0]) and not g.significant[0, 0]  # zero variance
    assert np.isnan(g.z[1, 0])
    assert g.z[0, 1] == 0.0 and g.z[1, 1] == 0.0
    np.testing.assert_allclose(g.null_std[0, 1], 1.0)
    np.testing.assert_allclose(g.norm_dev, (obs - g.null_mean) / obs.sum())
    shuffled = significance_grid(obs, nulls[::-1])
    np.testing.assert_array_equal(np.nan_to_num(shuffled.z), np.nan_to_num(g.z))
    with pytest.raises(ValueError):
        significance_grid(obs, nulls[:1])


def test_significance_matches_hand_z():
    nulls = [np.array([[v]]) for v in (1.0, 2.0, 3.0, 4.0)]
    g = significance_grid(np.array([[10.0]]), nulls)
    std = np.std([1, 2, 3, 4], ddof=1)
    assert g.z[0, 0] == pytest.approx((10 - 2.5) / std)
    assert g.significant[0, 0]


def test_planted_cohort_is_significant():
    ds, cohort = planted_power_niche(300, 500, seed=4)
    grid, bounds, _ = nullmodel.analyze(ds, q=4, samples=100, seed=0)
    # highest activity quartile x lowest preference quartile
    assert grid.z[3, 0] >= 2
    assert grid.significant[3, 0]


def test_significance_csv(tmp_path, toy):
    grid, _, _ = nullmodel.analyze(toy, q=2, samples=5, seed=0, mode="mean")
    path = tmp_path / "significance.csv"
    write_significance_csv(grid, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_activity,bin_pref,observed,null_mean,null_std,z,norm_dev,significant"
    assert len(lines) == 5
    again = tmp_path / "again.csv"
    write_significance_csv(nullmodel.analyze(toy, q=2, samples=5, seed=0, mode="mean")[0], again)
    assert again.read_bytes() == path.read_bytes()
