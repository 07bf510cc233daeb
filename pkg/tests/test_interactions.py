import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powerniche.interactions import (DatasetError, InteractionDataset, Quadrant, activity_ccdf, assign_quadrants,
                                     load_dataset, pop_preference, pop_preferences, write_ccdf_csv,
                                     write_profiles_csv)

from conftest import A, B, C, write_adjacency


def test_load_remaps_densely(tmp_path):
    train = write_adjacency(tmp_path / "train.txt", [(0, 1, 2), (1, 2)])
    test = write_adjacency(tmp_path / "test.txt", [(0,)])
    ds = load_dataset(train, test)
    assert ds.n == 2
    assert ds.m == 2  # raw items {1, 2}
    assert ds.item_ids.tolist() == [1, 2]
    assert ds.d_u.tolist() == [2, 1]
    ds.check()


def test_load_collapses_duplicates(tmp_path):
    train = write_adjacency(tmp_path / "train.txt", [(0, 1), (0, 1)])
    test = write_adjacency(tmp_path / "test.txt", [(0,)])
    ds = load_dataset(train, test)
    assert ds.train_edges.tolist() == [[0, 0]]
    assert ds.d_u.tolist() == [1]


def test_load_sparse_ids_and_test_items(tmp_path):
    train = write_adjacency(tmp_path / "train.txt", [(10, 500, 7), (3, 7)])
    test = write_adjacency(tmp_path / "test.txt", [(10, 9), (42, 7)])
    ds = load_dataset(train, test)
    assert ds.user_ids.tolist() == [3, 10, 42]
    assert ds.item_ids.tolist() == [7, 9, 500]
    assert ds.d_u.tolist() == [1, 2, 0]
    assert ds.d_i.tolist() == [2, 0, 1]
    assert sorted(map(tuple, ds.test_edges.tolist())) == [(1, 1), (2, 0)]


def test_load_errors(tmp_path):
    good = write_adjacency(tmp_path / "ok.txt", [(0, 1)])
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1\n1 x 3\n")
    with pytest.raises(DatasetError, match=":2:"):
        load_dataset(bad, good)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(empty, good)


def test_orphan_test_user_warns(tmp_path, caplog):
    train = write_adjacency(tmp_path / "train.txt", [(0, 1)])
    test = write_adjacency(tmp_path / "test.txt", [(5, 1)])
    with caplog.at_level(logging.WARNING):
        ds = load_dataset(train, test)
    assert "no train interactions" in caplog.text
    assert len(ds.test_edges) == 1


def test_invalid_edges_rejected():
    with pytest.raises(DatasetError):
        InteractionDataset.from_edges([(0, 5)], n=1, m=2)
    with pytest.raises(DatasetError, match="overlap"):
        InteractionDataset.from_edges([(0, 0)], [(0, 0)], n=1, m=1)


def test_pop_preference_examples(toy):
    ds = InteractionDataset.from_edges([(0, 0), (0, 1)] + [(u, 0) for u in range(1, 10)]
                                       + [(10, 1)], n=11, m=2)
    assert ds.d_i.tolist() == [10, 2]
    assert pop_preference(ds, 0) == 6.0
    single = InteractionDataset.from_edges([(0, 0)] + [(u, 0) for u in range(1, 7)], n=7, m=1)
    assert pop_preference(single, 0) == 7.0
    assert pop_preference(toy, 0) == 2.0


def test_pop_preference_undefined():
    ds = InteractionDataset.from_edges([(0, 0)], n=2, m=1)
    with pytest.raises(DatasetError):
        pop_preference(ds, 1)
    assert np.isnan(pop_preferences(ds)[1])


def test_toy_quadrants_by_hand(toy):
    # d = [2,1,1,1], mean 1.25; p = [2,3,3,1], mean 2.25
    profiles = {p.user: p for p in assign_quadrants(toy)}
    assert profiles[0].quadrant is Quadrant.POWER_NICHE
    assert profiles[1].quadrant is Quadrant.LIGHT_MAINSTREAM
    assert profiles[2].quadrant is Quadrant.LIGHT_MAINSTREAM
    assert profiles[3].quadrant is Quadrant.LIGHT_NICHE
    assert [profiles[u].pop_preference for u in range(4)] == [2.0, 3.0, 3.0, 1.0]


def test_identical_users_tie_to_light_mainstream():
    ds = InteractionDataset.from_edges([(u, u) for u in range(5)], n=5, m=5)
    assert {p.quadrant for p in assign_quadrants(ds)} == {Quadrant.LIGHT_MAINSTREAM}


def test_zero_degree_users_excluded():
    ds = InteractionDataset.from_edges([(0, 0), (0, 1), (2, 0)], [(1, 1)], n=3, m=2)
    profiles = assign_quadrants(ds)
    assert [p.user for p in profiles] == [0, 2]


def test_ccdf_examples(toy):
    ds = InteractionDataset.from_edges(
        [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2), (3, 3), (3, 4)], n=4, m=5)
    assert activity_ccdf(ds, [0, 1, 2, 3]) == [(1, 1.0), (2, 0.75), (5, 0.25)]
    assert activity_ccdf(ds, [3]) == [(5, 1.0)]
    with pytest.raises(DatasetError):
        activity_ccdf(ds, [])


def test_ccdf_niche_tail_with_planted_power_niche_user():
    # mainstream users share one popular item; one heavy user consumes many singletons
    edges = [(u, 0) for u in range(1, 8)] + [(u, 1) for u in range(1, 5)]
    edges += [(0, i) for i in range(2, 12)] + [(0, 0)]
    ds = InteractionDataset.from_edges(edges, n=8, m=12)
    profiles = assign_quadrants(ds)
    niche = [p.user for p in profiles if p.quadrant.is_niche]
    main = [p.user for p in profiles if not p.quadrant.is_niche]
    assert 0 in niche
    xmax = max(ds.d_u)
    niche_curve = dict(activity_ccdf(ds, niche))
    main_curve = dict(activity_ccdf(ds, main))
    assert niche_curve.get(xmax, 0.0) >= main_curve.get(xmax, 0.0)
    assert niche_curve[xmax] > 0


@st.composite
def datasets(draw):
    n = draw(st.integers(1, 8))
    m = draw(st.integers(1, 8))
    edges = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, m - 1)), min_size=1, max_size=n * m))
    return InteractionDataset.from_edges(sorted(edges), n=n, m=m)


@settings(max_examples=80, deadline=None)
@given(datasets(), st.randoms(use_true_random=False))
def test_dataset_properties(ds, rnd):
    ds.check()
    profiles = assign_quadrants(ds)
    assert len(profiles) == int((ds.d_u > 0).sum())
    assert len({p.user for p in profiles}) == len(profiles)
    # relabeling items leaves preferences unchanged
    perm = list(range(ds.m))
    rnd.shuffle(perm)
    relabeled = InteractionDataset.from_edges([(u, perm[i]) for u, i in ds.train_edges], n=ds.n, m=ds.m)
    np.testing.assert_allclose(pop_preferences(relabeled), pop_preferences(ds), equal_nan=True)
    curve = activity_ccdf(ds, [p.user for p in profiles])
    fracs = [f for _, f in curve]
    assert fracs[0] == 1.0
    assert all(0 < f <= 1 for f in fracs)
    assert all(a >= b for a, b in zip(fracs, fracs[1:]))


def test_csv_outputs(tmp_path, toy):
    profiles = assign_quadrants(toy)
    write_profiles_csv(profiles, tmp_path / "profiles.csv")
    lines = (tmp_path / "profiles.csv").read_text().splitlines()
    assert lines[0] == "user_id,d_u,p_u,quadrant"
    assert lines[1] == "0,2,2.0,power_niche"
    write_ccdf_csv({"niche": [(1, 1.0)]}, tmp_path / "ccdf.csv")
    assert (tmp_path / "ccdf.csv").read_text() == "group,x,frac\nniche,1,1.0\n"
