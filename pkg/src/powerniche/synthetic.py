"""Synthetic implicit-feedback data with a planted power-niche cohort."""

from __future__ import annotations

import numpy as np

from .interactions import InteractionDataset


def random_dataset(n: int, m: int, density: float, seed=None, test_frac: float = 0.0,
                   min_items: int = 1) -> InteractionDataset:
    """Bernoulli(density) interactions; every user keeps at least ``min_items`` train items."""
    rng = np.random.default_rng(seed)
    adj = rng.random((n, m)) < density
    for u in range(n):
        if adj[u].sum() < min_items:
            adj[u, rng.choice(m, min_items, replace=False)] = True
    train, test = [], []
    for u in range(n):
        items = np.flatnonzero(adj[u])
        rng.shuffle(items)
        n_test = int(round(test_frac * len(items)))
        n_test = min(n_test, max(len(items) - min_items, 0))
        test += [(u, i) for i in items[:n_test]]
        train += [(u, i) for i in items[n_test:]]
    return InteractionDataset.from_edges(train, test, n=n, m=m)


def _zipf_weights(m: int, exponent: float, rng) -> np.ndarray:
    w = np.arange(1, m + 1, dtype=np.float64) ** -exponent
    return rng.permutation(w / w.sum())


def _draw_items(rng, probs: np.ndarray, k: int) -> np.ndarray:
    k = min(k, np.count_nonzero(probs))
    # Gumbel top-k = sequential sampling without replacement
    keys = np.log(probs, where=probs > 0, out=np.full(probs.shape, -np.inf)) + rng.gumbel(size=probs.shape)
    return np.argpartition(-keys, k - 1)[:k] if k else np.empty(0, np.int64)


def _split(rng, per_user: list[np.ndarray], test_frac: float, n: int, m: int) -> InteractionDataset:
    train, test = [], []
    for u, items in enumerate(per_user):
        items = rng.permutation(items)
        n_test = int(np.floor(test_frac * len(items))) if len(items) > 1 else 0
        test.extend((u, int(i)) for i in items[:n_test])
        train.extend((u, int(i)) for i in items[n_test:])
    return InteractionDataset.from_edges(train, test, n=n, m=m)


def planted_power_niche(n: int = 500, m: int = 800, cohort_frac: float = 0.2, seed=None,
                        base_activity: float = 8.0, cohort_activity: float = 30.0,
                        niche_share: float = 0.8, zipf: float = 1.0,
                        test_frac: float = 0.0) -> tuple[InteractionDataset, np.ndarray]:
    """Popularity-driven users plus a high-activity cohort wired to bottom-quartile items.

    Ordinary users draw items in proportion to a Zipf popularity weight. Each
    cohort user takes ``niche_share`` of its interactions uniformly from the
    quarter of items with the lowest weight. Returns the dataset and the
    cohort's user indices.
    """
    rng = np.random.default_rng(seed)
    pop = _zipf_weights(m, zipf, rng)
    bottom = np.argsort(pop, kind="stable")[: m // 4]
    cohort = np.sort(rng.choice(n, int(round(cohort_frac * n)), replace=False))
    in_cohort = np.zeros(n, dtype=bool)
    in_cohort[cohort] = True
    niche_probs = np.zeros(m)
    niche_probs[bottom] = 1.0 / len(bottom)

    per_user = []
    for u in range(n):
        mean = cohort_activity if in_cohort[u] else base_activity
        k = int(np.clip(rng.poisson(mean), 1, m // 2))
        if in_cohort[u]:
            k_niche = rng.binomial(k, niche_share)
            a = _draw_items(rng, niche_probs, k_niche)
            rest = pop.copy()
            rest[a] = 0.0
            b = _draw_items(rng, rest / rest.sum(), k - len(a))
            per_user.append(np.concatenate([a, b]))
        else:
            per_user.append(_draw_items(rng, pop, k))
    return _split(rng, per_user, test_frac, n, m), cohort


def popularity_skewed(n: int = 2000, m: int = 1000, topics: int = 10, cohort_frac: float = 0.15,
                      seed=None, zipf: float = 1.0, base_activity: float = 12.0,
                      cohort_activity: float = 48.0, niche_exponent: float = -0.5,
                      topic_focus: float = 0.85, test_frac: float = 0.2) -> tuple[InteractionDataset, np.ndarray]:
    """Topic-structured data with power-law item popularity and a power-niche cohort.

    Every item has a topic and a Zipf popularity weight; every user has a
    home topic. A user picks items with probability proportional to
    ``topic_affinity * popularity ** gamma`` where gamma is 1 for ordinary
    users and ``niche_exponent`` for the cohort, whose activity is also
    higher. A ``test_frac`` share of each user's items is held out.
    """
    rng = np.random.default_rng(seed)
    pop = _zipf_weights(m, zipf, rng)
    item_topic = rng.integers(0, topics, size=m)
    user_topic = rng.integers(0, topics, size=n)
    cohort = np.sort(rng.choice(n, int(round(cohort_frac * n)), replace=False))
    in_cohort = np.zeros(n, dtype=bool)
    in_cohort[cohort] = True

    off_topic = (1.0 - topic_focus) / max(topics - 1, 1)
    per_user = []
    for u in range(n):
        affinity = np.where(item_topic == user_topic[u], topic_focus, off_topic)
        gamma = niche_exponent if in_cohort[u] else 1.0
        probs = affinity * pop ** gamma
        mean = cohort_activity if in_cohort[u] else base_activity
        k = int(np.clip(rng.negative_binomial(2, 2 / (2 + mean)), 2, m // 4))
        per_user.append(_draw_items(rng, probs / probs.sum(), k))
    return _split(rng, per_user, test_frac, n, m), cohort
