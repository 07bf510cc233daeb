import numpy as np
import pytest

from powerniche.interactions import InteractionDataset

A, B, C = 0, 1, 2


@pytest.fixture
def toy():
    """Four users: 0 -> {A, B}, 1 -> {A}, 2 -> {A}, 3 -> {C}."""
    return InteractionDataset.from_edges([(0, A), (0, B), (1, A), (2, A), (3, C)], n=4, m=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_adjacency(path, rows):
    path.write_text("".join(" ".join(map(str, r)) + "\n" for r in rows), encoding="utf-8")
    return path
