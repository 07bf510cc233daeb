"""Bipartite configuration-model null samples and binned significance grids.

Null graphs are drawn by degree-preserving double-edge swaps: two distinct
edges ``(u1, v1), (u2, v2)`` become ``(u1, v2), (u2, v1)``. Swaps that would
duplicate an existing edge are rejected, so every sample stays a simple
graph with the original user and item degree sequences.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .interactions import InteractionDataset, pop_preferences

logger = logging.getLogger(__name__)

_EMPTY = -1
_HASH_MULT = np.uint64(0x9E3779B97F4A7C15)


@numba.njit(cache=True, nogil=True)
def _slot(key, shift):
    return np.int64((np.uint64(key) * _HASH_MULT) >> np.uint64(shift))


@numba.njit(cache=True, nogil=True)
def _find(table, shift, mask, key):
    i = _slot(key, shift)
    while True:
        k = table[i]
        if k == key or k == _EMPTY:
            return i
        i = (i + 1) & mask


@numba.njit(cache=True, nogil=True)
def _insert(table, shift, mask, key):
    table[_find(table, shift, mask, key)] = key


@numba.njit(cache=True, nogil=True)
def _remove(table, shift, mask, key):
    # linear probing with backward-shift deletion (no tombstones)
    i = _find(table, shift, mask, key)
    table[i] = _EMPTY
    j = i
    while True:
        j = (j + 1) & mask
        k = table[j]
        if k == _EMPTY:
            return
        home = _slot(k, shift)
        if i <= j:
            stays = i < home <= j
        else:
            stays = home > i or home <= j
        if not stays:
            table[i] = k
            table[j] = _EMPTY
            i = j


@numba.njit(cache=True, nogil=True)
def _build_table(eu, ev, m, bits):
    size = 1 << bits
    table = np.full(size, _EMPTY, dtype=np.int64)
    shift = 64 - bits
    for e in range(eu.shape[0]):
        _insert(table, shift, size - 1, eu[e] * m + ev[e])
    return table


@numba.njit(cache=True, nogil=True)
def _swap_chain(eu, ev, table, bits, m, picks_a, picks_b, target):
    """Run swaps over pre-drawn edge pairs until ``target`` are accepted.

    Returns (accepted, attempts consumed).
    """
    shift = 64 - bits
    mask = (1 << bits) - 1
    accepted = 0
    t = 0
    while t < picks_a.shape[0] and accepted < target:
        a = picks_a[t]
        b = picks_b[t]
        t += 1
        u1 = eu[a]
        v1 = ev[a]
        u2 = eu[b]
        v2 = ev[b]
        if u1 == u2 or v1 == v2:
            continue
        k12 = u1 * m + v2
        k21 = u2 * m + v1
        if table[_find(table, shift, mask, k12)] == k12:
            continue
        if table[_find(table, shift, mask, k21)] == k21:
            continue
        _remove(table, shift, mask, u1 * m + v1)
        _remove(table, shift, mask, u2 * m + v2)
        _insert(table, shift, mask, k12)
        _insert(table, shift, mask, k21)
        ev[a] = v2
        ev[b] = v1
        accepted += 1
    return accepted, t


@dataclass
class RewiredEdgeSet:
    edges: np.ndarray  # (E, 2), sorted by (user, item)
    swap_attempts: int
    swap_accepts: int


def rewire(ds: InteractionDataset, swaps: int, seed=None, max_attempts: int | None = None,
           edges: np.ndarray | None = None) -> RewiredEdgeSet:
    """Apply ``swaps`` accepted double-edge swaps to a copy of the train edges.

    Proposals pick two distinct edges uniformly at random. A chain that
    cannot move (e.g. every edge shares one item) stops after
    ``max_attempts`` proposals (default ``100 * swaps + 10_000``) with a
    warning instead of looping forever.
    """
    src = ds.train_edges if edges is None else np.asarray(edges, dtype=np.int64)
    n_edges = len(src)
    if n_edges < 2:
        raise ValueError("rewiring needs at least two edges")
    rng = np.random.default_rng(seed)
    eu = np.ascontiguousarray(src[:, 0], dtype=np.int64)
    ev = np.ascontiguousarray(src[:, 1], dtype=np.int64).copy()
    bits = max(4, math.ceil(math.log2(2 * n_edges)) + 1)
    table = _build_table(eu, ev, np.int64(ds.m), bits)
    if max_attempts is None:
        max_attempts = 100 * swaps + 10_000

    accepted = attempts = 0
    while accepted < swaps and attempts < max_attempts:
        chunk = int(min(max_attempts - attempts, max(2 * (swaps - accepted), 1024), 1 << 20))
        a = rng.integers(0, n_edges, size=chunk)
        b = rng.integers(0, n_edges - 1, size=chunk)
        b += b >= a
        acc, used = _swap_chain(eu, ev, table, bits, np.int64(ds.m), a, b, swaps - accepted)
        accepted += int(acc)
        attempts += int(used)
    if accepted < swaps:
        logger.warning("swap chain stalled: %d of %d swaps accepted after %d attempts",
                       accepted, swaps, attempts)

    out = np.stack([eu, ev], axis=1)
    out = out[np.lexsort((out[:, 1], out[:, 0]))]
    return RewiredEdgeSet(out, attempts, accepted)


def sample_null(ds: InteractionDataset, samples: int, seed=None, swap_multiplier: float = 10,
                workers: int = 1) -> list[RewiredEdgeSet]:
    """Independent null samples, each ``swap_multiplier * E`` accepted swaps from the data.

    Each sample gets its own child seed, so results do not depend on
    ``workers``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    swaps = int(round(swap_multiplier * ds.num_train))
    children = np.random.SeedSequence(seed).spawn(samples)

    def one(ss):
        return rewire(ds, swaps, np.random.default_rng(ss))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, children))
    return [one(ss) for ss in children]


@dataclass
class BinBoundaries:
    """Interior cut points per axis.

    Activity values equal to a cut go to the lower bin, preference values
    equal to a cut go to the upper bin (same convention as the quadrants).
    """

    activity: np.ndarray
    preference: np.ndarray
    mode: str = "quantile"
    merged_activity: int = 0
    merged_preference: int = 0

    @property
    def q(self) -> int:
        return len(self.activity) + 1


def bin_boundaries(ds: InteractionDataset, q: int, mode: str = "quantile") -> BinBoundaries:
    """Cut points from the observed dataset.

    ``mode="quantile"`` uses the k/q quantiles of each axis over users with
    d_u >= 1; ``mode="mean"`` (q=2 only) cuts at the means, reproducing the
    quadrant partition.
    """
    if q < 2:
        raise ValueError("need at least two bins per axis")
    active = ds.d_u > 0
    act = ds.d_u[active].astype(np.float64)
    pref = pop_preferences(ds)[active]
    if mode == "mean":
        if q != 2:
            raise ValueError("mean boundaries are only defined for q=2")
        return BinBoundaries(np.array([act.mean()]), np.array([pref.mean()]), mode)
    if mode != "quantile":
        raise ValueError(f"unknown boundary mode {mode!r}")
    levels = np.arange(1, q) / q
    a_cuts = np.quantile(act, levels)
    p_cuts = np.quantile(pref, levels)
    merged_a = (q - 1) - len(np.unique(a_cuts))
    merged_p = (q - 1) - len(np.unique(p_cuts))
    if merged_a or merged_p:
        logger.warning("q=%d exceeds distinct values: %d activity and %d preference bins merged (left empty)",
                       q, merged_a, merged_p)
    return BinBoundaries(a_cuts, p_cuts, mode, merged_a, merged_p)


def bin_users(ds: InteractionDataset, boundaries: BinBoundaries, edges: np.ndarray | None = None) -> np.ndarray:
    """q x q user counts indexed [activity bin, preference bin].

    ``edges`` may be a rewired edge set; preferences are then recomputed from
    it using the dataset's item degrees (which rewiring preserves).
    """
    if edges is None:
        d_u = ds.d_u
    else:
        d_u = np.bincount(edges[:, 0], minlength=ds.n)
    active = d_u > 0
    pref = pop_preferences(ds, ds.d_i, edges)[active]
    a_bin = np.searchsorted(boundaries.activity, d_u[active], side="left")
    p_bin = np.searchsorted(boundaries.preference, pref, side="right")
    q = boundaries.q
    return np.bincount(a_bin * q + p_bin, minlength=q * q).reshape(q, q)


@dataclass
class SignificanceGrid:
    observed: np.ndarray
    null_mean: np.ndarray
    null_std: np.ndarray
    z: np.ndarray  # NaN where null_std == 0
    norm_dev: np.ndarray
    significant: np.ndarray

    @property
    def q(self) -> int:
        return self.observed.shape[0]

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.z)

    def power_niche_block(self) -> tuple[slice, slice]:
        """Index block of high-activity, low-preference cells."""
        half = self.q // 2
        return slice(self.q - half, self.q), slice(0, half)

    def rows(self):
        for a in range(self.q):
            for p in range(self.q):
                yield (a, p, int(self.observed[a, p]), float(self.null_mean[a, p]),
                       float(self.null_std[a, p]), float(self.z[a, p]),
                       float(self.norm_dev[a, p]), bool(self.significant[a, p]))


def significance_grid(observed: np.ndarray, nulls, threshold: float = 2.0) -> SignificanceGrid:
    observed = np.asarray(observed)
    stack = np.stack([np.asarray(g) for g in nulls])
    if stack.shape[0] < 2:
        raise ValueError("need at least two null samples")
    if stack.shape[1:] != observed.shape:
        raise ValueError("null grids and observed grid differ in shape")
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1)
    z = np.full(observed.shape, np.nan)
    np.divide(observed - mean, std, out=z, where=std > 0)
    total = observed.sum()
    norm_dev = (observed - mean) / total if total else np.zeros(observed.shape)
    significant = np.isfinite(z) & (np.abs(np.nan_to_num(z)) >= threshold)
    return SignificanceGrid(observed, mean, std, z, norm_dev, significant)


def analyze(ds: InteractionDataset, q: int = 20, samples: int = 100, seed=None,
            swap_multiplier: float = 10, mode: str = "quantile",
            workers: int = 1) -> tuple[SignificanceGrid, BinBoundaries, list[RewiredEdgeSet]]:
    """Observed-vs-null grid with boundaries fixed from the observed data."""
    bounds = bin_boundaries(ds, q, mode)
    observed = bin_users(ds, bounds)
    nulls = sample_null(ds, samples, seed, swap_multiplier, workers)
    grids = [bin_users(ds, bounds, s.edges) for s in nulls]
    return significance_grid(observed, grids), bounds, nulls


def write_significance_csv(grid: SignificanceGrid, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_activity", "bin_pref", "observed", "null_mean", "null_std", "z", "norm_dev", "significant"])
        for a, p, obs, mean, std, z, dev, sig in grid.rows():
            w.writerow([a, p, obs, repr(mean), repr(std), "" if math.isnan(z) else repr(z), repr(dev), int(sig)])
