"""Implicit-feedback datasets, user profiles and activity distributions."""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for unreadable or inconsistent interaction data."""


class Quadrant(str, enum.Enum):
    POWER_MAINSTREAM = "power_mainstream"
    POWER_NICHE = "power_niche"
    LIGHT_MAINSTREAM = "light_mainstream"
    LIGHT_NICHE = "light_niche"

    @property
    def is_power(self) -> bool:
        return self in (Quadrant.POWER_MAINSTREAM, Quadrant.POWER_NICHE)

    @property
    def is_niche(self) -> bool:
        return self in (Quadrant.POWER_NICHE, Quadrant.LIGHT_NICHE)


@dataclass(frozen=True)
class UserProfile:
    user: int
    activity: int
    pop_preference: float
    quadrant: Quadrant


def _edge_array(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return arr.reshape(-1, 2)


def _unique_edges(arr: np.ndarray, m: int) -> np.ndarray:
    if len(arr) == 0:
        return arr
    keys = np.unique(arr[:, 0] * m + arr[:, 1])
    return np.stack([keys // m, keys % m], axis=1)


@dataclass(eq=False)
class InteractionDataset:
    """Binary user-item interactions with a fixed train/test split.

    Edges are stored as ``(k, 2)`` int arrays sorted by (user, item).
    Degrees are computed from train edges only; the object is treated as
    immutable after construction.
    """

    n: int
    m: int
    train_edges: np.ndarray
    test_edges: np.ndarray
    user_ids: np.ndarray | None = None
    item_ids: np.ndarray | None = None
    d_u: np.ndarray = field(init=False)
    d_i: np.ndarray = field(init=False)
    indptr: np.ndarray = field(init=False)

    def __post_init__(self):
        train, test = _edge_array(self.train_edges), _edge_array(self.test_edges)
        for name, e in (("train", train), ("test", test)):
            if len(e) and (e.min() < 0 or e[:, 0].max() >= self.n or e[:, 1].max() >= self.m):
                raise DatasetError(f"{name} edge index out of range for n={self.n}, m={self.m}")
        self.train_edges = _unique_edges(train, max(self.m, 1))
        self.test_edges = _unique_edges(test, max(self.m, 1))
        if len(self.test_edges) and len(self.train_edges):
            tr = self.train_edges[:, 0] * self.m + self.train_edges[:, 1]
            te = self.test_edges[:, 0] * self.m + self.test_edges[:, 1]
            if np.intersect1d(tr, te).size:
                raise DatasetError("train and test edges overlap")
        self.d_u = np.bincount(self.train_edges[:, 0], minlength=self.n).astype(np.int64)
        self.d_i = np.bincount(self.train_edges[:, 1], minlength=self.m).astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(self.d_u)]).astype(np.int64)
        for arr in (self.train_edges, self.test_edges, self.d_u, self.d_i, self.indptr):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, train, test=(), n: int | None = None, m: int | None = None) -> "InteractionDataset":
        train = _edge_array(train)
        test = _edge_array(test)
        both = np.concatenate([train, test])
        if n is None:
            n = int(both[:, 0].max()) + 1 if len(both) else 0
        if m is None:
            m = int(both[:, 1].max()) + 1 if len(both) else 0
        return cls(n=n, m=m, train_edges=train, test_edges=test)

    @property
    def num_train(self) -> int:
        return len(self.train_edges)

    @property
    def train_items(self) -> np.ndarray:
        """Item column of the train edges, grouped per user by ``indptr``."""
        return self.train_edges[:, 1]

    def neighbors(self, u: int) -> np.ndarray:
        return self.train_edges[self.indptr[u]:self.indptr[u + 1], 1]

    def test_neighbors(self) -> list[np.ndarray]:
        cuts = np.searchsorted(self.test_edges[:, 0], np.arange(self.n + 1))
        items = self.test_edges[:, 1]
        return [items[cuts[u]:cuts[u + 1]] for u in range(self.n)]

    def train_matrix(self) -> sp.csr_matrix:
        data = np.ones(self.num_train, dtype=np.float64)
        return sp.csr_matrix((data, self.train_items, self.indptr), shape=(self.n, self.m))

    def with_train(self, edges) -> "InteractionDataset":
        """Same index space and test split, different train edges."""
        return InteractionDataset(self.n, self.m, edges, self.test_edges, self.user_ids, self.item_ids)

    def check(self) -> None:
        assert self.d_u.sum() == self.d_i.sum() == self.num_train
        assert np.all(np.diff(self.indptr) == self.d_u)


def _parse_file(path: Path) -> list[tuple[int, list[int]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                ids = [int(t) for t in tokens]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer token in {line.strip()!r}") from None
            if min(ids) < 0:
                raise DatasetError(f"{path}:{lineno}: negative id")
            rows.append((ids[0], ids[1:]))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    return rows


def load_dataset(train_path, test_path) -> InteractionDataset:
    """Read a pair of adjacency files (``user item item ...`` per line).

    Raw user and item ids are re-indexed densely, in ascending raw-id order,
    over the union of both files. The raw ids are kept on the dataset as
    ``user_ids`` / ``item_ids``.
    """
    train_rows = _parse_file(Path(train_path))
    test_rows = _parse_file(Path(test_path))

    raw_users = sorted({u for u, _ in train_rows} | {u for u, _ in test_rows})
    raw_items = sorted({i for _, its in train_rows + test_rows for i in its})
    uidx = {u: k for k, u in enumerate(raw_users)}
    iidx = {i: k for k, i in enumerate(raw_items)}

    def edges(rows):
        return [(uidx[u], iidx[i]) for u, items in rows for i in items]

    train_users = {u for u, items in train_rows if items}
    orphans = {u for u, items in test_rows if items} - train_users
    if orphans:
        logger.warning("%d test users have no train interactions; their edges are kept", len(orphans))

    train = _unique_edges(_edge_array(edges(train_rows)), max(len(raw_items), 1))
    test = _unique_edges(_edge_array(edges(test_rows)), max(len(raw_items), 1))
    if len(test) and len(train):
        tr_keys = train[:, 0] * len(raw_items) + train[:, 1]
        keep = ~np.isin(test[:, 0] * len(raw_items) + test[:, 1], tr_keys)
        if not keep.all():
            logger.warning("dropping %d test edges that also appear in train", int((~keep).sum()))
            test = test[keep]
    ds = InteractionDataset(
        n=len(raw_users), m=len(raw_items), train_edges=train, test_edges=test,
        user_ids=np.asarray(raw_users, dtype=np.int64), item_ids=np.asarray(raw_items, dtype=np.int64),
    )
    ds.check()
    return ds


def write_idmap(ds: InteractionDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "raw_id", "index"])
        users = ds.user_ids if ds.user_ids is not None else np.arange(ds.n)
        items = ds.item_ids if ds.item_ids is not None else np.arange(ds.m)
        for k, raw in enumerate(users):
            w.writerow(["user", int(raw), k])
        for k, raw in enumerate(items):
            w.writerow(["item", int(raw), k])


def pop_preferences(ds: InteractionDataset, item_degrees: np.ndarray | None = None,
                    edges: np.ndarray | None = None) -> np.ndarray:
    """Mean item degree over each user's train items; NaN where d_u = 0.

    ``edges`` / ``item_degrees`` allow evaluating a rewired edge set against
    the (preserved) item degrees of the original data.
    """
    edges = ds.train_edges if edges is None else edges
    d_i = ds.d_i if item_degrees is None else item_degrees
    totals = np.bincount(edges[:, 0], weights=d_i[edges[:, 1]].astype(np.float64), minlength=ds.n)
    counts = np.bincount(edges[:, 0], minlength=ds.n)
    out = np.full(ds.n, np.nan)
    np.divide(totals, counts, out=out, where=counts > 0)
    return out


def pop_preference(ds: InteractionDataset, u: int) -> float:
    if ds.d_u[u] == 0:
        raise DatasetError(f"user {u} has no train interactions; preference undefined")
    return float(ds.d_i[ds.neighbors(u)].mean())


def quadrant_of(activity: float, preference: float, mean_activity: float, mean_preference: float) -> Quadrant:
    # equality with the mean goes to Light / Mainstream
    power = activity > mean_activity
    niche = preference < mean_preference
    if power:
        return Quadrant.POWER_NICHE if niche else Quadrant.POWER_MAINSTREAM
    return Quadrant.LIGHT_NICHE if niche else Quadrant.LIGHT_MAINSTREAM


def assign_quadrants(ds: InteractionDataset) -> list[UserProfile]:
    """Profiles for every user with at least one train interaction.

    Means are taken over those users only; zero-degree users are skipped.
    """
    active = np.flatnonzero(ds.d_u > 0)
    if active.size == 0:
        raise DatasetError("no user has a train interaction")
    skipped = ds.n - active.size
    if skipped:
        logger.info("excluding %d zero-degree users from quadrant statistics", skipped)
    pref = pop_preferences(ds)
    mean_d = ds.d_u[active].mean()
    mean_p = pref[active].mean()
    return [
        UserProfile(int(u), int(ds.d_u[u]), float(pref[u]),
                    quadrant_of(ds.d_u[u], pref[u], mean_d, mean_p))
        for u in active
    ]


def quadrant_labels(profiles: Sequence[UserProfile], n: int) -> np.ndarray:
    """Per-user quadrant value strings, ``""`` for users without a profile."""
    labels = np.full(n, "", dtype=object)
    for p in profiles:
        labels[p.user] = p.quadrant.value
    return labels


def activity_ccdf(ds: InteractionDataset, group: Iterable[int]) -> list[tuple[int, float]]:
    group = np.fromiter(group, dtype=np.int64)
    if group.size == 0:
        raise DatasetError("empty user group")
    degrees = np.sort(ds.d_u[group])
    xs = np.unique(degrees)
    at_least = group.size - np.searchsorted(degrees, xs, side="left")
    return [(int(x), float(c) / group.size) for x, c in zip(xs, at_least)]


def niche_mainstream_groups(profiles: Sequence[UserProfile]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {"niche": [], "mainstream": []}
    for p in profiles:
        groups["niche" if p.quadrant.is_niche else "mainstream"].append(p.user)
    return groups


def write_profiles_csv(profiles: Sequence[UserProfile], path, ds: InteractionDataset | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "d_u", "p_u", "quadrant"])
        for p in profiles:
            uid = int(ds.user_ids[p.user]) if ds is not None and ds.user_ids is not None else p.user
            w.writerow([uid, p.activity, repr(p.pop_preference), p.quadrant.value])


def write_ccdf_csv(curves: dict[str, list[tuple[int, float]]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "x", "frac"])
        for name, points in curves.items():
            for x, frac in points:
                w.writerow([name, x, repr(frac)])
