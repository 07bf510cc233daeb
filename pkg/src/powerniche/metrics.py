"""Top-k ranking quality and popularity-opportunity bias, overall and per quadrant."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .interactions import InteractionDataset, Quadrant, UserProfile
from .recmodels import EmbeddingModel, ScoreView

logger = logging.getLogger(__name__)


@dataclass
class RankingResult:
    """Rankings of the evaluated users (those with at least one test item).

    ``topk[r]`` holds the top-k unseen items of ``users[r]`` (padded with -1
    when fewer than k items are rankable). ``test_*`` arrays run parallel
    over the test edges of evaluated users; ``positions`` are 1-based ranks
    among the user's rankable (non-train) items.
    """

    k: int
    users: np.ndarray
    topk: np.ndarray
    rankable: np.ndarray
    test_row: np.ndarray
    test_items: np.ndarray
    positions: np.ndarray
    excluded_users: int

    @property
    def test_users(self) -> np.ndarray:
        return self.users[self.test_row]


def rank_items(model, ds: InteractionDataset, k: int = 20, chunk: int = 1024) -> RankingResult:
    view = model if isinstance(model, ScoreView) else ScoreView(model)
    te = ds.test_edges
    users = np.unique(te[:, 0])
    excluded = ds.n - len(users)
    row_of = np.full(ds.n, -1, dtype=np.int64)
    row_of[users] = np.arange(len(users))
    test_row = row_of[te[:, 0]]
    test_items = te[:, 1].copy()
    positions = np.zeros(len(te), dtype=np.int64)
    topk = np.full((len(users), k), -1, dtype=np.int64)
    rankable = (ds.m - ds.d_u[users]).astype(np.int64)

    # test edges are sorted by user, so each chunk of users owns a contiguous run
    cuts = np.searchsorted(test_row, np.arange(0, len(users) + chunk, chunk).clip(max=len(users)))
    for c, lo in enumerate(range(0, len(users), chunk)):
        block = users[lo:lo + chunk]
        scores = np.array(view.score_users(block), dtype=np.float64)
        rows = np.repeat(np.arange(len(block)), ds.d_u[block])
        cols = np.concatenate([ds.neighbors(u) for u in block]) if len(rows) else np.empty(0, np.int64)
        scores[rows, cols] = -np.inf
        order = np.argsort(-scores, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(ds.m)[None, :].repeat(len(block), 0), axis=1)
        kk = min(k, ds.m)
        top = order[:, :kk]
        valid = np.arange(kk)[None, :] < rankable[lo:lo + len(block), None]
        topk[lo:lo + len(block), :kk] = np.where(valid, top, -1)
        e0, e1 = cuts[c], cuts[c + 1]
        positions[e0:e1] = rank[test_row[e0:e1] - lo, test_items[e0:e1]] + 1
    return RankingResult(k, users, topk, rankable, test_row, test_items, positions, excluded)


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2))


def per_user_metrics(rr: RankingResult) -> dict[str, np.ndarray]:
    k = rr.k
    n_eval = len(rr.users)
    n_test = np.bincount(rr.test_row, minlength=n_eval)
    hit = rr.positions <= k
    hits = np.bincount(rr.test_row, weights=hit, minlength=n_eval)
    disc = _discounts(k)
    dcg = np.bincount(rr.test_row[hit], weights=disc[rr.positions[hit] - 1], minlength=n_eval)
    idcg = np.concatenate([[0.0], np.cumsum(disc)])[np.minimum(n_test, k)]
    with np.errstate(invalid="ignore", divide="ignore"):
        return {
            "recall": hits / n_test,
            "precision": hits / k,
            "ndcg": np.where(idcg > 0, dcg / np.where(idcg > 0, idcg, 1.0), 0.0),
        }


def recall_precision_ndcg(rr: RankingResult, ds: InteractionDataset | None = None, k: int | None = None,
                          mask: np.ndarray | None = None) -> tuple[float, float, float]:
    """Means over evaluated users (optionally a boolean subset over ``rr.users``)."""
    if k is not None and k != rr.k:
        raise ValueError(f"ranking was computed for k={rr.k}")
    m = per_user_metrics(rr)
    sel = slice(None) if mask is None else mask
    if len(rr.users) == 0 or (mask is not None and not mask.any()):
        return float("nan"), float("nan"), float("nan")
    return float(m["recall"][sel].mean()), float(m["precision"][sel].mean()), float(m["ndcg"][sel].mean())


def rank_quality(rr: RankingResult) -> np.ndarray:
    """Per test edge, 1 for the top rankable slot down to 0 for the last."""
    M = rr.rankable[rr.test_row]
    out = np.ones(len(rr.positions))
    many = M > 1
    out[many] = 1.0 - (rr.positions[many] - 1) / (M[many] - 1)
    return out


def _correlation(x, y, method: str) -> tuple[float, bool]:
    if method == "spearman":
        x, y = rankdata(x), rankdata(y)
    elif method != "pearson":
        raise ValueError(f"unknown correlation {method!r}")
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    y = np.asarray(y, dtype=np.float64) - np.mean(y)
    sx, sy = np.sqrt(x @ x), np.sqrt(y @ y)
    if sx == 0 or sy == 0:
        return 0.0, True
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0)), False


def popularity_opportunity_bias(rr: RankingResult, ds: InteractionDataset, edge_mask: np.ndarray | None = None,
                                method: str = "pearson") -> tuple[float, bool]:
    """Correlation between train popularity and mean rank quality per test item.

    Returns ``(bias, degenerate)``; degenerate results (fewer than two items
    or zero variance) are reported as 0.
    """
    q = rank_quality(rr)
    items = rr.test_items
    if edge_mask is not None:
        q, items = q[edge_mask], items[edge_mask]
    if len(items) == 0:
        return 0.0, True
    present, inv = np.unique(items, return_inverse=True)
    if len(present) < 2:
        return 0.0, True
    q_item = np.bincount(inv, weights=q) / np.bincount(inv)
    return _correlation(ds.d_i[present], q_item, method)


@dataclass
class EvalReport:
    recall: float | None
    precision: float | None
    ndcg: float | None
    bias: float | None
    users: int
    bias_degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _report(rr, ds, user_mask, method) -> EvalReport:
    count = int(user_mask.sum())
    if count == 0:
        return EvalReport(None, None, None, None, 0, True)
    r, p, n = recall_precision_ndcg(rr, mask=user_mask)
    bias, degenerate = popularity_opportunity_bias(rr, ds, user_mask[rr.test_row], method)
    return EvalReport(r, p, n, bias, count, degenerate)


def evaluate(rr: RankingResult, ds: InteractionDataset, method: str = "pearson") -> EvalReport:
    return _report(rr, ds, np.ones(len(rr.users), dtype=bool), method)


def disaggregate(rr: RankingResult, ds: InteractionDataset, profiles: Sequence[UserProfile],
                 method: str = "pearson") -> dict[str, EvalReport]:
    """One report per quadrant, restricting users (and their test edges) to that quadrant.

    Evaluated users without a profile (no train interactions) are gathered
    under ``"unassigned"`` when present.
    """
    label = np.full(ds.n, "unassigned", dtype=object)
    for p in profiles:
        label[p.user] = p.quadrant.value
    ev = label[rr.users]
    out = {q.value: _report(rr, ds, ev == q.value, method) for q in Quadrant}
    if (ev == "unassigned").any():
        out["unassigned"] = _report(rr, ds, ev == "unassigned", method)
    return out
