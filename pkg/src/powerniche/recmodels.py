"""Embedding base models: matrix factorization and light graph convolution.

Both models keep layer-0 embeddings ``user_emb`` (n x d) and ``item_emb``
(m x d). MF scores are ``sigmoid(u . v)``; LGN propagates the embeddings over
the symmetrically normalized user-item graph, averages the layer outputs and
scores by the raw inner product. Gradients are analytic (numpy only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ._kernels import scatter_add_rows, scatter_add_scaled
from .interactions import InteractionDataset

MF = "mf"
LGN = "lgn"


@dataclass(eq=False)
class EmbeddingModel:
    kind: str
    user_emb: np.ndarray
    item_emb: np.ndarray
    layers: int = 3
    reg_lambda: float = 1e-4
    sigmoid_score: bool = True  # MF only; False scores by the raw dot product
    graph: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in (MF, LGN):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == LGN and self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.user_emb.shape[1] != self.item_emb.shape[1]:
            raise ValueError("user and item embeddings differ in dimension")

    @property
    def dim(self) -> int:
        return self.user_emb.shape[1]

    @property
    def n(self) -> int:
        return self.user_emb.shape[0]

    @property
    def m(self) -> int:
        return self.item_emb.shape[0]

    def attach(self, ds: InteractionDataset) -> "EmbeddingModel":
        """Bind the propagation graph of ``ds`` (no-op for MF)."""
        if self.kind == LGN:
            self.graph = normalized_adjacency(ds)
        return self

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.kind, self.user_emb.copy(), self.item_emb.copy(), self.layers,
                              self.reg_lambda, self.sigmoid_score, self.graph)

    def finite(self) -> bool:
        return bool(np.isfinite(self.user_emb).all() and np.isfinite(self.item_emb).all())


def init_model(kind: str, n: int, m: int, dim: int = 64, seed=None, std: float = 0.1,
               layers: int = 3, reg_lambda: float = 1e-4, sigmoid_score: bool = True,
               ds: InteractionDataset | None = None) -> EmbeddingModel:
    rng = np.random.default_rng(seed)
    model = EmbeddingModel(kind, rng.normal(0.0, std, (n, dim)), rng.normal(0.0, std, (m, dim)),
                           layers, reg_lambda, sigmoid_score)
    if ds is not None:
        model.attach(ds)
    return model


def normalized_adjacency(ds: InteractionDataset) -> sp.csr_matrix:
    """(n+m) x (n+m) bipartite adjacency with weight 1/sqrt(d_u d_i) per train edge."""
    u, i = ds.train_edges[:, 0], ds.train_edges[:, 1]
    w = 1.0 / np.sqrt(ds.d_u[u].astype(np.float64) * ds.d_i[i])
    rows = np.concatenate([u, ds.n + i])
    cols = np.concatenate([ds.n + i, u])
    size = ds.n + ds.m
    return sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(size, size))


def _layer_mean(graph: sp.csr_matrix, x: np.ndarray, layers: int) -> np.ndarray:
    acc = x.copy()
    cur = x
    for _ in range(layers):
        cur = graph @ cur
        acc += cur
    return acc / (layers + 1)


def lgn_propagate(model: EmbeddingModel, ds: InteractionDataset | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Final (user, item) embeddings: mean of layers 0..L of graph propagation."""
    if model.kind != LGN:
        raise ValueError("propagation is only defined for LGN models")
    graph = model.graph if ds is None else normalized_adjacency(ds)
    if graph is None:
        raise ValueError("LGN model has no graph; call attach(ds)")
    out = _layer_mean(graph, np.vstack([model.user_emb, model.item_emb]), model.layers)
    return out[:model.n], out[model.n:]


def lgn_backprop(model: EmbeddingModel, grad_user: np.ndarray, grad_item: np.ndarray):
    # the propagation operator is a polynomial in a symmetric matrix, hence self-adjoint
    out = _layer_mean(model.graph, np.vstack([grad_user, grad_item]), model.layers)
    return out[:model.n], out[model.n:]


def final_embeddings(model: EmbeddingModel) -> tuple[np.ndarray, np.ndarray]:
    if model.kind == LGN:
        return lgn_propagate(model)
    return model.user_emb, model.item_emb


class ScoreView:
    """Immutable scoring snapshot of a model.

    For LGN the propagated embeddings are computed once at construction.
    """

    def __init__(self, model: EmbeddingModel):
        users, items = final_embeddings(model)
        self.users = users.copy()
        self.items = items.copy()
        self.apply_sigmoid = model.kind == MF and model.sigmoid_score

    def _out(self, x):
        return expit(x) if self.apply_sigmoid else x

    def score(self, u, i):
        return self._out(np.sum(self.users[u] * self.items[i], axis=-1))

    def score_users(self, users) -> np.ndarray:
        """Dense (len(users), m) score block."""
        return self._out(self.users[users] @ self.items.T)


def mf_score(model: EmbeddingModel, u: int, i: int) -> float:
    if model.kind != MF:
        raise ValueError("mf_score needs an MF model")
    x = float(model.user_emb[u] @ model.item_emb[i])
    return float(expit(x)) if model.sigmoid_score else x


def l2_penalty(model: EmbeddingModel, users=(), items=()) -> float:
    """reg_lambda * 1/2 * sum of squared layer-0 norms; ids count once per occurrence."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    sq = np.sum(model.user_emb[users] ** 2) + np.sum(model.item_emb[items] ** 2)
    return float(model.reg_lambda * 0.5 * sq)


def neg_log_sigmoid(x):
    return np.logaddexp(0.0, -x)


def bpr_terms(model: EmbeddingModel, users, pos, neg, weights=None):
    """Weighted BPR loss and layer-0 gradients for a batch of triplets.

    Returns ``(losses, grad_user, grad_item)`` where ``losses[t]`` is
    ``w_t * -ln sigmoid(yhat_ui - yhat_uj)`` and the gradients are those of
    ``losses.sum()`` (dense, same shapes as the embeddings).
    """
    users = np.asarray(users, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.int64)
    neg = np.asarray(neg, dtype=np.int64)
    w = np.ones(len(users)) if weights is None else np.asarray(weights, dtype=np.float64)

    if model.kind == LGN:
        U, V = lgn_propagate(model)
    else:
        U, V = model.user_emb, model.item_emb
    eu, ei, ej = U[users], V[pos], V[neg]
    x_i = np.sum(eu * ei, axis=1)
    x_j = np.sum(eu * ej, axis=1)
    if model.kind == MF and model.sigmoid_score:
        y_i, y_j = expit(x_i), expit(x_j)
        dy_i, dy_j = y_i * (1 - y_i), y_j * (1 - y_j)
    else:
        y_i, y_j = x_i, x_j
        dy_i = dy_j = 1.0
    diff = y_i - y_j
    losses = w * neg_log_sigmoid(diff)
    g = w * (expit(diff) - 1.0)  # d loss / d diff
    g_i = (g * dy_i)[:, None]
    g_j = (-g * dy_j)[:, None]

    grad_u = np.zeros_like(U)
    grad_v = np.zeros_like(V)
    scatter_add_rows(grad_u, users, g_i * ei + g_j * ej)
    scatter_add_scaled(grad_v, pos, eu, g_i[:, 0])
    scatter_add_scaled(grad_v, neg, eu, g_j[:, 0])
    if model.kind == LGN:
        grad_u, grad_v = lgn_backprop(model, grad_u, grad_v)
    return losses, grad_u, grad_v


def score_grad(model: EmbeddingModel, u: int, i: int, j: int, weight: float = 1.0):
    """Gradient of one triplet's loss term w.r.t. all layer-0 parameters."""
    _, gu, gv = bpr_terms(model, [u], [i], [j], [weight])
    return gu, gv


def add_l2_grad(model: EmbeddingModel, users, items, grad_user, grad_item) -> None:
    """Accumulate the gradient of ``l2_penalty(model, users, items)`` in place."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    scatter_add_scaled(grad_user, users, model.user_emb[users], np.full(len(users), model.reg_lambda))
    scatter_add_scaled(grad_item, items, model.item_emb[items], np.full(len(items), model.reg_lambda))


def save_checkpoint(model: EmbeddingModel, path, seed=None, epoch: int = 0) -> None:
    """Write ``<path>.npz`` (embeddings) and ``<path>.json`` (header)."""
    path = Path(path)
    np.savez(path.with_suffix(".npz"), user_emb=model.user_emb, item_emb=model.item_emb)
    header = {"kind": model.kind, "d": model.dim, "layers": model.layers, "seed": seed, "epoch": epoch,
              "reg_lambda": model.reg_lambda, "sigmoid_score": model.sigmoid_score}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path, ds: InteractionDataset | None = None) -> tuple[EmbeddingModel, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    arrays = np.load(path.with_suffix(".npz"))
    model = EmbeddingModel(header["kind"], arrays["user_emb"], arrays["item_emb"], header["layers"],
                           header.get("reg_lambda", 1e-4), header.get("sigmoid_score", True))
    if ds is not None:
        model.attach(ds)
    return model, header
