"""Experiment harness: single runs, the (alpha, beta) grid, and CSV reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nullmodel
from .interactions import (InteractionDataset, Quadrant, activity_ccdf, assign_quadrants, load_dataset,
                           niche_mainstream_groups, write_ccdf_csv, write_idmap, write_profiles_csv)
from .metrics import disaggregate, evaluate, rank_items
from .recmodels import init_model, save_checkpoint
from .training import ReweightConfig, Variant, train, write_loss_csv

logger = logging.getLogger(__name__)

ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
BETAS = (0.0, -0.5, -1.0)
RECALL_TIE = 1e-4

VARIANT_LABELS = {
    Variant.VANILLA: "",
    Variant.UI: "-UI",
    Variant.ONLY_ITEM: "-OnlyItem",
    Variant.ONLY_USER: "-OnlyUser",
}


@dataclass
class ModelConfig:
    kind: str = "mf"
    dim: int = 64
    layers: int = 3
    lr: float = 1e-3
    reg_lambda: float = 1e-4
    batch_size: int = 2048
    sigmoid_score: bool = True
    optimizer: str = "adam"
    init_std: float = 0.1


@dataclass
class RunRecord:
    config_hash: str
    dataset: str
    model: str
    variant: str
    alpha: float
    beta: float
    seed: int
    epochs: int
    k: int
    overall: dict
    quadrants: dict
    evaluated_users: int
    excluded_users: int
    loss_trace: str
    wallclock_s: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def dataset_fingerprint(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
        h.update(b"\0")
    return h.hexdigest()[:16]


def config_hash(dataset: str, model: ModelConfig, cfg: ReweightConfig, extra: dict | None = None) -> str:
    payload = {"dataset": dataset, "model": asdict(model), "train": cfg.to_dict(), "extra": extra or {}}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def split_validation(ds: InteractionDataset, frac: float, seed=None) -> InteractionDataset:
    """Hold out ``frac`` of each user's train edges as the new test split.

    Users keep at least one train edge.
    """
    rng = np.random.default_rng(seed)
    keep, held = [], []
    for u in range(ds.n):
        items = rng.permutation(ds.neighbors(u))
        k = min(int(np.floor(frac * len(items))), max(len(items) - 1, 0))
        held.extend((u, int(i)) for i in items[:k])
        keep.extend((u, int(i)) for i in items[k:])
    return InteractionDataset(ds.n, ds.m, keep, held, ds.user_ids, ds.item_ids)


def evaluate_model(model, ds: InteractionDataset, k: int = 20, correlation: str = "pearson") -> dict:
    rr = rank_items(model, ds, k)
    overall = evaluate(rr, ds, correlation)
    quads = disaggregate(rr, ds, assign_quadrants(ds), correlation)
    return {
        "k": k,
        "overall": overall.to_dict(),
        "quadrants": {name: rep.to_dict() for name, rep in quads.items()},
        "evaluated_users": len(rr.users),
        "excluded_users": rr.excluded_users,
    }


def run_one(ds: InteractionDataset, dataset: str, model_cfg: ModelConfig, cfg: ReweightConfig,
            out_dir, k: int = 20, eval_ds: InteractionDataset | None = None, resume: bool = True,
            correlation: str = "pearson") -> RunRecord:
    """Train one configuration and persist record, eval, loss trace and checkpoint.

    Runs live in ``out_dir/<config hash>``; an existing record is reused when
    ``resume`` is set. ``eval_ds`` (default ``ds``) supplies the split that
    is ranked against.
    """
    eval_ds = ds if eval_ds is None else eval_ds
    chash = config_hash(dataset, model_cfg, cfg, {"k": k, "eval_edges": len(eval_ds.test_edges),
                                                  "correlation": correlation})
    run_dir = Path(out_dir) / chash
    record_path = run_dir / "record.json"
    if resume and record_path.exists():
        return RunRecord.load(record_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "train.json").write_text(
        json.dumps({**cfg.to_dict(), "model": asdict(model_cfg)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")

    start = time.perf_counter()
    model = init_model(model_cfg.kind, ds.n, ds.m, model_cfg.dim, seed=[cfg.seed, 1], std=model_cfg.init_std,
                       layers=model_cfg.layers, reg_lambda=model_cfg.reg_lambda,
                       sigmoid_score=model_cfg.sigmoid_score, ds=ds)
    result = train(cfg, ds, model)
    write_loss_csv(result.trace, run_dir / "loss.csv")
    save_checkpoint(model, run_dir / "model", cfg.seed, cfg.epochs)
    ev = evaluate_model(model, eval_ds, k, correlation)
    (run_dir / "eval.json").write_text(json.dumps(ev, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    record = RunRecord(
        config_hash=chash, dataset=dataset, model=model_cfg.kind, variant=cfg.variant.value,
        alpha=cfg.alpha, beta=cfg.beta, seed=cfg.seed, epochs=cfg.epochs, k=k,
        overall=ev["overall"], quadrants=ev["quadrants"], evaluated_users=ev["evaluated_users"],
        excluded_users=ev["excluded_users"], loss_trace=str(run_dir / "loss.csv"),
        wallclock_s=round(time.perf_counter() - start, 3),
    )
    record_path.write_text(record.to_json(), encoding="utf-8")
    return record


# --- grid search ---------------------------------------------------------------


def select_best(rows, tol: float = RECALL_TIE) -> dict:
    """Winner of a grid table (dicts with alpha, beta, recall).

    Highest recall wins; every cell within ``tol`` of the best counts as a
    tie, broken by lower beta and then lower alpha.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty grid")
    best = max(r["recall"] for r in rows)
    tied = [r for r in rows if best - r["recall"] < tol]
    return min(tied, key=lambda r: (r["beta"], r["alpha"]))


@dataclass
class ExperimentSpec:
    train: str
    test: str
    name: str = ""
    output: str = "runs"
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 400
    seeds: list = field(default_factory=lambda: [0])
    alphas: list = field(default_factory=lambda: list(ALPHAS))
    betas: list = field(default_factory=lambda: list(BETAS))
    variants: list = field(default_factory=lambda: [v.value for v in Variant])
    k: int = 20
    selection: str = "test"  # or "validation"
    validation_frac: float = 0.1
    correlation: str = "pearson"

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if not self.alphas or not self.betas or not self.seeds:
            raise ValueError("alphas, betas and seeds must be nonempty")
        for a in self.alphas:
            for b in self.betas:
                ReweightConfig(Variant.UI, a, b)
        self.variants = [Variant(v).value for v in self.variants]
        if self.selection not in ("test", "validation"):
            raise ValueError("selection must be 'test' or 'validation'")
        if not self.name:
            self.name = Path(self.train).parent.name or "dataset"

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        spec = cls(**raw)
        # relative data paths resolve against the spec file
        for attr in ("train", "test", "output"):
            p = Path(getattr(spec, attr))
            if not p.is_absolute():
                setattr(spec, attr, str(path.parent / p))
        return spec

    def reweight(self, variant, alpha=0.0, beta=0.0, seed=0) -> ReweightConfig:
        return ReweightConfig.for_variant(variant, alpha, beta, epochs=self.epochs, seed=seed,
                                          lr=self.model.lr, batch_size=self.model.batch_size,
                                          optimizer=self.model.optimizer)


def run_grid(spec: ExperimentSpec, ds: InteractionDataset | None = None) -> tuple[dict, list[dict]]:
    """Evaluate every (alpha, beta) cell of the UI variant and pick the winner.

    Cell recall is averaged over ``spec.seeds``. With ``selection='validation'``
    the cells are trained on a reduced train split and scored on held-out
    train edges.
    """
    ds = ds if ds is not None else load_dataset(spec.train, spec.test)
    fp = dataset_fingerprint(spec.train, spec.test)
    fit_ds, eval_ds = ds, ds
    if spec.selection == "validation":
        fit_ds = split_validation(ds, spec.validation_frac, seed=0)
        eval_ds = fit_ds
    out = Path(spec.output) / "grid"
    rows = []
    for a in spec.alphas:
        for b in spec.betas:
            recs = [run_one(fit_ds, f"{fp}:{spec.selection}", spec.model,
                            spec.reweight(Variant.UI, a, b, s), out, spec.k, eval_ds,
                            correlation=spec.correlation)
                    for s in spec.seeds]
            rows.append({
                "alpha": float(a), "beta": float(b),
                "recall": float(np.mean([r.overall["recall"] for r in recs])),
                "precision": float(np.mean([r.overall["precision"] for r in recs])),
                "ndcg": float(np.mean([r.overall["ndcg"] for r in recs])),
                "bias": float(np.mean([r.overall["bias"] for r in recs])),
                "runs": ";".join(r.config_hash for r in recs),
            })
    winner = select_best(rows)
    return winner, rows


def write_grid(rows, winner, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "grid.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "beta", "recall", "precision", "ndcg", "bias", "selected", "runs"])
        for r in rows:
            sel = int(r["alpha"] == winner["alpha"] and r["beta"] == winner["beta"])
            w.writerow([r["alpha"], r["beta"], repr(r["recall"]), repr(r["precision"]), repr(r["ndcg"]),
                        repr(r["bias"]), sel, r["runs"]])
    (out_dir / "winner.json").write_text(json.dumps(winner, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_grid(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [{"alpha": float(r["alpha"]), "beta": float(r["beta"]), "recall": float(r["recall"])}
                for r in csv.DictReader(fh)]


def run_variants(spec: ExperimentSpec, alpha: float, beta: float,
                 ds: InteractionDataset | None = None) -> list[RunRecord]:
    """Final runs of every requested variant, with UI at the selected (alpha, beta)."""
    ds = ds if ds is not None else load_dataset(spec.train, spec.test)
    fp = dataset_fingerprint(spec.train, spec.test)
    records = []
    for v in spec.variants:
        for s in spec.seeds:
            a, b = (alpha, beta) if Variant(v) is Variant.UI else (0.0, 0.0)
            records.append(run_one(ds, fp, spec.model, spec.reweight(v, a, b, s),
                                   Path(spec.output) / "runs", spec.k, correlation=spec.correlation))
    return records


# --- reports --------------------------------------------------------------------


def pct_change(new: float, base: float) -> str:
    if base == 0 or base is None or new is None:
        return ""
    return f"{100.0 * (new - base) / base:+.1f}%"


METRICS = ("recall", "precision", "ndcg", "bias")


def _mean_reports(records) -> dict:
    """Average overall and quadrant metrics over seeds, keyed by (dataset, model, variant, alpha, beta)."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.dataset, r.model, r.variant, r.alpha, r.beta)].append(r)
    out = {}
    for key, recs in groups.items():
        def avg(getter):
            vals = [getter(r) for r in recs]
            vals = [v for v in vals if v is not None]
            return float(np.mean(vals)) if vals else None
        overall = {m: avg(lambda r, m=m: r.overall[m]) for m in METRICS}
        quads = {}
        for q in [q.value for q in Quadrant]:
            quads[q] = {m: avg(lambda r, m=m, q=q: r.quadrants.get(q, {}).get(m)) for m in METRICS}
            quads[q]["users"] = recs[0].quadrants.get(q, {}).get("users", 0)
        out[key] = {"overall": overall, "quadrants": quads, "seeds": len(recs)}
    return out


def _sort_key(key):
    dataset, model, variant, alpha, beta = key
    order = [v.value for v in Variant]
    return dataset, model, order.index(variant), alpha, beta


def build_report(records: list[RunRecord]) -> dict[str, list[list]]:
    """Rows for results.csv, pareto.csv and quadrants.csv (headers first)."""
    if not records:
        raise ValueError("no run records")
    means = _mean_reports(records)
    baselines = {(k[0], k[1]): v for k, v in means.items() if k[2] == Variant.VANILLA.value}
    if len(baselines) < len({(k[0], k[1]) for k in means}):
        logger.warning("missing Vanilla baseline for some dataset/model pairs; %% change left empty")

    results = [["dataset", "model", "variant", "alpha", "beta", "seeds", *METRICS,
                *(f"{m}_change" for m in METRICS)]]
    pareto = [["dataset", "model", "variant", "alpha", "beta", "recall", "bias"]]
    quadrants = [["dataset", "model", "variant", "quadrant", "users", "recall", "bias",
                  "recall_delta", "bias_delta"]]
    for key in sorted(means, key=_sort_key):
        dataset, model, variant, alpha, beta = key
        cur = means[key]
        base = baselines.get((dataset, model))
        label = model.upper() + VARIANT_LABELS[Variant(variant)]
        ov = cur["overall"]
        changes = [pct_change(ov[m], base["overall"][m]) if base else "" for m in METRICS]
        results.append([dataset, label, variant, alpha, beta, cur["seeds"],
                        *(_fmt(ov[m]) for m in METRICS), *changes])
        pareto.append([dataset, label, variant, alpha, beta, _fmt(ov["recall"]), _fmt(ov["bias"])])
        for q in [q.value for q in Quadrant]:
            qm = cur["quadrants"][q]
            bq = base["quadrants"][q] if base else None

            def delta(m):
                if bq is None or qm[m] is None or bq[m] is None:
                    return ""
                return _fmt(qm[m] - bq[m])
            quadrants.append([dataset, label, variant, q, qm["users"], _fmt(qm["recall"]), _fmt(qm["bias"]),
                              delta("recall"), delta("bias")])
    return {"results.csv": results, "pareto.csv": pareto, "quadrants.csv": quadrants}


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def write_report(records: list[RunRecord], out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, rows in build_report(records).items():
        paths[name] = out_dir / name
        with open(paths[name], "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    return paths


def collect_records(runs_dir) -> list[RunRecord]:
    return [RunRecord.load(p) for p in sorted(Path(runs_dir).rglob("record.json"))]


# --- dataset analysis -----------------------------------------------------------


def analyze_dataset(ds: InteractionDataset, out_dir, bins: int = 20, null_samples: int = 100, seed: int = 0,
                    swap_multiplier: float = 10, boundaries: str = "quantile", workers: int = 1) -> dict:
    """Profiles, activity CCDFs and the observed-vs-null significance grid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    profiles = assign_quadrants(ds)
    write_profiles_csv(profiles, out_dir / "profiles.csv", ds)
    write_idmap(ds, out_dir / "idmap.csv")
    groups = niche_mainstream_groups(profiles)
    curves = {name: activity_ccdf(ds, users) for name, users in groups.items() if users}
    write_ccdf_csv(curves, out_dir / "ccdf.csv")
    grid, bounds, nulls = nullmodel.analyze(ds, bins, null_samples, seed, swap_multiplier, boundaries, workers)
    nullmodel.write_significance_csv(grid, out_dir / "significance.csv")
    rows, cols = grid.power_niche_block()
    block = grid.z[rows, cols]
    counts = defaultdict(int)
    for p in profiles:
        counts[p.quadrant.value] += 1
    return {
        "users": ds.n, "items": ds.m, "train_edges": ds.num_train,
        "excluded_zero_degree": int((ds.d_u == 0).sum()),
        "quadrants": dict(sorted(counts.items())),
        "bins": bins, "null_samples": null_samples, "boundary_mode": bounds.mode,
        "merged_bins": {"activity": bounds.merged_activity, "preference": bounds.merged_preference},
        "swap_accepts_min": min(s.swap_accepts for s in nulls),
        "power_niche_cells_significant_positive": int(np.sum(np.nan_to_num(block) >= 2)),
        "power_niche_cells": int(block.size),
    }
