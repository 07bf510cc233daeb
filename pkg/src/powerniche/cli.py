"""Command-line entry point: ``powerniche {synth,analyze,train,grid,report,pipeline}``.

Exit codes: 0 ok, 1 input error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .experiment import (ExperimentSpec, ModelConfig, collect_records, dataset_fingerprint, analyze_dataset,
                         run_grid, run_one, run_variants, write_grid, write_report)
from .interactions import DatasetError, load_dataset
from .training import ReweightConfig, TrainingDiverged

logger = logging.getLogger("powerniche")


class InputError(Exception):
    pass


def _write_adjacency(ds, edges, path):
    per_user = [[] for _ in range(ds.n)]
    for u, i in edges:
        per_user[u].append(int(i))
    with open(path, "w", encoding="utf-8") as fh:
        for u, items in enumerate(per_user):
            if items:
                fh.write(" ".join(map(str, [u, *items])) + "\n")


def cmd_synth(args):
    from . import synthetic

    if args.kind == "skewed":
        ds, cohort = synthetic.popularity_skewed(args.users, args.items, seed=args.seed)
    else:
        ds, cohort = synthetic.planted_power_niche(args.users, args.items, seed=args.seed, test_frac=0.2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_adjacency(ds, ds.train_edges, out / "train.txt")
    _write_adjacency(ds, ds.test_edges, out / "test.txt")
    (out / "cohort.txt").write_text("\n".join(map(str, cohort)) + "\n", encoding="utf-8")
    print(f"wrote {ds.n} users, {ds.m} items, {ds.num_train} train / {len(ds.test_edges)} test edges to {out}")


def cmd_analyze(args):
    ds = load_dataset(args.train, args.test)
    summary = analyze_dataset(ds, args.out, args.bins, args.null_samples, args.seed, args.swap_multiplier,
                              args.boundaries, args.workers)
    (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_train(args):
    cfg_path = Path(args.config)
    raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    model_cfg = ModelConfig(**raw.pop("model", {}))
    train_path = args.train or raw.pop("train_path", None)
    test_path = args.test or raw.pop("test_path", None)
    raw.pop("train_path", None), raw.pop("test_path", None)
    if not train_path or not test_path:
        raise InputError("dataset paths missing: pass --train/--test or set train_path/test_path")
    k = raw.pop("k", 20)
    cfg = ReweightConfig(lr=model_cfg.lr, batch_size=model_cfg.batch_size, optimizer=model_cfg.optimizer, **raw)
    ds = load_dataset(train_path, test_path)
    record = run_one(ds, dataset_fingerprint(train_path, test_path), model_cfg, cfg, args.out, k,
                     resume=not args.force)
    print(record.to_json(), end="")


def cmd_grid(args):
    spec = ExperimentSpec.from_json(args.spec)
    winner, rows = run_grid(spec)
    write_grid(rows, winner, Path(spec.output))
    print(json.dumps(winner, indent=2, sort_keys=True))


def cmd_report(args):
    records = collect_records(args.runs)
    if not records:
        raise InputError(f"no record.json under {args.runs}")
    paths = write_report(records, args.out or args.runs)
    for p in paths.values():
        print(p)


def cmd_pipeline(args):
    spec = ExperimentSpec.from_json(args.spec)
    ds = load_dataset(spec.train, spec.test)
    winner, rows = run_grid(spec, ds if spec.selection == "test" else None)
    write_grid(rows, winner, Path(spec.output))
    records = run_variants(spec, winner["alpha"], winner["beta"], ds)
    write_report(records, spec.output)
    print(json.dumps({"winner": winner, "runs": len(records), "output": spec.output}, indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="powerniche", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset in adjacency format")
    s.add_argument("--out", required=True)
    s.add_argument("--kind", choices=["skewed", "planted"], default="skewed")
    s.add_argument("--users", type=int, default=2000)
    s.add_argument("--items", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", help="profiles, activity CCDFs and configuration-model significance")
    a.add_argument("--train", required=True)
    a.add_argument("--test", required=True)
    a.add_argument("--out", default="analysis")
    a.add_argument("--bins", type=int, default=20)
    a.add_argument("--null-samples", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--swap-multiplier", type=float, default=10.0)
    a.add_argument("--boundaries", choices=["quantile", "mean"], default="quantile")
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("train", help="train and evaluate one configuration")
    t.add_argument("--config", required=True, help="train.json")
    t.add_argument("--train")
    t.add_argument("--test")
    t.add_argument("--out", default="runs")
    t.add_argument("--force", action="store_true", help="retrain even if the run exists")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("grid", help="(alpha, beta) grid search for the UI variant")
    g.add_argument("--spec", required=True)
    g.set_defaults(func=cmd_grid)

    r = sub.add_parser("report", help="results/pareto/quadrants CSVs from run records")
    r.add_argument("--runs", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    pl = sub.add_parser("pipeline", help="grid search, final variant runs and report")
    pl.add_argument("--spec", required=True)
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InputError, DatasetError, FileNotFoundError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, RuntimeError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
