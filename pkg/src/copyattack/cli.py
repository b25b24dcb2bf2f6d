"""Command-line pipeline: synth -> prepare -> pretrain-embeddings ->
train-target -> build-tree -> attack -> report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/divergence
error. Each run writes under a directory named by the config hash.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import pickle
import sys

import numpy as np

from . import dataset as ds
from .engine import AttackError
from .mf import DivergenceError, MFConfig, load_embeddings, save_embeddings, train_mf
from .policy import PolicyBundle
from .suites import (
    COMPARISON_METHODS,
    SuiteConfig,
    build_context,
    evaluate_cell,
    run_method,
    run_suite,
)
from .synth import BenchmarkConfig, make_benchmark, write_benchmark_tsv
from .target import TargetError, fit_target
from .tree import TreeError, build_tree

DEFAULTS = {
    "embed_dim": 8,
    "learning_rate": 0.3,
    "discount": 0.6,
    "budget": 30,
    "pretend_count": 50,
    "query_interval": 3,
    "k_values": "5,10,20",
    "negatives": 100,
    "min_rating": 5,
    "tree_branching": 13,
    "n_target_items": 10,
    "max_target_degree": 10,
    "episodes_per_item": 8,
    "target_kind": "item-knn",
    "seed": 0,
}


def load_config_file(path):
    """Flat key = value text; '#' comments allowed."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    return values


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    # typed parsing
    for key in ("embed_dim", "budget", "pretend_count", "query_interval",
                "negatives", "min_rating", "tree_branching", "n_target_items",
                "max_target_degree", "episodes_per_item", "seed"):
        cfg[key] = int(cfg[key])
    for key in ("learning_rate", "discount"):
        cfg[key] = float(cfg[key])
    if isinstance(cfg["k_values"], str):
        cfg["k_values"] = tuple(int(k) for k in cfg["k_values"].split(","))
    return cfg


def config_digest(cfg):
    blob = json.dumps({k: list(v) if isinstance(v, tuple) else v
                       for k, v in sorted(cfg.items())}).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def cmd_synth(args):
    cfg = BenchmarkConfig(seed=int(args.seed or 0))
    bench = make_benchmark(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_benchmark_tsv(bench, f"{args.out}/target.tsv", f"{args.out}/source.tsv")
    with open(f"{args.out}/meta.json", "w") as fh:
        json.dump({"tail_items": bench.tail_items,
                   "n_strong_users": len(bench.strong_users)}, fh, indent=2)
    print(f"wrote {args.out}/target.tsv and {args.out}/source.tsv")
    return 0


def _bundle_dir(cfg, out):
    d = os.path.join(out, f"run_{config_digest(cfg)}")
    os.makedirs(d, exist_ok=True)
    return d


def cmd_prepare(args):
    cfg = resolve_config(args)
    for path in (args.target_data, args.source_data):
        if not os.path.exists(path):
            print(f"error: input file not found: {path}", file=sys.stderr)
            return 2
    mapping = None
    if args.alignment:
        if not os.path.exists(args.alignment):
            print(f"error: alignment file not found: {args.alignment}", file=sys.stderr)
            return 2
        mapping = {}
        with open(args.alignment) as fh:
            for line in fh:
                if line.strip():
                    src, tgt = line.split()[:2]
                    mapping[src] = tgt
    fmt = "tsv" if args.target_data.endswith(".tsv") else "csv"
    t_records = ds.filter_by_rating(
        ds.load_interactions(args.target_data, fmt=fmt), cfg["min_rating"])
    s_records = ds.filter_by_rating(
        ds.load_interactions(args.source_data, fmt=fmt), cfg["min_rating"])
    dataset = ds.build_cross_domain(t_records, s_records, mapping)
    train, val, test, report = ds.split_dataset(
        dataset.target.records, ds.SplitSpec(rng_seed=cfg["seed"]))
    target_items = ds.select_target_items(
        dataset, cfg["n_target_items"], cfg["max_target_degree"],
        rng_seed=cfg["seed"], train_records=train)
    run_dir = _bundle_dir(cfg, args.out)
    with open(os.path.join(run_dir, "dataset.pkl"), "wb") as fh:
        pickle.dump({"dataset": dataset, "train": train, "val": val,
                     "test": test, "target_items": target_items}, fh)
    report["dataset_hash"] = _hash_file(args.target_data) + _hash_file(args.source_data)
    report["target_items"] = [str(v) for v in target_items]
    with open(os.path.join(run_dir, "split_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"prepared bundle in {run_dir} (dataset hash {report['dataset_hash']})")
    return 0


def _load_bundle(cfg, out):
    run_dir = _bundle_dir(cfg, out)
    path = os.path.join(run_dir, "dataset.pkl")
    if not os.path.exists(path):
        raise FileNotFoundError(f"prepared bundle missing: {path}; run `prepare` first")
    with open(path, "rb") as fh:
        return run_dir, pickle.load(fh)


def cmd_pretrain_embeddings(args):
    cfg = resolve_config(args)
    run_dir, blob = _load_bundle(cfg, args.out)
    mf_cfg = MFConfig(dim=cfg["embed_dim"], learning_rate=cfg["learning_rate"],
                      rng_seed=cfg["seed"])
    table = train_mf([(r.user_id, r.item_id)
                      for r in blob["dataset"].source.records], mf_cfg)
    save_embeddings(table, os.path.join(run_dir, "embeddings.txt"))
    print(f"wrote {run_dir}/embeddings.txt")
    return 0


def cmd_train_target(args):
    cfg = resolve_config(args)
    run_dir, blob = _load_bundle(cfg, args.out)
    model = fit_target(blob["train"], cfg["target_kind"], seed=cfg["seed"])
    model.save(os.path.join(run_dir, "target_model.json"))
    with open(os.path.join(run_dir, "target_model.pkl"), "wb") as fh:
        pickle.dump(model, fh)
    print(f"wrote {run_dir}/target_model.pkl")
    return 0


def cmd_build_tree(args):
    cfg = resolve_config(args)
    run_dir, blob = _load_bundle(cfg, args.out)
    emb_path = os.path.join(run_dir, "embeddings.txt")
    if not os.path.exists(emb_path):
        raise FileNotFoundError(f"embeddings missing: {emb_path}")
    table = load_embeddings(emb_path)
    tree = build_tree(table.user_vectors, cfg["tree_branching"], rng_seed=cfg["seed"])
    with open(os.path.join(run_dir, "tree.json"), "w") as fh:
        fh.write(tree.to_json())
    with open(os.path.join(run_dir, "tree.pkl"), "wb") as fh:
        pickle.dump(tree, fh)
    internal = len(tree.internal_ids())
    print(f"tree: c={tree.branching} d={tree.depth} internal_nodes={internal}")
    return 0


def _suite_config(cfg):
    return SuiteConfig(
        target_kind=cfg["target_kind"], embed_dim=cfg["embed_dim"],
        learning_rate=cfg["learning_rate"], discount=cfg["discount"],
        budget=cfg["budget"], query_interval=cfg["query_interval"],
        pretend_count=cfg["pretend_count"], k_reward=max(cfg["k_values"]),
        k_values=tuple(cfg["k_values"]), negatives=cfg["negatives"],
        n_target_items=cfg["n_target_items"],
        max_target_degree=cfg["max_target_degree"],
        seeds=(cfg["seed"],), episodes_per_item=cfg["episodes_per_item"],
        tree_branching=cfg["tree_branching"], master_seed=cfg["seed"],
    )


def cmd_attack(args):
    cfg = resolve_config(args)
    run_dir, blob = _load_bundle(cfg, args.out)
    method = args.method
    if method not in COMPARISON_METHODS:
        print(f"error: unknown method {method!r}; valid: "
              f"{', '.join(COMPARISON_METHODS)}", file=sys.stderr)
        return 1
    scfg = _suite_config(cfg)
    ctx = build_context(blob["dataset"], scfg, cfg["seed"],
                        target_items=blob["target_items"])
    reports = []
    for v in ctx.target_items:
        per_k, avg_items = evaluate_cell(ctx, method, v)
        _model, report = run_method(ctx, method, v)
        entry = report.to_dict() if report else {"target_item": str(v),
                                                 "method": method}
        entry["uplift"] = {str(k): per_k[k] for k in per_k}
        reports.append(entry)
    path = os.path.join(run_dir, f"attack_{method}.json")
    with open(path, "w") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
    # reward curves as CSV
    curve_path = os.path.join(run_dir, f"attack_{method}_curve.csv")
    with open(curve_path, "w") as fh:
        fh.write("target_item,t,reward\n")
        for entry in reports:
            for t, r in entry.get("reward_curve", []):
                fh.write(f"{entry['target_item']},{t},{r}\n")
    print(f"wrote {path}")
    return 0


def cmd_report(args):
    cfg = resolve_config(args)
    run_dir, blob = _load_bundle(cfg, args.out)
    scfg = _suite_config(cfg)
    rows, manifest = run_suite(args.suite, blob["dataset"], scfg,
                               out_dir=run_dir)
    print(f"wrote {run_dir}/{args.suite}.csv ({len(rows)} rows)")
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", default="runs", help="output root directory")
    for key, default in DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, default=None,
                            help=f"default: {default}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="copyattack",
        description="Black-box recommender injection-attack sandbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark TSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="ingest and split the datasets")
    p.add_argument("--target-data", required=True)
    p.add_argument("--source-data", required=True)
    p.add_argument("--alignment", help="two-column source/target item key file")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("pretrain-embeddings", help="train source-domain MF embeddings")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain_embeddings)

    p = sub.add_parser("train-target", help="fit the target recommender")
    _add_common(p)
    p.set_defaults(func=cmd_train_target)

    p = sub.add_parser("build-tree", help="build the balanced cluster tree")
    _add_common(p)
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("attack", help="run one attack method")
    p.add_argument("--method", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="run an experiment suite")
    p.add_argument("--suite", required=True,
                   choices=["comparison", "depth_sweep", "budget_sweep", "popularity"])
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    try:
        return args.func(args)
    except (ds.ParseError, ds.DatasetError, TargetError, TreeError,
            AttackError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
