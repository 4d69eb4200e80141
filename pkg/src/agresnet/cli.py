"""Command-line interface.

Subcommands: build-graph, coarsen, synth-data, train, evaluate,
cross-validate. Every subcommand accepts --config, --seed,
--dataset-dir, --out-dir, and --precision; report-producing commands
write text, CSV, and PNG outputs under --out-dir with deterministic
names. Exit codes: 0 success, 1 runtime failure (one diagnostic line on
stderr), 2 usage errors.
"""

import argparse
import os
import sys

import numpy as np

from .autodiff import load_tensors, set_default_dtype
from .coarsening import graclus_coarsen, load_hierarchy, save_hierarchy
from .config import load_config_file
from .dataset import (
    SampleSet,
    extract_samples,
    load_corpus,
    load_samples,
    make_split,
    save_samples,
    zscore_channels,
)
from .experiments import (
    configs_from_mapping,
    padded_inputs,
    run_cross_validation,
    run_training_experiment,
)
from .graph import build_graph, load_graph, save_graph
from .metrics import compute_metrics, format_report
from .model import AttentionGraphResNet
from .reporting import write_evaluation_outputs
from .synth import make_synthetic_dataset, nearest_centroid_accuracy


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key/value configuration file")
    common.add_argument("--seed", type=int, default=0, help="experiment seed")
    common.add_argument("--dataset-dir", help="corpus root of EDF recordings")
    common.add_argument("--out-dir", default=".", help="where outputs are written")
    common.add_argument("--precision", choices=("f32", "f64"), default="f64",
                        help="floating-point width for model tensors")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agresnet",
        description="attention-weighted graph residual network toolkit",
    )
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("build-graph", parents=[common],
                       help="signals -> adjacency/Laplacian blob")
    p.add_argument("--samples", help="sample cache (.smp) supplying the signals")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("coarsen", parents=[common],
                       help="graph -> multilevel pooling hierarchy file")
    p.add_argument("--graph", required=True, help="graph blob (.egr)")
    p.add_argument("--levels", type=int, default=6, help="coarsening levels")
    p.set_defaults(func=cmd_coarsen)

    p = sub.add_parser("synth-data", parents=[common],
                       help="emit the oracle-validated synthetic dataset")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--samples", help="training sample cache (.smp)")
    p.add_argument("--test-samples", help="held-out sample cache (.smp)")
    p.add_argument("--graph", help="reuse an existing graph blob")
    p.add_argument("--hierarchy", help="reuse an existing hierarchy file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="checkpoint + data -> metrics report")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint (.agrn)")
    p.add_argument("--samples", help="evaluation sample cache (.smp)")
    p.add_argument("--graph", help="graph blob (defaults to sibling graph.egr)")
    p.add_argument("--hierarchy", help="hierarchy file (defaults to sibling hierarchy.txt)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross-validate", parents=[common],
                       help="k-fold cross-validation with per-fold models")
    p.add_argument("--samples", help="sample cache (.smp) covering the full dataset")
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_cross_validate)
    return parser


def _load_configs(args):
    mapping = load_config_file(args.config) if args.config else {}
    return configs_from_mapping(mapping)


def _resolve_samples(args, extras) -> SampleSet:
    if getattr(args, "samples", None):
        samples = load_samples(args.samples)
    elif args.dataset_dir:
        samples = extract_samples(load_corpus(args.dataset_dir))
    else:
        raise ValueError("no data source: pass --samples or --dataset-dir")
    if extras.get("zscore"):
        samples = zscore_channels(samples)
    return samples


def cmd_build_graph(args):
    _, _, extras = _load_configs(args)
    samples = _resolve_samples(args, extras)
    graph = build_graph(samples.features.T)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "graph.egr")
    save_graph(path, graph)
    print(f"wrote {path} ({graph.n_nodes} nodes)")
    return 0


def cmd_coarsen(args):
    graph = load_graph(args.graph)
    hierarchy = graclus_coarsen(graph, args.levels, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "hierarchy.txt")
    save_hierarchy(path, hierarchy)
    sizes = [g.n_nodes for g in hierarchy.levels]
    print(f"wrote {path} (padded level sizes {sizes})")
    return 0


def cmd_synth_data(args):
    data = make_synthetic_dataset(seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.smp")
    test_path = os.path.join(args.out_dir, "test.smp")
    graph_path = os.path.join(args.out_dir, "graph.egr")
    save_samples(train_path, data.train)
    save_samples(test_path, data.test)
    save_graph(graph_path, data.graph)
    oracle = nearest_centroid_accuracy(data.train, data.test)
    print(f"wrote {train_path}, {test_path}, {graph_path}")
    print(f"nearest-centroid oracle accuracy {oracle:.4f}")
    return 0


def cmd_train(args):
    set_default_dtype(args.precision)
    model_cfg, train_cfg, extras = _load_configs(args)
    if args.test_samples:
        train_samples = _resolve_samples(args, extras)
        test_samples = load_samples(args.test_samples)
        if extras.get("zscore"):
            test_samples = zscore_channels(test_samples)
    else:
        samples = _resolve_samples(args, extras)
        plan = make_split(len(samples), args.seed, mode="holdout",
                          granularity=extras.get("granularity", "sample"),
                          trial_index=samples.trial_index)
        train_samples = SampleSet(features=samples.features[plan.train_indices],
                                  labels=samples.labels[plan.train_indices])
        test_samples = SampleSet(features=samples.features[plan.test_indices],
                                 labels=samples.labels[plan.test_indices])
    graph = load_graph(args.graph) if args.graph else None
    hierarchy = None
    if args.hierarchy:
        if graph is None:
            raise ValueError("--hierarchy requires --graph (it stores structure only)")
        hierarchy = load_hierarchy(args.hierarchy, graph)
    outcome = run_training_experiment(
        train_samples, test_samples, model_cfg, train_cfg, seed=args.seed,
        out_dir=args.out_dir, graph=graph, hierarchy=hierarchy,
        n_levels=extras.get("n_levels"),
    )
    if outcome.train_result.diverged:
        print("training diverged; last good checkpoint retained", file=sys.stderr)
    print(f"best test accuracy {outcome.train_result.best_test_acc:.4f} "
          f"after {outcome.train_result.steps} steps")
    print(f"artifacts under {args.out_dir}")
    return 0


def cmd_evaluate(args):
    set_default_dtype(args.precision)
    model_cfg, _, extras = _load_configs(args)
    sibling = os.path.dirname(os.path.abspath(args.checkpoint))
    graph_path = args.graph or os.path.join(sibling, "graph.egr")
    hierarchy_path = args.hierarchy or os.path.join(sibling, "hierarchy.txt")
    graph = load_graph(graph_path)
    hierarchy = load_hierarchy(hierarchy_path, graph)
    model = AttentionGraphResNet(model_cfg, hierarchy, seed=args.seed)
    model.params.load_arrays(load_tensors(args.checkpoint))
    samples = _resolve_samples(args, extras)
    predictions = model.predict(padded_inputs(samples.features, hierarchy))
    report, cm = compute_metrics(predictions, samples.labels,
                                 n_classes=model_cfg.n_classes)
    write_evaluation_outputs(args.out_dir, report, cm)
    print(format_report(report, cm), end="")
    print(f"report files under {args.out_dir}")
    return 0


def cmd_cross_validate(args):
    set_default_dtype(args.precision)
    model_cfg, train_cfg, extras = _load_configs(args)
    samples = _resolve_samples(args, extras)
    folds = extras.get("folds", args.folds)
    _, summary, cm, stats = run_cross_validation(
        samples, model_cfg, train_cfg, folds=folds, seed=args.seed,
        granularity=extras.get("granularity", "sample"), out_dir=args.out_dir,
    )
    print(format_report(summary, cm), end="")
    print(f"fold accuracy median {stats['median']:.4f} mean {stats['mean']:.4f} "
          f"max {stats['max']:.4f} (failed folds: {stats['failed_folds']})")
    print(f"report files under {args.out_dir}")
    return 0


def cli(argv=None) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures exit 1 with one diagnostic line
        print(f"agresnet: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
