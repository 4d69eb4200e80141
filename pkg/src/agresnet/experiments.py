"""Experiment orchestration: graph -> hierarchy -> model -> train -> report.

The electrode graph is always built from the training partition of the
data (one static graph per experiment); coarsening, parameter
initialization, and batch order all derive from the experiment seed, so
a run is reproducible from (seed, config, data).
"""

import os
from dataclasses import dataclass

import numpy as np

from .coarsening import CoarseningHierarchy, graclus_coarsen, permute_node_signals, save_hierarchy
from .dataset import SampleSet, make_split
from .graph import ElectrodeGraph, build_graph, save_graph
from .metrics import MetricsReport, compute_metrics
from .model import AttentionGraphResNet, ModelConfig
from .training import TrainConfig, TrainResult, save_checkpoint, train

EXTRA_CONFIG_KEYS = ("n_levels", "granularity", "zscore", "folds")


def configs_from_mapping(mapping: dict):
    """Split a flat config mapping into model, training, and pipeline keys;
    unknown keys are a hard error (they are almost always typos)."""
    known = set(ModelConfig.CONFIG_KEYS) | set(TrainConfig.CONFIG_KEYS) | set(EXTRA_CONFIG_KEYS)
    unknown = set(mapping) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    extras = {k: mapping[k] for k in EXTRA_CONFIG_KEYS if k in mapping}
    return ModelConfig.from_mapping(mapping), TrainConfig.from_mapping(mapping), extras


def build_pipeline(train_features: np.ndarray, model_cfg: ModelConfig, seed: int,
                   graph: ElectrodeGraph = None,
                   hierarchy: CoarseningHierarchy = None,
                   n_levels: int = None):
    """Static graph from the training signals plus its pooling hierarchy."""
    if graph is None:
        graph = build_graph(train_features.T)
    if hierarchy is None:
        if n_levels is None:
            n_levels = max(model_cfg.n_pool_stages, 1)
        hierarchy = graclus_coarsen(graph, n_levels, seed)
    return graph, hierarchy


def padded_inputs(features: np.ndarray, hierarchy: CoarseningHierarchy) -> np.ndarray:
    return permute_node_signals(features, hierarchy.permutation, hierarchy.masks[0])


@dataclass
class ExperimentResult:
    graph: ElectrodeGraph
    hierarchy: CoarseningHierarchy
    model: AttentionGraphResNet
    train_result: TrainResult
    report: MetricsReport
    confusion: np.ndarray


def run_training_experiment(train_samples: SampleSet, test_samples: SampleSet,
                            model_cfg: ModelConfig, train_cfg: TrainConfig,
                            seed: int = 0, out_dir=None,
                            graph: ElectrodeGraph = None,
                            hierarchy: CoarseningHierarchy = None,
                            n_levels: int = None) -> ExperimentResult:
    """Train on the train set, evaluate the best checkpoint on the test set,
    and (optionally) write every artifact under ``out_dir``."""
    graph, hierarchy = build_pipeline(train_samples.features, model_cfg, seed,
                                      graph=graph, hierarchy=hierarchy,
                                      n_levels=n_levels)
    model = AttentionGraphResNet(model_cfg, hierarchy, seed=seed)
    x_train = padded_inputs(train_samples.features, hierarchy)
    x_test = padded_inputs(test_samples.features, hierarchy)

    log_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "metrics.csv")
        if os.path.exists(log_path):
            os.remove(log_path)
    result = train(model, x_train, train_samples.labels, x_test, test_samples.labels,
                   train_cfg, seed=seed, log_path=log_path)

    predictions = model.predict(x_test)
    report, cm = compute_metrics(predictions, test_samples.labels,
                                 n_classes=model_cfg.n_classes)

    if out_dir is not None:
        from . import reporting

        save_checkpoint(os.path.join(out_dir, "checkpoint.agrn"), model)
        save_graph(os.path.join(out_dir, "graph.egr"), graph)
        save_hierarchy(os.path.join(out_dir, "hierarchy.txt"), hierarchy)
        reporting.plot_curves(out_dir, result.metrics)
        reporting.write_evaluation_outputs(out_dir, report, cm)
    return ExperimentResult(graph=graph, hierarchy=hierarchy, model=model,
                            train_result=result, report=report, confusion=cm)


def run_cross_validation(samples: SampleSet, model_cfg: ModelConfig,
                         train_cfg: TrainConfig, folds: int = 10, seed: int = 0,
                         granularity: str = "sample", out_dir=None):
    """Train one independent model per fold rotation.

    A diverged fold is reported as failed (None entry), never silently
    dropped. Returns (fold reports, summary report, pooled confusion,
    summary stats dict).
    """
    plan = make_split(len(samples), seed, mode="kfold", n_shards=folds,
                      granularity=granularity, trial_index=samples.trial_index)
    fold_reports = []
    pooled_cm = np.zeros((model_cfg.n_classes, model_cfg.n_classes), dtype=np.int64)
    for k, (train_idx, test_idx) in enumerate(plan.folds()):
        fold_train = SampleSet(features=samples.features[train_idx],
                               labels=samples.labels[train_idx])
        fold_test = SampleSet(features=samples.features[test_idx],
                              labels=samples.labels[test_idx])
        try:
            outcome = run_training_experiment(fold_train, fold_test, model_cfg,
                                              train_cfg, seed=seed + k)
            if outcome.train_result.diverged:
                raise FloatingPointError("training diverged")
        except FloatingPointError:
            fold_reports.append(None)
            continue
        fold_reports.append(outcome.report)
        pooled_cm += outcome.confusion

    accs = [r.accuracy for r in fold_reports if r is not None]
    summary_stats = {
        "median": float(np.median(accs)) if accs else float("nan"),
        "mean": float(np.mean(accs)) if accs else float("nan"),
        "max": float(np.max(accs)) if accs else float("nan"),
        "failed_folds": sum(r is None for r in fold_reports),
    }
    if pooled_cm.sum() > 0:
        summary_report, _ = compute_metrics(
            *_predictions_from_cm(pooled_cm), n_classes=model_cfg.n_classes
        )
    else:
        summary_report = MetricsReport(accuracy=float("nan"), macro_f1=float("nan"),
                                       per_class_accuracy=np.full(model_cfg.n_classes,
                                                                  np.nan))
    summary_report.fold_results = fold_reports

    if out_dir is not None:
        from . import reporting

        reporting.write_fold_outputs(out_dir, summary_report, pooled_cm, fold_reports)
    return fold_reports, summary_report, pooled_cm, summary_stats


def _predictions_from_cm(cm: np.ndarray):
    """Expand a confusion matrix back into (predictions, labels) pairs so the
    pooled summary reuses the one metrics path."""
    preds = []
    labels = []
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            preds.extend([j] * int(cm[i, j]))
            labels.extend([i] * int(cm[i, j]))
    return np.asarray(preds), np.asarray(labels)
