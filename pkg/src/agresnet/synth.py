"""Synthetic separable dataset for end-to-end validation.

Four fixed unit-norm node-signal patterns plus Gaussian noise on a
small graph. A nearest-centroid classifier serves as the independent
separability oracle: if it clears 95%, the task is easy enough that the
full network must overfit it.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import SampleSet
from .graph import ElectrodeGraph, build_graph


@dataclass
class SyntheticDataset:
    train: SampleSet
    test: SampleSet
    graph: ElectrodeGraph
    patterns: np.ndarray  # classes x nodes


def _balanced_labels(rng, count, n_classes):
    reps = -(-count // n_classes)
    labels = np.tile(np.arange(n_classes), reps)[:count]
    rng.shuffle(labels)
    return labels


def make_synthetic_dataset(seed: int = 0, n_nodes: int = 8, n_classes: int = 4,
                           n_train: int = 512, n_test: int = 128,
                           noise: float = 0.1) -> SyntheticDataset:
    """Planted-pattern dataset; the graph is the Pearson graph of the
    training signals, mirroring the real pipeline."""
    rng = np.random.default_rng(seed)
    patterns = rng.standard_normal((n_classes, n_nodes))
    patterns /= np.linalg.norm(patterns, axis=1, keepdims=True)

    def draw(count):
        labels = _balanced_labels(rng, count, n_classes)
        features = patterns[labels] + noise * rng.standard_normal((count, n_nodes))
        return SampleSet(features=features, labels=labels)

    train = draw(n_train)
    test = draw(n_test)
    graph = build_graph(train.features.T)
    return SyntheticDataset(train=train, test=test, graph=graph, patterns=patterns)


def nearest_centroid_accuracy(train: SampleSet, test: SampleSet) -> float:
    """Independent separability oracle: per-class training centroids,
    Euclidean nearest-centroid prediction on the test rows."""
    classes = np.unique(train.labels)
    centroids = np.stack([train.features[train.labels == c].mean(axis=0)
                          for c in classes])
    dists = np.linalg.norm(test.features[:, None, :] - centroids[None, :, :], axis=2)
    predicted = classes[np.argmin(dists, axis=1)]
    return float((predicted == test.labels).mean())
