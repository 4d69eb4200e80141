"""Multilevel greedy graph coarsening and fast-pooling support.

Each level pairs nodes by the local normalized-cut gain
w_ij(1/d_i + 1/d_j); merged clusters keep the summed crossing weights.
A balanced binary tree over the hierarchy yields a node permutation in
which every coarse node owns two contiguous fine slots, so graph
max-pooling becomes pair-pooling over a reordered signal. Slots without
a real owner are padding ("fake") nodes tracked by per-level masks and
excluded from every max.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, masked_pair_max
from .graph import ElectrodeGraph, graph_from_adjacency

HIERARCHY_HEADER = "agresnet-hierarchy v1"


@dataclass(frozen=True)
class CoarseningHierarchy:
    """Coarsened graphs plus the permutation enabling contiguous pooling.

    ``levels[k]`` is the level-k graph after permuting to pooled order and
    padding with isolated fake nodes, so ``levels[k].n_nodes`` halves
    exactly at each step. ``masks[k]`` marks the fake positions of that
    ordering; ``perms[k]`` maps permuted slot -> original level-k index
    (fake ids start at the real node count).
    """

    levels: list
    parents: list
    perms: list
    masks: list
    n_fake_per_level: list
    real_counts: list

    @property
    def permutation(self) -> np.ndarray:
        """Level-0 slot -> source node index (fake slots >= real count)."""
        return self.perms[0]

    @property
    def n_levels(self) -> int:
        return len(self.parents)

    @property
    def padded_n(self) -> int:
        return len(self.perms[0])


def _greedy_matching(adjacency: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One coarsening level: visit unmarked nodes in random order, pair each
    with the unmarked neighbor of highest w_ij(1/d_i + 1/d_j); ties go to
    the lowest index and neighborless nodes carry over as singletons."""
    n = adjacency.shape[0]
    degree = adjacency.sum(axis=1)
    inv_deg = np.where(degree > 0, 1.0 / np.where(degree > 0, degree, 1.0), 0.0)
    matched = np.zeros(n, dtype=bool)
    parents = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for i in rng.permutation(n):
        if matched[i]:
            continue
        weights = adjacency[i].copy()
        weights[matched] = 0.0
        weights[i] = 0.0
        if weights.max(initial=0.0) > 0.0:
            scores = np.where(weights > 0.0, weights * (inv_deg[i] + inv_deg), -1.0)
            j = int(np.argmax(scores))  # first max -> lowest index on ties
            parents[j] = next_id
            matched[j] = True
        parents[i] = next_id
        matched[i] = True
        next_id += 1
    return parents


def _coarse_adjacency(adjacency: np.ndarray, parents: np.ndarray) -> np.ndarray:
    m = int(parents.max()) + 1
    assign = np.zeros((adjacency.shape[0], m))
    assign[np.arange(adjacency.shape[0]), parents] = 1.0
    coarse = assign.T @ adjacency @ assign
    np.fill_diagonal(coarse, 0.0)  # collapsed intra-cluster weight is dropped
    return coarse


def build_permutation(parents: list, n_finest: int):
    """Balanced-binary-tree ordering from the parent maps.

    Coarsest nodes take indices 0..M-1; each node with index i at one
    level owns slots 2i and 2i+1 at the next finer level, with singleton
    children and fake parents padded by fake nodes. Returns per-level
    (perm, fake mask) pairs, finest first.
    """
    counts = [n_finest]
    for p in parents:
        counts.append(int(p.max()) + 1)
    depth = len(parents)
    perms = [None] * (depth + 1)
    perms[depth] = np.arange(counts[depth], dtype=np.int64)
    for k in range(depth - 1, -1, -1):
        children = [[] for _ in range(counts[k + 1])]
        for fine, coarse in enumerate(parents[k]):
            children[coarse].append(fine)
        next_fake = counts[k]
        order = []
        for coarse_idx in perms[k + 1]:
            kids = children[coarse_idx] if coarse_idx < counts[k + 1] else []
            slots = list(kids)
            while len(slots) < 2:
                slots.append(next_fake)
                next_fake += 1
            order.extend(slots)
        perms[k] = np.asarray(order, dtype=np.int64)
    masks = [perms[k] >= counts[k] for k in range(depth + 1)]
    return perms, masks, counts


def _pad_and_permute(adjacency: np.ndarray, perm: np.ndarray) -> np.ndarray:
    n = adjacency.shape[0]
    padded = np.zeros((len(perm), len(perm)))
    real_slots = np.flatnonzero(perm < n)
    source = perm[real_slots]
    padded[np.ix_(real_slots, real_slots)] = adjacency[np.ix_(source, source)]
    return padded


def graclus_coarsen(graph: ElectrodeGraph, n_levels: int, seed: int) -> CoarseningHierarchy:
    """Coarsen ``n_levels`` times and assemble the pooling hierarchy.

    The visit order of the greedy matcher is drawn from a generator
    seeded with ``seed``, so repeated runs are identical.
    """
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")
    if graph.n_nodes < 2:
        raise ValueError(f"coarsening needs >= 2 nodes, got {graph.n_nodes}")
    rng = np.random.default_rng(seed)
    adjacencies = [graph.adjacency]
    parents = []
    for _ in range(n_levels):
        current = adjacencies[-1]
        if current.shape[0] < 1:
            raise ValueError("coarsest graph would be empty")
        level_parents = _greedy_matching(current, rng)
        parents.append(level_parents)
        adjacencies.append(_coarse_adjacency(current, level_parents))
    return _assemble(adjacencies, parents)


def _assemble(adjacencies, parents) -> CoarseningHierarchy:
    perms, masks, counts = build_permutation(parents, adjacencies[0].shape[0])
    levels = [
        graph_from_adjacency(_pad_and_permute(adj, perm))
        for adj, perm in zip(adjacencies, perms)
    ]
    fakes = [int(mask.sum()) for mask in masks]
    return CoarseningHierarchy(
        levels=levels,
        parents=parents,
        perms=perms,
        masks=masks,
        n_fake_per_level=fakes,
        real_counts=counts,
    )


def permute_node_signals(x: np.ndarray, perm: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Reorder batch x N signals into pooled order; fake slots carry 0."""
    x = np.asarray(x)
    n_real = int((~mask).sum())
    if x.shape[1] != n_real:
        raise ValueError(
            f"signal has {x.shape[1]} nodes but permutation expects {n_real} real nodes"
        )
    out_shape = (x.shape[0], len(perm)) + x.shape[2:]
    out = np.zeros(out_shape, dtype=x.dtype)
    real_slots = np.flatnonzero(~mask)
    out[:, real_slots] = x[:, perm[real_slots]]
    return out


def pool_pairs_max(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Numpy view of the pair max-pool: max over the non-fake members of
    each slot pair, 0 where both slots are fake."""
    return masked_pair_max(Tensor(np.asarray(x, dtype=np.float64)), mask).data


# ---------------------------------------------------------------------------
# structured-text serialization (structure only; graphs rebuild from the
# base adjacency)


def _format_ints(values) -> str:
    return ",".join(str(int(v)) for v in values)


def save_hierarchy(path, hierarchy: CoarseningHierarchy):
    lines = [HIERARCHY_HEADER]
    lines.append(f"n_levels = {hierarchy.n_levels}")
    lines.append(f"real_counts = {_format_ints(hierarchy.real_counts)}")
    for k, p in enumerate(hierarchy.parents):
        lines.append(f"parents[{k}] = {_format_ints(p)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_hierarchy(path, graph: ElectrodeGraph) -> CoarseningHierarchy:
    """Rebuild a hierarchy from its structure file plus the base graph."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != HIERARCHY_HEADER:
        raise ValueError(f"not a hierarchy file: missing header {HIERARCHY_HEADER!r}")
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    n_levels = int(fields["n_levels"])
    counts = [int(v) for v in fields["real_counts"].split(",")]
    if counts[0] != graph.n_nodes:
        raise ValueError(
            f"hierarchy was built for {counts[0]} nodes but graph has {graph.n_nodes}"
        )
    parents = []
    for k in range(n_levels):
        parents.append(np.array([int(v) for v in fields[f"parents[{k}]"].split(",")],
                                dtype=np.int64))
    adjacencies = [graph.adjacency]
    for p in parents:
        adjacencies.append(_coarse_adjacency(adjacencies[-1], p))
    return _assemble(adjacencies, parents)
