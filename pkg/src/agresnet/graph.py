"""Electrode graph construction and spectral reference tools.

The graph over recording channels is weighted by the absolute Pearson
correlation of their time series; its normalized Laplacian
L = I - D^{-1/2} A D^{-1/2} feeds the spectral convolution, rescaled to
2L/lambda_max - I so the Chebyshev recursion stays bounded.
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np

GRAPH_MAGIC = b"EGR1"

_SYM_TOL = 1e-12


@dataclass(frozen=True)
class ElectrodeGraph:
    """Dense weighted graph over channels with its normalized Laplacian."""

    n_nodes: int
    adjacency: np.ndarray
    laplacian: np.ndarray


@dataclass(frozen=True)
class ScaledLaplacian:
    """Laplacian mapped to 2L/lambda_max - I; eigenvalues land in [-1, 1]."""

    matrix: np.ndarray
    lambda_max: float


def pearson_adjacency(signals: np.ndarray) -> np.ndarray:
    """Absolute Pearson correlation between channel rows, zero diagonal.

    A constant (zero-variance) channel gets weight 0 against all others
    and emits a warning; fewer than 2 time points or channels is a hard
    error.
    """
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2:
        raise ValueError(f"expected channels x time matrix, got shape {signals.shape}")
    n, t = signals.shape
    if t < 2:
        raise ValueError(f"need at least 2 time points to correlate, got {t}")
    if n < 2:
        raise ValueError(f"need at least 2 channels, got {n}")

    centered = signals - signals.mean(axis=1, keepdims=True)
    std = np.sqrt((centered * centered).sum(axis=1))
    flat = std == 0.0
    if flat.any():
        warnings.warn(
            f"{int(flat.sum())} constant channel(s) assigned zero connectivity",
            stacklevel=2,
        )
    denom = np.outer(std, std)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (centered @ centered.T) / denom
    adj = np.abs(corr)
    adj[flat, :] = 0.0
    adj[:, flat] = 0.0
    np.fill_diagonal(adj, 0.0)
    np.clip(adj, 0.0, 1.0, out=adj)
    return adj


def _check_adjacency(adjacency: np.ndarray) -> np.ndarray:
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adjacency.shape}")
    if np.abs(adjacency - adjacency.T).max(initial=0.0) > _SYM_TOL:
        raise ValueError("adjacency must be symmetric")
    if adjacency.size and adjacency.min() < 0:
        raise ValueError("adjacency weights must be nonnegative")
    return adjacency


def normalized_laplacian(adjacency: np.ndarray) -> np.ndarray:
    """L = I - D^{-1/2} A D^{-1/2} with D_ii the row sum of A.

    Zero-degree nodes use the convention D^{-1/2}_ii = 0, which leaves
    the identity row (isolated nodes stay isolated in the spectrum).
    """
    adjacency = _check_adjacency(adjacency)
    degree = adjacency.sum(axis=1)
    inv_sqrt = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)
    lap = np.eye(adjacency.shape[0]) - (inv_sqrt[:, None] * adjacency) * inv_sqrt[None, :]
    return lap


def build_graph(signals: np.ndarray) -> ElectrodeGraph:
    """Pearson adjacency plus its normalized Laplacian in one struct."""
    adjacency = pearson_adjacency(signals)
    return graph_from_adjacency(adjacency)


def graph_from_adjacency(adjacency: np.ndarray) -> ElectrodeGraph:
    adjacency = _check_adjacency(adjacency)
    return ElectrodeGraph(
        n_nodes=adjacency.shape[0],
        adjacency=adjacency,
        laplacian=normalized_laplacian(adjacency),
    )


def max_eigenvalue(matrix: np.ndarray, tol: float = 1e-4, max_iter: int = 2000) -> float:
    """Largest (algebraic) eigenvalue of a symmetric matrix by power iteration.

    The matrix is shifted by its infinity-norm Gershgorin bound so the
    target eigenvalue dominates in magnitude; the Rayleigh quotient is
    iterated to relative tolerance ``tol``. Non-convergence falls back to
    the safe upper bound 2.0 (valid for normalized Laplacians) with a
    warning.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"matrix must be square, got shape {matrix.shape}")
    if np.abs(matrix - matrix.T).max(initial=0.0) > 1e-9:
        raise ValueError("matrix must be symmetric")
    n = matrix.shape[0]
    if n == 1:
        return float(matrix[0, 0])

    shift = float(np.abs(matrix).sum(axis=1).max())  # Gershgorin: M + shift*I is PSD
    shifted = matrix + shift * np.eye(n)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = np.inf
    for _ in range(max_iter):
        w = shifted @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return -shift  # shifted matrix annihilates everything
        v = w / norm
        est = float(v @ (shifted @ v)) - shift
        if abs(est - prev) <= tol * max(abs(est), 1e-12):
            return est
        prev = est
    warnings.warn(
        f"power iteration did not converge in {max_iter} steps; "
        "falling back to the bound 2.0",
        stacklevel=2,
    )
    return 2.0


def scale_laplacian(laplacian: np.ndarray, lambda_max: float) -> ScaledLaplacian:
    """Map L to 2L/lambda_max - I."""
    if lambda_max <= 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    laplacian = np.asarray(laplacian, dtype=np.float64)
    matrix = (2.0 / lambda_max) * laplacian - np.eye(laplacian.shape[0])
    return ScaledLaplacian(matrix=matrix, lambda_max=float(lambda_max))


def scaled_laplacian_for(graph: ElectrodeGraph, tol: float = 1e-4) -> ScaledLaplacian:
    return scale_laplacian(graph.laplacian, max_eigenvalue(graph.laplacian, tol=tol))


def save_graph(path, graph: ElectrodeGraph):
    """Self-describing blob: magic 'EGR1', u32 LE node count, then N^2
    float64 LE adjacency entries (the Laplacian is recomputed on load)."""
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<I", graph.n_nodes))
        fh.write(np.ascontiguousarray(graph.adjacency, dtype="<f8").tobytes())


def load_graph(path) -> ElectrodeGraph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GRAPH_MAGIC:
            raise ValueError(f"bad graph magic {magic!r}, expected {GRAPH_MAGIC!r}")
        (n,) = struct.unpack("<I", fh.read(4))
        payload = fh.read(8 * n * n)
        if len(payload) != 8 * n * n:
            raise ValueError(f"truncated graph blob: expected {n}x{n} adjacency")
        adjacency = np.frombuffer(payload, dtype="<f8").reshape(n, n).copy()
    return graph_from_adjacency(adjacency)
