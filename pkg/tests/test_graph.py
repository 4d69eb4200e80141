"""Graph construction: Pearson adjacency against the textbook formula,
Laplacian against hand values and a dense eigensolver."""

import numpy as np
import pytest

from agresnet.graph import (
    build_graph,
    graph_from_adjacency,
    load_graph,
    max_eigenvalue,
    normalized_laplacian,
    pearson_adjacency,
    save_graph,
    scale_laplacian,
)


def random_adjacency(rng, n, density=1.0):
    a = rng.uniform(0, 1, (n, n))
    a = (a + a.T) / 2
    if density < 1.0:
        keep = rng.uniform(size=(n, n)) < density
        keep = np.triu(keep, 1)
        a *= keep + keep.T
    np.fill_diagonal(a, 0.0)
    return a


def pearson_oracle(signals):
    """Direct covariance / sigma-product evaluation, entry by entry."""
    n = signals.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            xi, xj = signals[i], signals[j]
            cov = np.mean((xi - xi.mean()) * (xj - xj.mean()))
            denom = xi.std() * xj.std()
            out[i, j] = abs(cov / denom) if denom > 0 else 0.0
    return out


class TestPearsonAdjacency:
    def test_identical_channels(self):
        rng = np.random.default_rng(0)
        row = rng.standard_normal(50)
        adj = pearson_adjacency(np.vstack([row, row]))
        assert adj[0, 1] == pytest.approx(1.0)
        assert adj[0, 0] == 0.0

    def test_negated_channel(self):
        rng = np.random.default_rng(1)
        row = rng.standard_normal(50)
        adj = pearson_adjacency(np.vstack([row, -row]))
        assert adj[0, 1] == pytest.approx(1.0)

    def test_matches_textbook_formula(self):
        rng = np.random.default_rng(2)
        signals = rng.standard_normal((4, 200))
        adj = pearson_adjacency(signals)
        np.testing.assert_allclose(adj, pearson_oracle(signals), atol=1e-12)

    def test_constant_channel_zero_with_warning(self):
        rng = np.random.default_rng(3)
        signals = rng.standard_normal((3, 40))
        signals[1] = 7.0
        with pytest.warns(UserWarning, match="constant"):
            adj = pearson_adjacency(signals)
        assert np.all(adj[1] == 0.0) and np.all(adj[:, 1] == 0.0)

    def test_too_few_time_points(self):
        with pytest.raises(ValueError, match="time points"):
            pearson_adjacency(np.zeros((3, 1)))

    def test_affine_rescaling_invariance(self):
        """Per-channel positive-slope affine maps leave the weights unchanged."""
        rng = np.random.default_rng(4)
        signals = rng.standard_normal((5, 100))
        slopes = rng.uniform(0.1, 5.0, size=(5, 1))
        offsets = rng.standard_normal((5, 1))
        base = pearson_adjacency(signals)
        scaled = pearson_adjacency(slopes * signals + offsets)
        np.testing.assert_allclose(scaled, base, atol=1e-10)


class TestNormalizedLaplacian:
    def test_two_node_edge(self):
        lap = normalized_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(lap, [[1.0, -1.0], [-1.0, 1.0]])

    def test_empty_adjacency_gives_identity(self):
        lap = normalized_laplacian(np.zeros((4, 4)))
        np.testing.assert_array_equal(lap, np.eye(4))

    def test_complete_three_node(self):
        adj = np.ones((3, 3)) - np.eye(3)
        lap = normalized_laplacian(adj)
        np.testing.assert_allclose(np.diag(lap), np.ones(3))
        np.testing.assert_allclose(lap[0, 1], -0.5)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(lap)),
                                   [0.0, 1.5, 1.5], atol=1e-12)

    def test_asymmetric_is_error(self):
        bad = np.array([[0.0, 1.0], [0.5, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            normalized_laplacian(bad)

    def test_negative_is_error(self):
        bad = np.array([[0.0, -1.0], [-1.0, 0.0]])
        with pytest.raises(ValueError, match="nonnegative"):
            normalized_laplacian(bad)

    def test_positive_semidefinite_and_bounded(self):
        """Eigenvalues of random normalized Laplacians live in [0, 2]."""
        rng = np.random.default_rng(5)
        for n in (2, 5, 9, 16):
            lap = normalized_laplacian(random_adjacency(rng, n, density=0.6))
            eig = np.linalg.eigvalsh(lap)
            assert eig.min() >= -1e-9
            assert eig.max() <= 2.0 + 1e-9

    def test_isolated_node_identity_row(self):
        adj = np.zeros((3, 3))
        adj[0, 1] = adj[1, 0] = 0.7
        lap = normalized_laplacian(adj)
        np.testing.assert_array_equal(lap[2], [0.0, 0.0, 1.0])

    def test_permutation_consistency(self):
        """Permuting channels permutes the Laplacian, bitwise, for weights
        whose degree sums are exact in floating point."""
        rng = np.random.default_rng(6)
        n = 6
        adj = rng.integers(0, 4, size=(n, n)) / 4.0  # dyadic weights: exact sums
        adj = np.triu(adj, 1)
        adj = adj + adj.T
        perm = rng.permutation(n)
        lap = normalized_laplacian(adj)
        lap_perm = normalized_laplacian(adj[np.ix_(perm, perm)])
        np.testing.assert_array_equal(lap_perm, lap[np.ix_(perm, perm)])


class TestMaxEigenvalue:
    def test_identity(self):
        assert max_eigenvalue(np.eye(5), tol=1e-6) == pytest.approx(1.0, rel=1e-6)

    def test_known_two_node_spectrum(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert max_eigenvalue(lap, tol=1e-6) == pytest.approx(2.0, rel=1e-6)

    def test_random_symmetric_matches_eigensolver(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            m = rng.standard_normal((8, 8))
            m = (m + m.T) / 2
            expected = np.linalg.eigvalsh(m).max()
            assert max_eigenvalue(m, tol=1e-6) == pytest.approx(expected, rel=1e-4)

    def test_asymmetric_is_error(self):
        with pytest.raises(ValueError, match="symmetric"):
            max_eigenvalue(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestScaledLaplacian:
    def test_identity_maps_to_zero(self):
        scaled = scale_laplacian(np.eye(3), 2.0)
        np.testing.assert_array_equal(scaled.matrix, np.zeros((3, 3)))

    def test_zero_maps_to_negative_identity(self):
        scaled = scale_laplacian(np.zeros((3, 3)), 2.0)
        np.testing.assert_array_equal(scaled.matrix, -np.eye(3))

    def test_two_node_edge_spectrum(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        scaled = scale_laplacian(lap, 2.0)
        np.testing.assert_allclose(scaled.matrix, [[0.0, -1.0], [-1.0, 0.0]])
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(scaled.matrix)),
                                   [-1.0, 1.0], atol=1e-12)

    def test_nonpositive_lambda_is_error(self):
        with pytest.raises(ValueError, match="positive"):
            scale_laplacian(np.eye(2), 0.0)

    def test_scale_unscale_roundtrip(self):
        rng = np.random.default_rng(8)
        lap = normalized_laplacian(random_adjacency(rng, 7))
        lmax = max_eigenvalue(lap, tol=1e-6)
        scaled = scale_laplacian(lap, lmax)
        recovered = (scaled.matrix + np.eye(7)) * (scaled.lambda_max / 2.0)
        np.testing.assert_allclose(recovered, lap, atol=1e-12)

    def test_eigenvalues_within_unit_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            lap = normalized_laplacian(random_adjacency(rng, 10, density=0.5))
            lmax = max(max_eigenvalue(lap, tol=1e-6), np.linalg.eigvalsh(lap).max())
            eig = np.linalg.eigvalsh(scale_laplacian(lap, lmax).matrix)
            assert eig.min() >= -1.0 - 1e-6
            assert eig.max() <= 1.0 + 1e-6


class TestGraphBlob:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(10)
        graph = build_graph(rng.standard_normal((6, 120)))
        path = tmp_path / "graph.egr"
        save_graph(path, graph)
        loaded = load_graph(path)
        assert loaded.n_nodes == graph.n_nodes
        np.testing.assert_array_equal(loaded.adjacency, graph.adjacency)
        np.testing.assert_array_equal(loaded.laplacian, graph.laplacian)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.egr"
        path.write_bytes(b"XXXX" + b"\x00" * 12)
        with pytest.raises(ValueError, match="magic"):
            load_graph(path)

    def test_graph_invariants(self):
        rng = np.random.default_rng(11)
        graph = build_graph(rng.standard_normal((8, 64)))
        assert np.abs(graph.adjacency - graph.adjacency.T).max() <= 1e-12
        assert np.all(np.diag(graph.adjacency) == 0.0)
        assert graph.adjacency.min() >= 0.0 and graph.adjacency.max() <= 1.0
        assert np.abs(graph.laplacian - graph.laplacian.T).max() <= 1e-12


def test_graph_from_adjacency_rejects_rectangular():
    with pytest.raises(ValueError, match="square"):
        graph_from_adjacency(np.zeros((2, 3)))
