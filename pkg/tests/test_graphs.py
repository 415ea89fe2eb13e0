import json

import numpy as np
import pytest

import netalloc as na
from netalloc.errors import (
    DimensionMismatch,
    DisconnectedGraph,
    InvalidEdge,
    WeightPropertyError,
)

from conftest import (
    DEMO_EDGES,
    DEMO_LAMBDA2,
    DEMO_LAMBDA_MAX,
    DEMO_LAPLACIAN,
    random_connected_graph,
)


class TestBuildGraph:
    def test_demo_graph(self, demo_graph):
        assert demo_graph.node_count == 7
        assert demo_graph.edge_count == 8

    def test_two_node_path(self):
        g = na.build_graph(2, [(0, 1)])
        assert g.edge_count == 1
        assert g.neighbors == ((1,), (0,))

    def test_disconnected_rejected(self):
        with pytest.raises(DisconnectedGraph):
            na.build_graph(3, [(0, 1)])

    def test_self_loop_rejected(self):
        with pytest.raises(InvalidEdge):
            na.build_graph(3, [(0, 1), (1, 1), (1, 2)])

    def test_duplicate_rejected(self):
        with pytest.raises(InvalidEdge):
            na.build_graph(2, [(0, 1), (1, 0)])

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidEdge):
            na.build_graph(2, [(0, 2)])

    def test_single_node_allowed(self):
        g = na.build_graph(1, [])
        assert g.node_count == 1 and g.edge_count == 0

    def test_edges_canonicalized_and_sorted(self):
        g = na.build_graph(3, [(2, 1), (1, 0)])
        assert g.edges == ((0, 1), (1, 2))


class TestLaplacian:
    def test_demo_matrix(self, demo_graph):
        L = na.laplacian(demo_graph)
        assert np.array_equal(L.entries, DEMO_LAPLACIAN)
        assert L.symmetric

    def test_two_node_path(self):
        L = na.laplacian(na.build_graph(2, [(0, 1)]))
        assert np.array_equal(L.entries, [[1.0, -1.0], [-1.0, 1.0]])

    def test_demo_spectrum_regression(self, demo_graph):
        L = na.laplacian(demo_graph)
        assert L.spectral.lambda_max == pytest.approx(DEMO_LAMBDA_MAX, abs=1e-9)
        assert L.spectral.lambda2 == pytest.approx(DEMO_LAMBDA2, abs=1e-9)
        assert L.spectral.sigma_max == pytest.approx(DEMO_LAMBDA_MAX, abs=1e-9)

    def test_entries_read_only(self, demo_graph):
        L = na.laplacian(demo_graph)
        with pytest.raises(ValueError):
            L.entries[0, 0] = 5.0


class TestValidation:
    def test_demo_laplacian_passes(self, demo_graph):
        rep = na.validate_weight_matrix(DEMO_LAPLACIAN, demo_graph)
        assert rep.all_ok
        assert rep.max_row_sum == 0.0 and rep.max_col_sum == 0.0
        assert rep.min_eig_definite > 0.0

    def test_zero_matrix_fails_definiteness(self, demo_graph):
        rep = na.validate_weight_matrix(np.zeros((7, 7)), demo_graph)
        assert rep.null_vectors_ok
        assert not rep.definite_ok
        assert rep.min_eig_definite == pytest.approx(0.0, abs=1e-12)

    def test_sparsity_violation_reported_one_based(self, demo_graph):
        w = DEMO_LAPLACIAN.copy()
        w[0, 2] = -1.0  # (1,3) in 1-based indexing, not an edge
        rep = na.validate_weight_matrix(w, demo_graph)
        assert not rep.sparsity_ok
        assert rep.sparsity_mismatches == ((1, 3),)

    def test_dimension_mismatch(self, demo_graph):
        with pytest.raises(DimensionMismatch):
            na.validate_weight_matrix(np.zeros((3, 3)), demo_graph)

    def test_make_weight_matrix_rejects_invalid(self, demo_graph):
        with pytest.raises(WeightPropertyError):
            na.make_weight_matrix(np.eye(7), demo_graph)


class TestSpectralSummary:
    def test_two_node_values(self):
        s = na.spectral_summary([[1.0, -1.0], [-1.0, 1.0]])
        assert s.lambda2 == pytest.approx(2.0, abs=1e-12)
        assert s.lambda_max == pytest.approx(2.0, abs=1e-12)
        assert s.sigma_max == pytest.approx(2.0, abs=1e-12)

    def test_symmetric_lambda_equals_sigma(self, demo_graph):
        s = na.laplacian(demo_graph).spectral
        assert abs(s.lambda_max - s.sigma_max) <= 1e-10

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            g = random_connected_graph(rng, int(rng.integers(3, 12)))
            L = na.laplacian(g)
            perm = rng.permutation(g.node_count)
            P = np.eye(g.node_count)[perm]
            conj = P @ L.entries @ P.T
            s1, s2 = L.spectral, na.spectral_summary(conj)
            assert abs(s1.lambda2 - s2.lambda2) <= 1e-9
            assert abs(s1.lambda_max - s2.lambda_max) <= 1e-9
            assert abs(s1.sigma_max - s2.sigma_max) <= 1e-9


class TestDesignWeights:
    def test_laplacian_strategy(self, demo_graph):
        w = na.design_weights(demo_graph, "laplacian")
        assert np.array_equal(w.entries, DEMO_LAPLACIAN)

    def test_scaled_two_node(self):
        w = na.design_weights(na.build_graph(2, [(0, 1)]), "scaled_laplacian")
        assert np.allclose(w.entries, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)

    def test_scaled_demo_lambda_max_one(self, demo_graph):
        w = na.design_weights(demo_graph, "scaled_laplacian")
        # independent eigendecomposition of the scaled entries
        evals = np.linalg.eigvalsh(0.5 * (w.entries + w.entries.T))
        assert abs(evals[-1] - 1.0) <= 1e-10
        assert abs(w.spectral.lambda_max - 1.0) <= 1e-10

    def test_unknown_strategy(self, demo_graph):
        with pytest.raises(ValueError):
            na.design_weights(demo_graph, "whatever")


class TestWeightMatrixProperties:
    """Structural invariants over random connected graphs."""

    def test_random_graphs(self):
        rng = np.random.default_rng(42)
        for trial in range(100):
            g = random_connected_graph(rng, int(rng.integers(2, 21)))
            w = na.laplacian(g)
            scale = max(1.0, float(np.max(np.abs(w.entries))))
            ones = np.ones(g.node_count)
            assert np.max(np.abs(ones @ w.entries)) <= 1e-10 * scale
            assert np.max(np.abs(w.entries @ ones)) <= 1e-10 * scale
            assert w.spectral.lambda2 > 0.0
            assert na.validate_weight_matrix(w.entries, g).all_ok

    def test_row_items_cover_closed_neighborhood(self, demo_graph):
        w = na.laplacian(demo_graph)
        items = w.row_items(0)
        assert [j for j, _ in items] == [0, 1, 3, 6]
        assert items[0][1] == 3.0


class TestGraphJson:
    def test_round_trip(self, demo_graph):
        doc = na.graph_to_json(demo_graph)
        assert doc["nodes"] == 7
        assert sorted(tuple(e) for e in doc["edges"]) == sorted(DEMO_EDGES)
        g2 = na.graph_from_json(doc)
        assert g2 == demo_graph

    def test_from_string_and_file(self, tmp_path, demo_graph):
        doc = na.graph_to_json(demo_graph)
        assert na.graph_from_json(json.dumps(doc)) == demo_graph
        path = tmp_path / "graph.json"
        path.write_text(json.dumps(doc))
        assert na.graph_from_json(path) == demo_graph
