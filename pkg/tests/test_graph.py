import math

import numpy as np
import pytest

from pixelgcn import (BorderMask, EdgeWeightParams, LabelMap, PixelGraph, RgbFrame,
                      build_graph, compute_border_mask, edge_weight, load_graph,
                      renormalize, save_graph)

from conftest import brute_force_knn, dense_renormalize, random_label_map, random_rgb


def uniform_frame(h, w, value=255.0):
    return RgbFrame(np.full((h, w, 3), value))


def mask_from_flags(flags, thickness=1):
    return BorderMask(np.asarray(flags, dtype=bool), thickness)


class TestEdgeWeight:
    def test_adjacent_identical_pixels(self):
        frame = uniform_frame(2, 2)
        assert edge_weight((0, 0), (0, 1), frame) == pytest.approx(1.0, abs=1e-6)

    def test_diagonal_identical_pixels(self):
        frame = uniform_frame(2, 2)
        # 1/sqrt(2), identical intensities.
        assert edge_weight((0, 0), (1, 1), frame) == pytest.approx(0.7071067811865475, abs=1e-6)

    def test_adjacent_black_white(self):
        rgb = np.zeros((1, 2, 3))
        rgb[0, 1] = 255.0
        # Intensity difference norm equals the normaliser, so exp(-1).
        assert edge_weight((0, 0), (0, 1), RgbFrame(rgb)) == pytest.approx(
            0.36787944117144233, abs=1e-6)

    def test_rejects_identical_pixels(self):
        with pytest.raises(ValueError):
            edge_weight((1, 1), (1, 1), uniform_frame(3, 3))

    def test_rejects_out_of_bounds(self):
        with pytest.raises(ValueError):
            edge_weight((0, 0), (5, 0), uniform_frame(3, 3))

    def test_bounds_on_random_pairs(self, rng):
        frame = RgbFrame(random_rgb(rng, 24, 24))
        for _ in range(10_000):
            p1 = (int(rng.integers(24)), int(rng.integers(24)))
            p2 = (int(rng.integers(24)), int(rng.integers(24)))
            if p1 == p2:
                continue
            w = edge_weight(p1, p2, frame)
            assert 0.0 < w <= 1.0

    def test_monotone_in_intensity_difference(self):
        # Fixed positions, growing intensity gap: weight never increases.
        previous = math.inf
        for level in range(0, 256, 15):
            rgb = np.zeros((1, 2, 3))
            rgb[0, 1] = float(level)
            w = edge_weight((0, 0), (0, 1), RgbFrame(rgb))
            assert w <= previous
            previous = w

    def test_strictly_decreasing_in_distance(self):
        frame = uniform_frame(1, 30)
        weights = [edge_weight((0, 0), (0, x), frame) for x in range(1, 30)]
        assert all(a > b for a, b in zip(weights, weights[1:]))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            EdgeWeightParams(max_intensity_norm=0.0)


class TestBuildGraph:
    def test_empty_mask_gives_empty_graph(self):
        frame = uniform_frame(4, 4)
        mask = mask_from_flags(np.zeros((4, 4), dtype=bool))
        graph = build_graph(mask, frame, 3)
        assert graph.num_edges == 0
        assert graph.num_nodes == 16

    def test_single_selected_pixel_axis_neighbours(self):
        # k=4 around an interior pixel of a uniform frame: the four
        # axis-adjacent pixels (distance 1) beat every other candidate.
        frame = uniform_frame(4, 4)
        flags = np.zeros((4, 4), dtype=bool)
        flags[1, 1] = True
        graph = build_graph(mask_from_flags(flags), frame, 4)
        node = 1 * 4 + 1
        expected = {0 * 4 + 1, 1 * 4 + 0, 1 * 4 + 2, 2 * 4 + 1}
        assert set(graph.neighbors(node).tolist()) == expected
        assert np.allclose(graph.weights, 1.0)
        assert graph.num_edges == 4

    def test_corner_pixel_prefers_axis_over_diagonal(self):
        frame = uniform_frame(5, 5)
        flags = np.zeros((5, 5), dtype=bool)
        flags[0, 0] = True
        graph = build_graph(mask_from_flags(flags), frame, 2)
        assert graph.neighbors(0).tolist() == [1, 5]  # (0,1) then (1,0)

    def test_matches_exhaustive_knn_oracle(self, rng):
        for trial in range(50):
            h = int(rng.integers(3, 17))
            w = int(rng.integers(3, 17))
            k = int(rng.choice([2, 4, 8, 16]))
            if k >= h * w:
                k = h * w - 1
            labels = random_label_map(rng, h, w, 3)
            mask = compute_border_mask(LabelMap(labels, num_classes=3), 1)
            frame = RgbFrame(random_rgb(rng, h, w))
            graph = build_graph(mask, frame, k)
            for y in range(h):
                for x in range(w):
                    node = y * w + x
                    got = graph.neighbors(node).tolist()
                    if not mask.selected[y, x]:
                        assert got == []
                    else:
                        assert got == brute_force_knn(h, w, y, x, k)

    def test_weights_follow_edge_weight(self, rng):
        h = w = 8
        frame = RgbFrame(random_rgb(rng, h, w))
        flags = np.zeros((h, w), dtype=bool)
        flags[3, 4] = True
        graph = build_graph(mask_from_flags(flags), frame, 6)
        node = 3 * w + 4
        start, stop = graph.indptr[node], graph.indptr[node + 1]
        for neighbour, weight in zip(graph.indices[start:stop], graph.weights[start:stop]):
            expected = edge_weight((3, 4), (int(neighbour) // w, int(neighbour) % w), frame)
            assert weight == pytest.approx(expected, rel=1e-12)

    def test_deterministic_bit_identical(self, rng):
        labels = random_label_map(rng, 12, 10, 4)
        mask = compute_border_mask(LabelMap(labels, num_classes=4), 2)
        frame = RgbFrame(random_rgb(rng, 12, 10))
        g1 = build_graph(mask, frame, 8)
        g2 = build_graph(mask, frame, 8)
        assert np.array_equal(g1.indptr, g2.indptr)
        assert np.array_equal(g1.indices, g2.indices)
        assert g1.weights.tobytes() == g2.weights.tobytes()

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_graph(mask_from_flags(np.zeros((3, 3), dtype=bool)), uniform_frame(4, 4), 2)

    def test_rejects_k_not_below_node_count(self):
        frame = uniform_frame(3, 3)
        mask = mask_from_flags(np.ones((3, 3), dtype=bool))
        with pytest.raises(ValueError):
            build_graph(mask, frame, 9)
        with pytest.raises(ValueError):
            build_graph(mask, frame, 0)

    def test_large_k_reaches_every_other_pixel(self):
        frame = uniform_frame(4, 3)
        flags = np.zeros((4, 3), dtype=bool)
        flags[0, 0] = True
        graph = build_graph(mask_from_flags(flags), frame, 11)
        assert sorted(graph.neighbors(0).tolist()) == list(range(1, 12))


class TestRenormalize:
    def test_empty_graph_becomes_identity(self):
        graph = PixelGraph(5, 2, np.zeros(6, dtype=np.int64),
                           np.zeros(0, dtype=np.int64), np.zeros(0))
        adj = renormalize(graph)
        assert np.allclose(adj.matrix.toarray(), np.eye(5))

    def test_two_nodes_single_unit_edge(self):
        graph = PixelGraph(2, 1, np.array([0, 1, 1]), np.array([1]), np.array([1.0]))
        adj = renormalize(graph)
        assert np.allclose(adj.matrix.toarray(), np.full((2, 2), 0.5), atol=1e-9)

    def _random_graph(self, rng, n, density=0.1):
        dense = np.zeros((n, n))
        edges = rng.random((n, n)) < density
        np.fill_diagonal(edges, False)
        dense[edges] = rng.uniform(0.05, 1.0, edges.sum())
        indptr = [0]
        indices, weights = [], []
        for i in range(n):
            cols = np.nonzero(dense[i])[0]
            indices.extend(cols.tolist())
            weights.extend(dense[i, cols].tolist())
            indptr.append(len(indices))
        graph = PixelGraph(n, max(1, int(edges.sum(1).max()) or 1),
                           np.asarray(indptr), np.asarray(indices), np.asarray(weights))
        return graph, dense

    def test_matches_dense_oracle(self, rng):
        for n in (20, 60):
            graph, dense = self._random_graph(rng, n)
            adj = renormalize(graph)
            assert np.allclose(adj.matrix.toarray(), dense_renormalize(dense), atol=1e-9)

    def test_output_symmetric_and_positive_diagonal(self, rng):
        graph, _ = self._random_graph(rng, 40)
        adj = renormalize(graph)
        m = adj.matrix.toarray()
        assert np.abs(m - m.T).max() <= 1e-9
        assert (np.diag(m) > 0).all()
        assert (adj.data >= 0).all()

    def test_isolated_nodes_keep_unit_diagonal(self):
        graph = PixelGraph(4, 1, np.array([0, 1, 1, 1, 1]), np.array([2]), np.array([0.5]))
        adj = renormalize(graph)
        dense = adj.matrix.toarray()
        assert dense[1, 1] == 1.0
        assert dense[3, 3] == 1.0


class TestGraphDump:
    def test_round_trip(self, tmp_path, rng):
        labels = random_label_map(rng, 9, 11, 3)
        mask = compute_border_mask(LabelMap(labels, num_classes=3), 1)
        frame = RgbFrame(random_rgb(rng, 9, 11))
        graph = build_graph(mask, frame, 4)
        path = tmp_path / "graph.bgg"
        save_graph(graph, path)
        loaded = load_graph(path)
        assert loaded.num_nodes == graph.num_nodes
        assert loaded.k == graph.k
        assert np.array_equal(loaded.indptr, graph.indptr)
        assert np.array_equal(loaded.indices, graph.indices)
        assert np.array_equal(loaded.weights, graph.weights.astype(np.float32))

    def test_header_magic(self, tmp_path):
        graph = PixelGraph(2, 1, np.array([0, 1, 1]), np.array([1]), np.array([0.25]))
        path = tmp_path / "graph.bgg"
        save_graph(graph, path)
        assert path.read_bytes()[:4] == b"BGG1"
        with pytest.raises(ValueError):
            (tmp_path / "junk.bgg").write_bytes(b"NOPE" + bytes(12))
            load_graph(tmp_path / "junk.bgg")


class TestPixelGraphInvariants:
    def test_rejects_self_edges(self):
        with pytest.raises(ValueError):
            PixelGraph(3, 1, np.array([0, 1, 1, 1]), np.array([0]), np.array([0.5]))

    def test_rejects_out_of_range_weights(self):
        with pytest.raises(ValueError):
            PixelGraph(2, 1, np.array([0, 1, 1]), np.array([1]), np.array([1.5]))
        with pytest.raises(ValueError):
            PixelGraph(2, 1, np.array([0, 1, 1]), np.array([1]), np.array([0.0]))
