import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spmll.corrgraph import (
    ClassSemantic,
    CorrelationGraph,
    SimilarityMatrix,
    build_graph,
    build_similarity_matrix,
    knn_sparsify,
    load_class_semantics,
    load_graph,
    save_graph,
    smooth,
)
from spmll.errors import DegenerateRowError, InvalidInputError, ParseError, ValidationError


def make_semantics(vectors):
    return [
        ClassSemantic(class_id=i, name=f"c{i}", definition=f"def {i}", embedding=np.asarray(v, dtype=float))
        for i, v in enumerate(vectors)
    ]


class TestSimilarity:
    def test_identical_embeddings_give_one(self):
        sim = build_similarity_matrix(make_semantics([[1.0, 2.0], [1.0, 2.0]]))
        assert sim.entries[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_embeddings_give_zero(self):
        sim = build_similarity_matrix(make_semantics([[1.0, 0.0], [0.0, 1.0]]))
        assert sim.entries[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_value(self):
        # dot / (|u||v|) = 1 / sqrt(2)
        sim = build_similarity_matrix(make_semantics([[1.0, 1.0], [1.0, 0.0]]))
        assert sim.entries[0, 1] == pytest.approx(0.70710678, abs=1e-8)

    def test_zero_norm_rejected_naming_class(self):
        with pytest.raises(InvalidInputError, match="class_id 1"):
            build_similarity_matrix(make_semantics([[1.0, 0.0], [0.0, 0.0]]))

    def test_dimension_mismatch_rejected(self):
        sems = [
            ClassSemantic(0, "a", "d", np.array([1.0, 0.0])),
            ClassSemantic(1, "b", "d", np.array([1.0, 0.0, 0.0])),
        ]
        with pytest.raises(InvalidInputError):
            build_similarity_matrix(sems)

    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_symmetric_unit_diagonal_bounded(self, l, seed):
        rng = np.random.default_rng(seed)
        sim = build_similarity_matrix(make_semantics(rng.normal(size=(l, 4))))
        a = sim.entries
        assert np.allclose(a, a.T)
        assert np.allclose(np.diag(a), 1.0, atol=1e-9)
        assert np.all(a >= -1.0) and np.all(a <= 1.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        vecs = rng.normal(size=(5, 6))
        base = build_similarity_matrix(make_semantics(vecs)).entries
        vecs2 = vecs.copy()
        vecs2[2] *= 37.5
        rescaled = build_similarity_matrix(make_semantics(vecs2)).entries
        assert np.allclose(base, rescaled, atol=1e-12)

    def test_permutation_consistency(self):
        rng = np.random.default_rng(4)
        vecs = rng.normal(size=(6, 5))
        perm = rng.permutation(6)
        a = build_similarity_matrix(make_semantics(vecs)).entries
        b = build_similarity_matrix(make_semantics(vecs[perm])).entries
        assert np.allclose(b, a[np.ix_(perm, perm)], atol=1e-12)

    def test_smoothed_graph_permutation_consistency(self):
        # continuous random similarities make ranking ties a measure-zero event,
        # so the whole pipeline commutes with class permutations
        rng = np.random.default_rng(8)
        vecs = rng.uniform(0.1, 1.0, size=(7, 5))
        perm = rng.permutation(7)
        a = build_graph(make_semantics(vecs), k=3, s=0.5).entries
        b = build_graph(make_semantics(vecs[perm]), k=3, s=0.5).entries
        assert np.allclose(b, a[np.ix_(perm, perm)], atol=1e-12)


class TestKnnSparsify:
    def test_hand_example_k1(self):
        sim = SimilarityMatrix(np.array([[1.0, 0.8, 0.2], [0.8, 1.0, 0.5], [0.2, 0.5, 1.0]]), l=3)
        a_bar = knn_sparsify(sim, 1)
        expected = np.array([[1.0, 0.8, 0.0], [0.8, 1.0, 0.0], [0.0, 0.5, 1.0]])
        assert np.allclose(a_bar, expected)

    def test_k_full_keeps_everything(self):
        rng = np.random.default_rng(5)
        sim = build_similarity_matrix(make_semantics(np.abs(rng.normal(size=(4, 3)))))
        a_bar = knn_sparsify(sim, 3)
        off = ~np.eye(4, dtype=bool)
        assert np.allclose(a_bar[off], np.maximum(sim.entries, 0.0)[off])

    def test_tie_break_prefers_lower_index(self):
        sim = SimilarityMatrix(np.array([[1.0, 0.4, 0.4], [0.4, 1.0, 0.4], [0.4, 0.4, 1.0]]), l=3)
        a_bar = knn_sparsify(sim, 1)
        assert a_bar[0, 1] == 0.4 and a_bar[0, 2] == 0.0
        assert a_bar[2, 0] == 0.4 and a_bar[2, 1] == 0.0

    def test_k_out_of_range(self):
        sim = build_similarity_matrix(make_semantics(np.eye(3)))
        for k in (0, 3, 7):
            with pytest.raises(InvalidInputError):
                knn_sparsify(sim, k)

    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=5))
    @settings(max_examples=30, deadline=None)
    def test_kept_entries_dominate_dropped(self, seed, k):
        rng = np.random.default_rng(seed)
        l = 7
        sim = build_similarity_matrix(make_semantics(rng.normal(size=(l, 4))))
        a_bar = knn_sparsify(sim, k)
        clamped = np.maximum(sim.entries, 0.0)
        for i in range(l):
            kept = [j for j in range(l) if j != i and a_bar[i, j] != 0]
            dropped = [j for j in range(l) if j != i and a_bar[i, j] == 0]
            assert len(kept) <= k
            if kept and dropped:
                assert min(clamped[i, j] for j in kept) >= max(clamped[i, j] for j in dropped)


class TestSmooth:
    def test_single_neighbor_row(self):
        a_bar = np.array([[1.0, 0.8, 0.0], [0.8, 1.0, 0.0], [0.0, 0.5, 1.0]])
        graph = smooth(a_bar, 0.5)
        assert np.allclose(graph.entries[0], [0.5, 0.5, 0.0])

    def test_two_equal_neighbors(self):
        a_bar = np.array([[1.0, 0.4, 0.4], [0.4, 1.0, 0.0], [0.4, 0.0, 1.0]])
        graph = smooth(a_bar, 0.5)
        assert graph.entries[0, 1] == pytest.approx(0.25, abs=1e-12)
        assert graph.entries[0, 2] == pytest.approx(0.25, abs=1e-12)

    def test_degenerate_row_names_class(self):
        a_bar = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(DegenerateRowError) as exc:
            smooth(a_bar, 0.5)
        assert exc.value.class_id == 1

    def test_bad_s_rejected(self):
        a_bar = np.array([[1.0, 0.5], [0.5, 1.0]])
        for s in (0.0, 1.0, -0.2, 2.0):
            with pytest.raises(InvalidInputError):
                smooth(a_bar, s)

    @given(
        st.integers(min_value=2, max_value=20),
        st.integers(min_value=0, max_value=10_000),
        st.sampled_from([0.3, 0.5, 0.7]),
    )
    @settings(max_examples=40, deadline=None)
    def test_rows_sum_to_one_diag_is_one_minus_s(self, l, seed, s):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, l))
        graph = build_graph(make_semantics(rng.uniform(0.1, 1.0, size=(l, 5))), k=k, s=s)
        assert np.all(np.abs(graph.entries.sum(axis=1) - 1.0) < 1e-9)
        assert np.all(np.diag(graph.entries) == 1.0 - s)
        off = graph.entries - np.diag(np.diag(graph.entries))
        assert np.all(off >= 0)
        assert np.all((off != 0).sum(axis=1) <= k)


class TestGraphIO:
    def test_round_trip_identity(self, tmp_path):
        rng = np.random.default_rng(11)
        graph = build_graph(make_semantics(rng.uniform(0.1, 1.0, size=(6, 4))), k=2, s=0.4)
        path = tmp_path / "graph.json"
        save_graph(graph, path)
        loaded = load_graph(path)
        assert np.array_equal(loaded.entries, graph.entries)
        assert loaded.k == graph.k and loaded.s == graph.s

    def test_truncated_file_is_parse_error(self, tmp_path):
        path = tmp_path / "graph.json"
        path.write_text('{"l": 3, "k": 1, "s": 0.5, "rows": [[0.5, 0.5')
        with pytest.raises(ParseError):
            load_graph(path)

    def test_bad_row_sum_is_validation_error(self, tmp_path):
        path = tmp_path / "graph.json"
        rows = [[0.5, 0.4], [0.5, 0.5]]
        path.write_text(json.dumps({"l": 2, "k": 1, "s": 0.5, "rows": rows}))
        with pytest.raises(ValidationError, match="sums"):
            load_graph(path)

    def test_bad_diagonal_is_validation_error(self, tmp_path):
        path = tmp_path / "graph.json"
        rows = [[0.6, 0.4], [0.5, 0.5]]
        path.write_text(json.dumps({"l": 2, "k": 1, "s": 0.5, "rows": rows}))
        with pytest.raises(ValidationError, match="diagonal"):
            load_graph(path)


class TestClassSemanticsIO:
    def test_load_valid_file(self, tmp_path):
        path = tmp_path / "classes.jsonl"
        lines = [
            json.dumps({"class_id": i, "name": f"c{i}", "definition": "d", "embedding": [1.0, float(i)]})
            for i in range(3)
        ]
        path.write_text("\n".join(lines) + "\n")
        sems = load_class_semantics(path)
        assert [s.class_id for s in sems] == [0, 1, 2]
        assert sems[1].sentence() == "c1: d"

    def test_non_contiguous_ids_rejected(self, tmp_path):
        path = tmp_path / "classes.jsonl"
        path.write_text(json.dumps({"class_id": 1, "name": "a", "definition": "d", "embedding": [1.0]}) + "\n")
        with pytest.raises(ValidationError):
            load_class_semantics(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "classes.jsonl"
        good = json.dumps({"class_id": 0, "name": "a", "definition": "d", "embedding": [1.0]})
        path.write_text(good + "\n{broken\n")
        with pytest.raises(ParseError, match="line 2"):
            load_class_semantics(path)


def test_correlation_graph_validate_catches_excess_nonzeros():
    entries = np.array([[0.5, 0.3, 0.2], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])
    graph = CorrelationGraph(entries=entries, k=1, s=0.5)
    with pytest.raises(ValidationError, match="nonzeros"):
        graph.validate()
