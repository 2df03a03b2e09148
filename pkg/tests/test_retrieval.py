"""Cosine retrieval, cluster-restricted retrieval, and the index file.

The ranking oracle is an independent argsort-free implementation: score
every candidate with scalar cosine, sort by (-score, book_id) using
Python's sort, and take the head.
"""

import math

import numpy as np
import pytest

from multibert.errors import ConfigError, ContractError, NotFoundError, ShapeError, ZeroVectorError
from multibert.retrieval import (
    EmbeddingIndex,
    build_cluster_index,
    build_index,
    cluster_retrieve,
    cosine,
    format_results,
    load_index,
    save_index,
    top_k,
)


def scalar_cosine(a, b):
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) ** 2 for x in a))
    nb = math.sqrt(sum(float(y) ** 2 for y in b))
    return max(-1.0, min(1.0, dot / (na * nb)))


def brute_top_k(book_ids, matrix, query_id, k):
    qrow = list(book_ids).index(query_id)
    q = matrix[qrow]
    pairs = []
    for i, bid in enumerate(book_ids):
        if i == qrow:
            continue
        if math.sqrt(sum(float(x) ** 2 for x in matrix[i])) == 0.0:
            continue
        pairs.append((bid, scalar_cosine(matrix[i], q)))
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return pairs[:k]


def random_index(rng, n=30, dim=6):
    ids = [f"b{i:04d}" for i in range(n)]
    matrix = rng.standard_normal((n, dim)).astype(np.float32)
    return ids, matrix, build_index(ids, matrix)


class TestCosine:
    def test_self_similarity_is_one(self):
        v = np.array([3.0, -4.0], np.float32)
        assert cosine(v, v) == 1.0

    def test_orthogonal_is_zero(self):
        assert abs(cosine(np.array([1.0, 0.0]), np.array([0.0, 2.0]))) < 1e-12

    def test_hand_value(self):
        # (1,2,2).(2,0,1) = 4; |a| = 3; |b| = sqrt(5)
        a, b = np.array([1.0, 2.0, 2.0]), np.array([2.0, 0.0, 1.0])
        np.testing.assert_allclose(cosine(a, b), 4.0 / (3.0 * math.sqrt(5.0)), rtol=1e-12)

    def test_clamped_to_unit_interval(self):
        v = np.full(50, 0.1, np.float32)
        assert cosine(v, v) <= 1.0
        assert cosine(v, -v) >= -1.0

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVectorError):
            cosine(np.zeros(3), np.ones(3))


class TestBuildIndex:
    def test_row_lookup(self):
        rng = np.random.default_rng(0)
        ids, matrix, index = random_index(rng)
        assert index.row("b0007") == 7
        with pytest.raises(NotFoundError):
            index.row("missing")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ContractError):
            build_index(["a", "a"], np.ones((2, 3), np.float32))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            build_index(["a", "b"], np.ones((3, 2), np.float32))
        with pytest.raises(ShapeError):
            build_index(["a"], np.ones(3, np.float32))

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            build_index([], np.zeros((0, 3), np.float32))


class TestTopK:
    def test_matches_brute_force_over_seeds(self):
        for seed in range(3):
            rng = np.random.default_rng(seed)
            ids, matrix, index = random_index(rng, n=40)
            for query in (ids[0], ids[17], ids[-1]):
                got = top_k(index, query, 5)
                want = brute_top_k(ids, matrix, query, 5)
                assert [g[0] for g in got] == [w[0] for w in want]
                np.testing.assert_allclose(
                    [g[1] for g in got], [w[1] for w in want], atol=1e-6
                )

    def test_duplicate_vectors_tie_break_by_id(self):
        base = np.array([1.0, 1.0, 0.0], np.float32)
        ids = ["q", "z-copy", "a-copy", "m-copy", "far"]
        matrix = np.stack([base, base, base, base, np.array([-1.0, 0.5, 0.0], np.float32)])
        index = build_index(ids, matrix)
        got = top_k(index, "q", 4)
        assert [g[0] for g in got] == ["a-copy", "m-copy", "z-copy", "far"]
        np.testing.assert_allclose([g[1] for g in got[:3]], [1.0, 1.0, 1.0], atol=1e-7)

    def test_query_never_returned(self):
        rng = np.random.default_rng(1)
        ids, _, index = random_index(rng, n=10)
        for query in ids:
            assert query not in [b for b, _ in top_k(index, query, 9)]

    def test_two_book_corpus(self):
        matrix = np.array([[1.0, 0.0], [0.5, 0.5]], np.float32)
        index = build_index(["a", "b"], matrix)
        got = top_k(index, "a", 5)
        assert len(got) == 1 and got[0][0] == "b"

    def test_zero_norm_candidates_never_retrieved(self):
        matrix = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]], np.float32)
        index = build_index(["q", "zero", "other"], matrix)
        got = top_k(index, "q", 5)
        assert [b for b, _ in got] == ["other"]

    def test_zero_norm_query_rejected(self):
        matrix = np.array([[0.0, 0.0], [1.0, 0.0]], np.float32)
        index = build_index(["q", "o"], matrix)
        with pytest.raises(ZeroVectorError):
            top_k(index, "q", 1)

    def test_invalid_k_rejected(self):
        rng = np.random.default_rng(2)
        _, _, index = random_index(rng, n=5)
        with pytest.raises(ContractError):
            top_k(index, "b0000", 0)

    def test_unknown_query_rejected(self):
        rng = np.random.default_rng(3)
        _, _, index = random_index(rng, n=5)
        with pytest.raises(NotFoundError):
            top_k(index, "nope", 3)


def three_group_index(rng, per_group=8, dim=5):
    """Three well-separated direction groups; ids encode the group."""
    anchors = np.eye(3, dim) * 10.0
    ids, rows = [], []
    for g in range(3):
        for i in range(per_group):
            ids.append(f"g{g}-{i:02d}")
            rows.append(anchors[g] + 0.05 * rng.standard_normal(dim))
    return ids, build_index(ids, np.array(rows, np.float32))


class TestClusterRetrieve:
    def test_members_match_construction_groups(self):
        rng = np.random.default_rng(5)
        ids, index = three_group_index(rng)
        clustered = build_cluster_index(index, 3, seed=0)
        by_cluster = {}
        for bid, c in zip(clustered.book_ids, clustered.assignments):
            by_cluster.setdefault(int(c), set()).add(bid[:2])
        # Every cluster is pure: one construction group per cluster.
        assert all(len(groups) == 1 for groups in by_cluster.values())
        assert len(by_cluster) == 3

    def test_within_cluster_results_when_cluster_is_large_enough(self):
        rng = np.random.default_rng(6)
        ids, index = three_group_index(rng)
        clustered = build_cluster_index(index, 3, seed=0)
        got = cluster_retrieve(clustered, "g1-00", 5)
        assert len(got) == 5
        assert all(b.startswith("g1-") for b, _ in got)

    def test_single_cluster_equals_global_top_k(self):
        rng = np.random.default_rng(7)
        ids, matrix, index = random_index(rng, n=20)
        clustered = build_cluster_index(index, 1, seed=0)
        for query in (ids[0], ids[11]):
            assert cluster_retrieve(clustered, query, 6) == top_k(index, query, 6)

    def test_singleton_clusters_spill_back_to_global_ranking(self):
        # n_clusters == n gives one book per cluster, so every query must
        # spill through neighbors; with every cluster eventually pulled in,
        # the pool is global.  Distinct rows keep k-means feasible.
        rng = np.random.default_rng(8)
        ids, matrix, index = random_index(rng, n=12)
        clustered = build_cluster_index(index, 12, seed=0)
        for query in (ids[3], ids[9]):
            got = cluster_retrieve(clustered, query, 11)
            assert got == top_k(index, query, 11)

    def test_default_cluster_count_is_sqrt_n(self):
        rng = np.random.default_rng(9)
        _, _, index = random_index(rng, n=30)
        clustered = build_cluster_index(index, seed=0)
        assert clustered.codebook.k == 6  # ceil(sqrt(30))

    def test_too_many_clusters_rejected(self):
        rng = np.random.default_rng(10)
        _, _, index = random_index(rng, n=5)
        with pytest.raises(ConfigError):
            build_cluster_index(index, 6)

    def test_needs_cluster_structure(self):
        rng = np.random.default_rng(11)
        ids, _, index = random_index(rng, n=5)
        with pytest.raises(ContractError, match="cluster"):
            cluster_retrieve(index, ids[0], 2)

    def test_results_subset_of_scores_and_sorted(self):
        rng = np.random.default_rng(12)
        ids, index = three_group_index(rng, per_group=5)
        clustered = build_cluster_index(index, 3, seed=1)
        got = cluster_retrieve(clustered, "g2-01", 4)
        scores = [s for _, s in got]
        assert scores == sorted(scores, reverse=True)


class TestIndexFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        ids, matrix, index = random_index(rng, n=9, dim=4)
        path = tmp_path / "idx.semb"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.book_ids == index.book_ids
        np.testing.assert_array_equal(loaded.matrix, index.matrix)
        assert top_k(loaded, ids[2], 3) == top_k(index, ids[2], 3)

    def test_write_is_byte_deterministic(self, tmp_path):
        rng = np.random.default_rng(14)
        _, _, index = random_index(rng, n=6, dim=3)
        a, b = tmp_path / "a.semb", tmp_path / "b.semb"
        save_index(index, a)
        save_index(index, b)
        assert a.read_bytes() == b.read_bytes()


class TestFormatResults:
    def test_tsv_layout_and_precision(self):
        results = [("b002", 0.987654321123), ("b001", 0.5)]
        text = format_results(results, titles={"b002": "Second Book"})
        lines = text.splitlines()
        assert lines[0] == "1\tb002\t0.987654321\tSecond Book"
        assert lines[1].startswith("2\tb001\t0.5")

    def test_ranks_start_at_one(self):
        text = format_results([("x", 1.0)])
        assert text.splitlines()[0].split("\t")[0] == "1"
