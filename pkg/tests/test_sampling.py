
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gsamp.errors import ValidationError
from gsamp.graph import Graph
from gsamp.sampling import (
    ObservationMask,
    WeightClass,
    apply_mask,
    class_matrix,
    classify_pair,
    default_bandwidth,
    greedy_select,
    read_mask,
    write_mask,
)
from gsamp.spectral import eigendecompose

from helpers import connected_graphs, masks_for, path_graph, random_connected_graph


def _brute_key(UF, rows, F):
    """Selection key computed from scratch for one candidate set."""
    sv = np.linalg.svd(UF[rows], compute_uv=False)
    tol = max(len(rows), F) * np.finfo(float).eps * sv[0]
    rank = int(np.sum(sv > tol))
    smin = float(sv[F - 1]) if rank == F else 0.0
    prod = float(np.prod(sv[:rank]))
    return smin, rank, prod


class TestGreedy:
    def test_full_selection(self):
        b = eigendecompose(random_connected_graph(7, np.random.default_rng(1)).laplacian)
        for F in (1, 3, 7):
            assert greedy_select(b, 7, F).observed.all()

    def test_constant_band_ties_to_lowest_indices(self):
        b = eigendecompose(random_connected_graph(9, np.random.default_rng(2)).laplacian)
        mask = greedy_select(b, 4, 1)
        assert mask.indices.tolist() == [0, 1, 2, 3]

    def test_four_path_trace_matches_exhaustive_evaluation(self):
        b = eigendecompose(path_graph(4).laplacian)
        UF = b.eigenvectors[:, :2]
        trace = []
        mask = greedy_select(b, 2, 2, trace=trace)
        chosen = []
        for pick, scores in trace:
            remaining = [c for c in range(4) if c not in chosen]
            keys = {c: _brute_key(UF, chosen + [c], 2) for c in remaining}
            for c in remaining:
                np.testing.assert_allclose(scores[c], keys[c], rtol=1e-12, atol=1e-15)
            best = max(keys.values())
            tied = [c for c in remaining if np.allclose(keys[c], best, rtol=1e-9, atol=1e-12)]
            assert pick == min(tied)
            chosen.append(pick)
        assert mask.indices.tolist() == sorted(chosen)
        # the two ends of the path carry the most low-frequency content
        assert sorted(chosen) == [0, 3]

    @pytest.mark.parametrize("m,F", [(5, 2), (1, 2), (3, 0), (3, 5)])
    def test_rejects_bad_sizes(self, m, F):
        b = eigendecompose(path_graph(4).laplacian)
        with pytest.raises(ValidationError):
            greedy_select(b, m, F)

    def test_default_bandwidth(self):
        assert default_bandwidth(197) == 79
        assert default_bandwidth(60) == 24
        assert default_bandwidth(5) == 2

    def test_deterministic(self):
        b = eigendecompose(random_connected_graph(25, np.random.default_rng(3), 0.15).laplacian)
        assert greedy_select(b, 15, 10) == greedy_select(b, 15, 10)

    @settings(max_examples=100)
    @given(connected_graphs(min_nodes=5, max_nodes=10), st.integers(0, 2**32 - 1), st.data())
    def test_relabelling_equivariance(self, g, perm_seed, data):
        n = g.n_nodes
        F = default_bandwidth(n)
        m = data.draw(st.integers(F, n))
        b = eigendecompose(g.laplacian)
        assume(b.eigenvalues[F] - b.eigenvalues[F - 1] > 1e-6 if F < n else True)
        trace = []
        base = greedy_select(b, m, F, trace=trace)
        for _, scores in trace:
            ranked = sorted(scores.values(), reverse=True)
            assume(len(ranked) < 2 or not np.allclose(ranked[0], ranked[1], rtol=1e-6, atol=1e-9))
        perm = np.random.default_rng(perm_seed).permutation(n)
        h = Graph.from_adjacency(g.adjacency[np.ix_(perm, perm)])
        relabelled = greedy_select(eigendecompose(h.laplacian), m, F)
        # new node i is old node perm[i]
        assert set(perm[relabelled.indices].tolist()) == set(base.indices.tolist())


class TestMask:
    def test_requires_an_observed_node(self):
        with pytest.raises(ValidationError):
            ObservationMask(np.zeros(3, dtype=bool))

    def test_matrix_form(self):
        m = ObservationMask.from_indices(3, [0, 2])
        assert np.array_equal(m.matrix, np.diag([1.0, 0.0, 1.0]))

    def test_csv_round_trip(self, tmp_path):
        m = ObservationMask.from_indices(6, [1, 4, 5])
        write_mask(m, tmp_path / "mask.csv")
        assert (tmp_path / "mask.csv").read_text() == "0,1,0,0,1,1\n"
        assert read_mask(tmp_path / "mask.csv") == m

    def test_csv_rejects_junk(self):
        with pytest.raises(ValidationError):
            ObservationMask.from_csv_line("1,0,2")

    def test_apply_all_observed_is_identity(self):
        x = np.array([1.5, -2.0, 3.0])
        assert np.array_equal(apply_mask(ObservationMask(np.ones(3, bool)), x), x)

    def test_apply_single_observed(self):
        assert apply_mask(ObservationMask.from_indices(2, [0]), np.array([3.0, 5.0])).tolist() == [3.0, 0.0]

    def test_apply_entrywise_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(50)
        obs = rng.random(50) < 0.5
        obs[0] = True
        out = apply_mask(ObservationMask(obs), x)
        for i in range(50):
            assert out[i] == (x[i] if obs[i] else 0.0)

    def test_apply_batch_and_mismatch(self):
        m = ObservationMask.from_indices(3, [1])
        X = np.arange(6.0).reshape(3, 2)
        assert apply_mask(m, X).tolist() == [[0, 0], [2, 3], [0, 0]]
        with pytest.raises(ValidationError):
            apply_mask(m, np.ones(4))



class TestWeightClasses:
    def test_enumeration(self):
        m = ObservationMask.from_indices(3, [0, 1])
        assert classify_pair(m, 0, 1) is WeightClass.W1
        assert classify_pair(m, 0, 2) is WeightClass.W2
        assert classify_pair(m, 2, 0) is WeightClass.W3
        m2 = ObservationMask.from_indices(3, [0])
        assert classify_pair(m2, 1, 2) is WeightClass.W4

    @settings(max_examples=100)
    @given(st.integers(2, 20).flatmap(lambda n: st.tuples(masks_for(n), st.integers(0, n - 1), st.integers(0, n - 1))))
    def test_transpose_swaps_w2_and_w3(self, case):
        obs, v, j = case
        m = ObservationMask(obs)
        swap = {WeightClass.W1: WeightClass.W1, WeightClass.W2: WeightClass.W3,
                WeightClass.W3: WeightClass.W2, WeightClass.W4: WeightClass.W4}
        assert classify_pair(m, j, v) is swap[classify_pair(m, v, j)]
        assert class_matrix(m)[v, j] == int(classify_pair(m, v, j))


@settings(max_examples=100)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(masks_for(n), st.lists(st.floats(-1e6, 1e6), min_size=n, max_size=n))))
def test_mask_is_idempotent(case):
    obs, x = case
    m = ObservationMask(obs)
    once = apply_mask(m, np.array(x))
    assert np.array_equal(apply_mask(m, once), once)
