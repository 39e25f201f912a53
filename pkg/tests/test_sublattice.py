import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wzlvq.lattice import make_lattice
from wzlvq.sublattice import (coarse_lattice, coset_index, eisenstein_similarity, enumerate_cosets,
                              integer_matrix, minimal_norm, rectangular_sublattice, scaling_similarity,
                              similarity, theta_counts)

A2 = make_lattice("A2")


@pytest.mark.parametrize("a,b,N", [(1, 0, 1), (5, 1, 21), (2, 1, 3), (3, 1, 7), (4, 1, 13), (2, 0, 4)])
def test_eisenstein_index_is_norm(a, b, N):
    k = eisenstein_similarity(a, b)
    assert k.index_N == N
    assert abs(np.linalg.det(k.matrix)) == pytest.approx(N, rel=1e-12)
    assert np.max(np.abs(k.matrix.T @ k.matrix - k.norm_c * np.eye(2))) < 1e-9


def test_identity_similarity():
    assert np.allclose(eisenstein_similarity(1, 0).matrix, np.eye(2))


def test_scaling_similarity():
    Z1, Z2 = make_lattice("Z"), make_lattice("Z2")
    assert scaling_similarity(Z1, 4).index_N == 4
    assert coarse_lattice(Z1, scaling_similarity(Z1, 4)).basis.tolist() == [[4.0]]
    assert scaling_similarity(Z2, 3).index_N == 9
    c = scaling_similarity(Z2, 3).compose(scaling_similarity(Z2, 5))
    assert np.allclose(c.matrix, scaling_similarity(Z2, 15).matrix)
    with pytest.raises(ValueError):
        scaling_similarity(Z1, 0)


def test_non_similarity_rejected():
    with pytest.raises(ValueError):
        similarity([[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        eisenstein_similarity(0, 0)


def test_similarity_must_preserve_lattice():
    # a quarter turn is a similarity of index 1 but does not map A2 into itself
    with pytest.raises(ValueError):
        integer_matrix(A2, similarity([[0.0, -1.0], [1.0, 0.0]]))


def test_z_cosets_k4():
    Z = make_lattice("Z")
    t = enumerate_cosets(Z, scaling_similarity(Z, 4))
    reps = sorted(int(r[0]) for r in t.representatives)
    # Voronoi cell of 0 in 4Z is [-2, 2); the tie rule keeps -1..2
    assert reps == [-1, 0, 1, 2]
    assert t.index_of([0]) == 0
    assert coset_index(t, [7]) == coset_index(t, [3]) == coset_index(t, [-1])


def test_a2_index3_cosets_distinct():
    k = eisenstein_similarity(2, 1)
    t = enumerate_cosets(A2, k)
    assert t.size == 3
    C = coarse_lattice(A2, k)
    for i, j in itertools.combinations(range(3), 2):
        d = A2.embed(t.representatives[i] - t.representatives[j])
        c = np.linalg.solve(C.basis, d)
        assert not np.allclose(c, np.rint(c))


def test_identity_single_coset():
    t = enumerate_cosets(A2, eisenstein_similarity(1, 0))
    assert t.size == 1 and t.representatives.tolist() == [[0, 0]]


@pytest.mark.parametrize("a,b", [(2, 1), (3, 1), (4, 1), (5, 1), (3, 0), (4, 2)])
def test_coset_count_equals_c_pow_half_n(a, b):
    k = eisenstein_similarity(a, b)
    t = enumerate_cosets(A2, k)
    assert t.size == round(k.norm_c ** (2 / 2))
    assert len({int(i) for i in t.index_of(t.representatives)}) == t.size


@settings(max_examples=100, deadline=None)
@given(rep=st.integers(0, 20), mu=st.tuples(st.integers(-30, 30), st.integers(-30, 30)))
def test_index_invariant_under_coarse_shift(rep, mu):
    t = enumerate_cosets(A2, eisenstein_similarity(5, 1))
    lam = t.representatives[rep] + t.int_matrix @ np.array(mu)
    assert t.index_of(lam) == rep


def test_partition_bijection(rng):
    t = enumerate_cosets(A2, eisenstein_similarity(5, 1))
    c = A2.nearest_coords(rng.uniform(-50, 50, (10_000, 2)))
    idx = t.index_of(c)
    rem = c - t.representatives[idx]
    mu = np.linalg.solve(t.int_matrix.astype(float), rem.T).T
    assert np.allclose(mu, np.rint(mu))
    back = t.representatives[idx] + np.rint(mu).astype(np.int64) @ t.int_matrix.T
    assert np.array_equal(back, c)


@pytest.mark.parametrize("a,b,N", [(2, 1, 3), (3, 1, 7), (4, 1, 13), (5, 1, 21)])
def test_ideal_minimal_norm_beats_rectangular(a, b, N):
    mu = minimal_norm(A2, eisenstein_similarity(a, b))
    assert mu == pytest.approx(N, rel=1e-9)
    assert minimal_norm(rectangular_sublattice(A2, N)) < mu


def test_minimal_norm_z():
    Z = make_lattice("Z")
    assert minimal_norm(Z, scaling_similarity(Z, 4)) == pytest.approx(16)


def test_theta_counts():
    # coefficients of the hexagonal theta series: 1, 6, 0, 6, 6, 0, 0, 12, 0, 6
    assert theta_counts(A2, 9).tolist() == [1, 6, 0, 6, 6, 0, 0, 12, 0, 6]
    ideal = coarse_lattice(A2, eisenstein_similarity(5, 1))
    th = theta_counts(ideal, 21)
    assert th[1:21].sum() == 0 and th[21] == 6
    z4 = coarse_lattice(make_lattice("Z"), scaling_similarity(make_lattice("Z"), 4))
    assert theta_counts(z4, 16)[16] == 2
