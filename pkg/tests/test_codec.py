import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from wzlvq.codec import (codebook_from_cosets, decode, decode_coords, decode_matched, encode,
                         encode_matched, encode_two_step, lloyd_max_gaussian, make_wzlvq, rho_for_gap,
                         scale_schedule, train_matched_fine)
from wzlvq.lattice import make_lattice
from wzlvq.sublattice import eisenstein_similarity, scaling_similarity

Z = make_lattice("Z")
A2 = make_lattice("A2")


def z_codec(k=4, s=1.0):
    return make_wzlvq(Z, scaling_similarity(Z, k), s)


def a2_codec(a=5, b=1, s=0.3):
    return make_wzlvq(A2, eisenstein_similarity(a, b), s)


def test_hand_trace_encode_decode():
    q = z_codec()
    idx = encode(q, [5.3])
    assert q.cosets.representatives[idx].tolist() == [1]
    assert decode(q, idx, [5.0]).tolist() == [5.0]


def test_coarse_point_encodes_to_zero():
    q = a2_codec()
    pts = q.coarse.embed(np.array([[3, -2], [0, 0], [-7, 11]]))
    assert encode(q, pts).tolist() == [0, 0, 0]


def test_index_range_and_errors():
    q = z_codec()
    assert set(encode(q, np.linspace(-10, 10, 1001)[:, None]).tolist()) == {0, 1, 2, 3}
    with pytest.raises(ValueError):
        decode(q, 4, [0.0])


@pytest.mark.parametrize("q", [z_codec(4, 0.37), a2_codec(5, 1, 0.21), a2_codec(2, 1, 1.3)], ids=["Z4", "A2-21", "A2-3"])
def test_round_trip_with_perfect_side_info(q, rng):
    x = rng.normal(scale=5.0, size=(20_000, q.dim))
    got = decode_coords(q, encode(q, x), x)
    assert np.array_equal(got, q.fine.nearest_coords(x))
    assert np.array_equal(encode(q, x), encode_two_step(q, x))


@settings(max_examples=100, deadline=None)
@given(x=st.tuples(st.floats(-20, 20), st.floats(-20, 20)),
       mu=st.tuples(st.integers(-20, 20), st.integers(-20, 20)))
def test_encode_coarse_equivariance(x, mu):
    q = a2_codec()
    x = np.array(x)
    shift = q.coarse.embed(np.array(mu))
    a, b = encode(q, x), encode(q, x + shift)
    if a != b:
        # x sat on a fine-cell boundary and the shift moved it across a rounding tie
        d = x - q.fine.nearest(x)
        assert abs(np.sum(d**2) - np.sum((x + shift - q.fine.nearest(x + shift)) ** 2)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(idx=st.integers(0, 20), y=st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
       seed=st.integers(0, 2**32 - 1))
def test_decoder_picks_closest_coset_member(idx, y, seed):
    q = a2_codec()
    y = np.array(y)
    got = decode(q, idx, y)
    mu = np.random.default_rng(seed).integers(-30, 30, (100, 2))
    rivals = q.fine.embed(q.cosets.representatives[idx] + mu @ q.cosets.int_matrix.T)
    assert np.sum((got - y) ** 2) <= np.min(np.sum((rivals - y) ** 2, axis=1)) + 1e-12


def test_displaced_side_info_causes_error():
    q = z_codec(4, 1.0)
    x = np.array([0.2])
    assert decode(q, encode(q, x), x + 2.6).tolist() != q.fine.nearest(x).tolist()


def test_scale_schedule_values():
    assert scale_schedule(rho_for_gap(0.1), 1.0) == pytest.approx(0.1 * math.log(10), rel=1e-12)
    s = scale_schedule(rho_for_gap(0.01), 1.0)
    assert s == pytest.approx(0.046051701859880914, rel=1e-12)
    assert s / 0.01 > 0.2302585 / 0.1
    with pytest.raises(ValueError):
        scale_schedule(0.0, 1.0)
    with pytest.raises(ValueError):
        scale_schedule(1.0, 1.0)


def test_matched_from_cosets_reduces_to_lattice(rng):
    q = a2_codec()
    cb = codebook_from_cosets(q)
    x = rng.normal(size=(5000, 2))
    y = x + 0.05 * rng.normal(size=(5000, 2))
    assert np.array_equal(encode_matched(q, cb, x), encode(q, x))
    np.testing.assert_allclose(decode_matched(q, cb, encode(q, x), y), decode(q, encode(q, x), y), atol=1e-12)


def test_matched_perfect_side_info_is_nearest_translate(rng):
    q = z_codec(8, scale_schedule(rho_for_gap(0.01), 1.0))
    cb = train_matched_fine(q, rho_for_gap(0.01), 1.0, 50_000, 30, seed=2)
    x = 0.01 * rng.normal(size=(3000, 1))
    got = decode_matched(q, cb, encode_matched(q, cb, x), x)
    ext = cb.expanded
    brute = ext[np.argmin(np.abs(x - ext[:, 0][None, :]), axis=1)]
    np.testing.assert_allclose(got, brute, atol=1e-15)


def test_matched_single_point():
    q = z_codec(1, 0.5)
    cb = train_matched_fine(q, 0.9, 1.0, 1000, 5, seed=0)
    assert cb.points.tolist() == [[0.0]]
    y = np.array([[1.3]])
    assert decode_matched(q, cb, encode_matched(q, cb, y), y).tolist() == q.coarse.nearest(y).tolist()


def test_matched_two_points_symmetric():
    gap = 0.3
    q = z_codec(2, 4.0)
    cb = train_matched_fine(q, rho_for_gap(gap), 1.0, 400_000, 100, seed=4)
    p = np.sort(cb.points[:, 0])
    # two-level Lloyd fixed point for a centred Gaussian: +-sd sqrt(2/pi)
    assert p[0] == pytest.approx(-p[1], abs=3 * gap / math.sqrt(400_000) * 4)
    assert p[1] == pytest.approx(gap * math.sqrt(2 / math.pi), rel=0.01)


def test_lloyd_history_non_increasing():
    gap = 1e-3
    q = z_codec(16, scale_schedule(rho_for_gap(gap), 1.0))
    cb = train_matched_fine(q, rho_for_gap(gap), 1.0, 100_000, 60, seed=9)
    h = np.array(cb.history)
    assert np.all(np.diff(h) <= 1e-15 * h[0])


def test_matched_beats_lattice_fine_at_high_rate(rng):
    from wzlvq.analysis import mc_distortion

    gap = 1e-3
    rho = rho_for_gap(gap)
    q = z_codec(16, scale_schedule(rho, 1.0))
    cb = train_matched_fine(q, rho, 1.0, 200_000, 100, seed=1)
    a = mc_distortion(q, 1.0, 1.0, rho, 200_000, seed=5, codebook=cb, mode="pinned")
    b = mc_distortion(q, 1.0, 1.0, rho, 200_000, seed=5, mode="pinned")
    assert a.n_errors == 0 and b.n_errors == 0
    assert a.mse_correct <= b.mse_correct + 3 * b.alpha_stderr


# Lloyd-Max reference values for N(0, 1): Max's table (k=2, 4, 8) is reproduced by the
# closed-form two-level answer and by an independent quadrature-based fixed point below.
def _reference_lloyd_max(k, iters=4000):
    pts = stats.norm.ppf((np.arange(k) + 0.5) / k)
    for _ in range(iters):
        t = np.concatenate([[-np.inf], (pts[1:] + pts[:-1]) / 2, [np.inf]])
        pts = np.array([integrate.quad(lambda u: u * stats.norm.pdf(u), a, b)[0] /
                        (stats.norm.cdf(b) - stats.norm.cdf(a)) for a, b in zip(t[:-1], t[1:])])
    t = np.concatenate([[-np.inf], (pts[1:] + pts[:-1]) / 2, [np.inf]])
    mse = sum(integrate.quad(lambda u: (u - p) ** 2 * stats.norm.pdf(u), a, b)[0]
              for p, a, b in zip(pts, t[:-1], t[1:]))
    return pts, mse


def test_lloyd_max_two_levels_closed_form():
    sq = lloyd_max_gaussian(2, 1.0)
    np.testing.assert_allclose(sq.levels, [-math.sqrt(2 / math.pi), math.sqrt(2 / math.pi)], rtol=1e-9)
    assert sq.mse == pytest.approx(1 - 2 / math.pi, rel=1e-9)


@pytest.mark.parametrize("k", [4, 8])
def test_lloyd_max_matches_quadrature_oracle(k):
    pts, mse = _reference_lloyd_max(k, iters=300)
    sq = lloyd_max_gaussian(k, 1.0)
    np.testing.assert_allclose(sq.levels, pts, atol=1e-6)
    assert sq.mse == pytest.approx(mse, rel=1e-6)
    assert lloyd_max_gaussian(k, 2.0).mse == pytest.approx(4 * sq.mse, rel=1e-12)


def test_lloyd_max_max_table():
    # Max (1960): k=4 mse 0.1175, k=8 mse 0.03454
    assert lloyd_max_gaussian(4, 1.0).mse == pytest.approx(0.1175, abs=5e-5)
    assert lloyd_max_gaussian(8, 1.0).mse == pytest.approx(0.03454, abs=1e-5)


def test_scalar_quantizer_encode_decode(rng):
    sq = lloyd_max_gaussian(8, 1.0)
    x = rng.normal(size=10_000)
    xh = sq.decode(sq.encode(x))
    brute = sq.levels[np.argmin(np.abs(x[:, None] - sq.levels[None]), axis=1)]
    np.testing.assert_array_equal(xh, brute)
