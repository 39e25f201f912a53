import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from wzlvq.netsim import (ConfigurationError, ScheduleState, SchedulerInvariantError, TransportAudit,
                          build_layout, chain_code, collision_fault, excess_distortion_model,
                          interpolate, levels_for_budget, link_bits_per_sample, plan_slot,
                          run_transport, schedule_period, step_schedule)
from wzlvq.sources import gen_brownian_field


def test_layout_n16():
    L = build_layout(16)
    assert L.ell == 4
    routers = L.positions[32:]
    assert routers.shape == (16, 2)
    assert sorted(set(np.round(routers[:, 0], 12))) == [0.125, 0.375, 0.625, 0.875]
    assert sorted(set(L.strip[:16].tolist())) == [1, 2, 3, 4]


def test_layout_n4_radii():
    L = build_layout(4)
    assert L.radius[0] == pytest.approx(math.sqrt(2) / 4)
    assert L.radius[8] == pytest.approx(0.5)


@pytest.mark.parametrize("n", [15, 9, 2, 0])
def test_layout_rejects_bad_n(n):
    with pytest.raises(ConfigurationError):
        build_layout(n)


def test_routes_follow_rows():
    L = build_layout(64)
    for i in (1, 9, 37, 64):
        node, hops = L.source(i), [L.source(i)]
        while L.role(node) != "destination":
            node = L.next_hop(node, i)
            hops.append(node)
        assert node == L.destination(i)
        assert len(hops) == L.ell + 2
        ys = L.positions[hops[1:-1], 1]
        assert np.allclose(ys, ys[0])


def test_parity_and_group_rules():
    L = build_layout(64)
    st = ScheduleState(L, 8)
    audit = TransportAudit()
    for _ in range(3 * schedule_period(L)):
        t = st.t
        txs = plan_slot(L, st)
        for tx in txs:
            i = int(L.strip[tx.sender])
            assert i % 2 == t % 2
            g = int(st.tau[i] % 3)
            if L.role(tx.sender) == "source":
                assert g == 0
            else:
                assert int(L.group[tx.sender]) == g
        step_schedule(L, st, audit)
    assert audit.ok()


def test_round_robin_over_a_period():
    L = build_layout(16)
    rep = run_transport(L, schedule_period(L), 24)
    # each source injects exactly once per period: R bits per 6 l slots
    assert rep.injected_bits == [24] * 16
    assert rep.goodput == Fraction(1)


@pytest.mark.parametrize("n,R", [(16, 24), (64, 48), (64, 7)])
def test_goodput_exact(n, R):
    L = build_layout(n)
    rep = run_transport(L, 10 * schedule_period(L), R)
    assert rep.goodput == rep.expected_goodput == Fraction(R, 6 * L.ell)
    assert rep.audit["collisions"] == rep.audit["drops"] == rep.audit["out_of_range"] == 0
    assert rep.audit["max_queue"] <= 1


def test_collision_fault_detected():
    L = build_layout(16)
    with pytest.raises(SchedulerInvariantError) as e:
        run_transport(L, 2 * schedule_period(L), 24, fault=collision_fault(5))
    assert e.value.invariant == "collision"
    rep = run_transport(L, 2 * schedule_period(L), 24, fault=collision_fault(5), strict=False)
    assert rep.audit["collisions"] > 0


def test_transport_validation():
    L = build_layout(16)
    with pytest.raises(ConfigurationError):
        run_transport(L, 25, 24)
    with pytest.raises(ConfigurationError):
        run_transport(L, 24, 0)


def test_levels_for_budget_exact():
    assert link_bits_per_sample(24, 16) == 1
    assert levels_for_budget(24, 16) == 2
    assert levels_for_budget(192, 16) == 256
    assert levels_for_budget(192, 256) == 4
    assert levels_for_budget(288, 256) == 8
    # 2^(1/2) < 2: half a bit leaves one index
    assert levels_for_budget(12, 16) == 1
    for R in range(1, 400, 7):
        k = levels_for_budget(R, 64)
        b = link_bits_per_sample(R, 64)
        assert k ** b.denominator <= 2 ** b.numerator < (k + 1) ** b.denominator


def test_chain_node1_is_lloyd_max():
    from wzlvq.codec import lloyd_max_gaussian

    f = gen_brownian_field(16, 1.0, 200, seed=0)
    r = chain_code(f, 48)
    sq = lloyd_max_gaussian(r.levels, 1.0 / 4)
    assert np.allclose(r.xhat[:, 0], sq.decode(sq.encode(f.node(1))))
    assert r.errors[0] == 0


def test_chain_rejects_small_budget():
    with pytest.raises(ConfigurationError):
        chain_code(gen_brownian_field(16, 1.0, 10, seed=0), 12)


def test_forced_error_propagates():
    f = gen_brownian_field(64, 1.0, 500, seed=1)
    base = chain_code(f, 192)
    hit = chain_code(f, 192, force_error_at=10)
    ks = base.levels * hit.s
    assert np.allclose(hit.D[:9], base.D[:9])
    step = hit.D[9:] - base.D[9:]
    # every downstream node carries the shifted reconstruction
    assert np.all(np.abs(step - ks**2) < 0.1 * ks**2)
    assert hit.errors[9] == 500


def test_chain_deterministic():
    f = gen_brownian_field(64, 1.0, 100, seed=3)
    a, b = chain_code(f, 192), chain_code(f, 192)
    assert a.to_dict() == b.to_dict()


def test_interpolate_at_sample_points():
    f = gen_brownian_field(16, 1.0, 300, seed=2)
    r = chain_code(f, 96)
    prof = interpolate(r, f, np.arange(1, 17) / 16, seed=0)
    np.testing.assert_allclose(prof.D_u, r.D, rtol=1e-12)


@pytest.mark.parametrize("n", [16, 64])
def test_interpolate_midpoint_excess(n):
    f = gen_brownian_field(n, 1.0, 4000, seed=5)
    r = chain_code(f, 192)
    perfect = dataclasses.replace(r, xhat=f.samples.copy(), D=np.zeros(n))
    mids = (np.arange(n) + 0.5) / n
    prof = interpolate(perfect, f, mids, seed=1)
    # hold error at the midpoint is a half increment: variance sigma^2 / (2n)
    excess = prof.D_u.mean()
    assert excess == pytest.approx(1 / (2 * n), rel=3 * math.sqrt(2 / (4000 * n)))
    assert np.all(prof.D_u <= prof.bound + 3 * prof.D_u_stderr)


def test_interpolate_rejects_outside_grid():
    f = gen_brownian_field(16, 1.0, 20, seed=2)
    with pytest.raises(ValueError):
        interpolate(chain_code(f, 96), f, [1.5], seed=0)


def test_excess_model_limits():
    assert excess_distortion_model(7, 0.0, 0.3, 5.0) == pytest.approx(0.3)
    assert excess_distortion_model(1, 0.1, 0.3, 5.0) == pytest.approx(0.3 + 0.5)
    m = np.arange(1, 10)
    v = excess_distortion_model(m, 0.05, 0.1, 2.0)
    assert np.all(np.diff(v) > 0)
    with pytest.raises(ValueError):
        excess_distortion_model(1, 1.5, 0.1, 1.0)
