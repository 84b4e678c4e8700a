import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from pondsl.engine.oracle import oracle_replay
from pondsl.model import NS_PER_S, reference_network
from pondsl.schedule import (OccupancyEnvelope, ScheduleError, aggregate_occupancy, aggregate_peak,
                             max_buffer_occupancy, multiplexed_schedule, occupancy_at,
                             pon_delay_stats, segregated_schedule, single_cpe_timeline)

M = 12144
US = Fraction(1, 10**6)


def _sec(x):
    return Fraction(round(x * NS_PER_S), NS_PER_S)


# -- single CPE ----------------------------------------------------------------


def test_zero_delay_single_packet():
    net = reference_network(E=1, g_p=0.0, g_d=0.0, tau=0.0)
    tl = single_cpe_timeline(net, 0, M)
    assert tl.sigma_c == tl.alpha_c == 0
    assert tl.omega_c == Fraction(M, net.R_d)
    assert tl.mu_c == tl.omega_c
    assert tl.beta_c == tl.omega_c + Fraction(M, net.R_p)


def test_sigma_is_gate_chain():
    net = reference_network(E=1, g_p=1e-6, g_d=2e-6, tau=100e-6, delta=(0.5e-6,))
    assert single_cpe_timeline(net, 0, M).sigma_c == Fraction(1045, 10) * US


def test_timeline_100kbit_frozen_and_oracle():
    net = reference_network(E=1)
    tl = single_cpe_timeline(net, 0, 100_000)
    ns = 10**9
    # exact instants in ns
    assert tl.sigma_c * ns == 107062
    assert tl.alpha_c * ns == 107062
    assert tl.omega_c * ns == Fraction(108243774, 77)
    assert tl.mu_c * ns == Fraction(32818199714, 23947)
    assert tl.beta_c * ns == Fraction(33780699714, 23947)
    assert tl.T * ns == Fraction(36175399714, 23947)
    tr = oracle_replay(net, [100_000], "seg", method="ns")
    c = tr.cpes[0]
    assert tr.clean
    assert c.dsl.first == tl.sigma_c * ns
    assert c.drop_point.first == tl.alpha_c * ns
    assert c.drop_point.last == tl.omega_c * ns
    # the ONU start is the exact instant rounded up to the 1 ns grid
    assert tr.onu_start == math.ceil(tl.mu_c * ns)
    assert tr.onu_end - tr.onu_start == Fraction(100_000 * ns, net.R_p)
    ev = oracle_replay(net, [100_000], "seg")
    assert ev.cpes[0].olt.last == ev.onu_end + to_ns_tau(net)
    assert ev.cpes[0].olt.last - tl.T * ns < 1


def to_ns_tau(net):
    return round(net.tau * NS_PER_S)


@given(st.integers(M, 40 * M), st.integers(0, 5000), st.integers(0, 200_000))
def test_timeline_ordering(G, delta_ns, tau_ns):
    net = reference_network(E=1, delta=(delta_ns * 1e-9,), tau=tau_ns * 1e-9)
    tl = single_cpe_timeline(net, 0, G)
    assert tl.sigma_c <= tl.alpha_c <= tl.mu_c <= tl.omega_c <= tl.beta_c <= tl.T
    assert tl.beta_c - tl.omega_c == Fraction(M, net.R_p)


def test_small_grant_rejected():
    with pytest.raises(ScheduleError):
        single_cpe_timeline(reference_network(), 0, M - 1)
    with pytest.raises(ScheduleError):
        single_cpe_timeline(reference_network(), 8, M)


# -- occupancy -------------------------------------------------------------------


def test_bmax_examples():
    net = reference_network()
    assert max_buffer_occupancy(net, M) == M
    same = reference_network(R_d=net.R_p)  # not validated on purpose
    assert max_buffer_occupancy(same, 5 * M) == M
    exact = max_buffer_occupancy(net, 233_250, exact=True)
    assert exact == 233_250 - Fraction(77, 2488) * 221_106
    assert max_buffer_occupancy(net, 233_250) == 226_408


def _envelope(net, G):
    return OccupancyEnvelope.from_timeline(net, single_cpe_timeline(net, 0, G))


def test_occupancy_breakpoints():
    net = reference_network(E=1)
    env = _envelope(net, 10 * M)
    assert occupancy_at(env, env.alpha) == 0
    assert occupancy_at(env, env.mu) == env.B_max
    assert occupancy_at(env, env.omega) == M
    assert occupancy_at(env, env.beta) == 0
    assert occupancy_at(env, env.beta + 1) == 0


@given(st.integers(M, 40 * M), st.fractions(0, 1))
def test_envelope_continuous_with_single_peak(G, u):
    net = reference_network(E=1)
    env = _envelope(net, G)
    t = env.alpha + (env.beta - env.alpha) * u
    v = occupancy_at(env, t)
    assert 0 <= v <= env.B_max
    for b in env.breakpoints:
        eps = Fraction(1, 10**15)
        assert abs(occupancy_at(env, b - eps) - occupancy_at(env, b + eps)) < Fraction(1, 10**3)


def test_aggregate_examples():
    net = reference_network(E=1)
    env = _envelope(net, 4 * M)
    assert aggregate_occupancy([env], env.mu) == occupancy_at(env, env.mu)
    later = env.shifted(env.beta - env.alpha + 1)
    assert aggregate_peak([env, later])[1] == env.B_max


def test_aggregate_peak_matches_oracle_for_overlapping_cpes():
    net = reference_network(E=2)
    grants = [3 * M, 5 * M]
    sched = segregated_schedule(net, grants)
    envs = []
    for c, G in enumerate(grants):
        tl = single_cpe_timeline(net, c, G)
        envs.append(OccupancyEnvelope.from_timeline(net, tl).shifted(sched.cpe_starts[c] - tl.sigma_c))
    _, predicted = aggregate_peak(envs)
    tr = oracle_replay(net, grants, "seg")
    # the oracle runs on the 1 ns grid; each rounded start moves a peak by at most R_d * 1 ns
    assert abs(tr.aggregate_peak - predicted) <= Fraction(2 * net.R_d, NS_PER_S)


# -- segregated ------------------------------------------------------------------


def test_segregated_single_cpe_is_mu1():
    net = reference_network(E=1)
    assert segregated_schedule(net, [7 * M]).onu_start == single_cpe_timeline(net, 0, 7 * M).mu_c


def test_segregated_identical_pair():
    net = reference_network(E=2)
    s = segregated_schedule(net, [4 * M, 4 * M])
    assert s.onu_start == single_cpe_timeline(net, 0, 4 * M).mu_c


@given(st.lists(st.integers(M, 20 * M), min_size=1, max_size=8))
def test_sub_windows_contiguous(grants):
    net = reference_network(E=len(grants))
    grants = sorted(grants)
    s = segregated_schedule(net, grants)
    per_bit = Fraction(1, net.R_p)
    assert s.sub_window_starts[0] == s.onu_start
    for c in range(len(grants) - 1):
        assert s.sub_window_starts[c + 1] == s.sub_window_starts[c] + grants[c] * per_bit


def test_segregated_eight_cpes_multiple_of_M_oracle_clean():
    import random
    rng = random.Random(11)
    net = reference_network()
    for _ in range(30):
        grants = [rng.randint(1, 8) * M for _ in range(8)]
        assert oracle_replay(net, grants, "seg", peaks=False).clean


@settings(max_examples=60)
@given(st.integers(1, 8).flatmap(lambda E: st.tuples(
    st.lists(st.integers(M, 20 * M), min_size=E, max_size=E),
    st.lists(st.integers(0, 5000), min_size=E, max_size=E))))
def test_gapless_and_no_underrun(case):
    grants, deltas = case
    net = reference_network(E=len(grants), delta=tuple(d * 1e-9 for d in deltas))
    for mode in ("seg", "mux"):
        tr = oracle_replay(net, grants, mode, peaks=False)
        assert tr.clean, (mode, tr.gaps[:2], tr.underruns[:2])


def test_mu_E_can_fall_when_an_earlier_grant_grows():
    # a larger first window pushes the second sub-window back, loosening its constraint
    net = reference_network(E=2)
    a = segregated_schedule(net, [M, 12533]).onu_start
    b = segregated_schedule(net, [M + 1, 12533]).onu_start
    assert b == a - Fraction(1, net.R_p)


@settings(max_examples=60)
@given(st.lists(st.integers(M, 20 * M), min_size=2, max_size=6), st.integers(0, 5),
       st.integers(1, 3 * M), st.integers(1, 3000))
def test_schedule_monotone(grants, k, dG, dd):
    k %= len(grants)
    net = reference_network(E=len(grants))
    base = segregated_schedule(net, grants)
    # fixed service order: the window end never moves earlier when a grant grows
    bigger = list(grants)
    bigger[k] += dG
    grown = segregated_schedule(net, bigger)
    end = lambda sc: sc.onu_start + Fraction(sum(sc.grants), net.R_p)
    assert end(grown) >= end(base)
    deltas = [0.0] * len(grants)
    deltas[k] = dd * 1e-9
    assert segregated_schedule(net.with_delta(deltas), grants).onu_start >= base.onu_start


@given(st.lists(st.integers(M, 20 * M), min_size=2, max_size=8))
def test_delayed_start_never_raises_peak(grants):
    grants = sorted(grants)
    net = reference_network(E=len(grants))
    s = segregated_schedule(net, grants)
    for c, G in enumerate(grants):
        tl = single_cpe_timeline(net, c, G)
        assert s.cpe_starts[c] >= tl.sigma_c
        # starting at the earliest instant while still served at mu_c^s holds more
        early = min(G, net.R_d * (s.sub_window_starts[c] - tl.alpha_c))
        assert early >= max_buffer_occupancy(net, G, exact=True)


# -- multiplexed -----------------------------------------------------------------


def test_mux_single_cpe_is_mu1():
    net = reference_network(E=1)
    assert multiplexed_schedule(net, [9 * M]).onu_start == single_cpe_timeline(net, 0, 9 * M).mu_c


def test_mux_infeasible():
    with pytest.raises(ScheduleError):
        multiplexed_schedule(reference_network(E=33), [M] * 33)


def test_mux_equal_grants_equal_starts():
    net = reference_network(E=4)
    s = multiplexed_schedule(net, [6 * M] * 4)
    assert len(set(s.cpe_starts)) == 1
    assert oracle_replay(net, [6 * M] * 4, "mux").clean


# -- PON delay -------------------------------------------------------------------


def test_pon_delay_single_packet():
    d = pon_delay_stats(reference_network(), M)
    assert d.first_packet_delay == 0 and d.last_packet_delay == 0


def test_pon_delay_mean_matches_packet_enumeration():
    net = reference_network(E=1)
    G = 10 * M
    tl = single_cpe_timeline(net, 0, G)
    tau = _sec(net.tau)
    delays = []
    for k in range(1, 11):
        arrived = tl.alpha_c + Fraction(k * M, net.R_d)
        leaves = tl.mu_c + Fraction((k - 1) * M, net.R_p)
        assert leaves >= arrived
        delays.append(leaves - arrived + Fraction(M, net.R_p) + tau)
    assert delays[-1] == Fraction(M, net.R_p) + tau
    d = pon_delay_stats(net, G)
    assert d.mean_delay == sum(delays) / 10
    assert d.last_packet_delay == 0
