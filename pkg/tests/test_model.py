import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from pondsl.model import (NS_PER_S, BufferState, ConfigError, CpeGrant, GrantSet, NetworkConfig,
                          Packet, mux_feasible, reference_network, to_ns, to_seconds, tx_ns, validate)


def test_defaults_are_valid(net):
    assert validate(net) is net
    assert (net.R_p, net.R_d, net.E, net.O) == (2_488_000_000, 77_000_000, 8, 32)
    assert net.Z == 3e-3 and net.guard == 30e-9 and net.M == 12144


def test_validate_is_idempotent(net):
    assert validate(validate(net)) == net


def test_equal_rates_rejected():
    with pytest.raises(ConfigError, match="R_p must exceed R_d"):
        validate(reference_network(R_d=2_488_000_000))


@pytest.mark.parametrize("field,value", [("E", 0), ("O", 0), ("M", 0), ("Z", 0.0),
                                         ("guard", -1e-9), ("tau", -1e-6), ("R_d", 0)])
def test_bounds_name_the_field(field, value):
    with pytest.raises(ConfigError) as exc:
        validate(reference_network(**{field: value}))
    assert exc.value.field == field


def test_delta_length_must_match_E():
    with pytest.raises(ConfigError, match="delta"):
        validate(NetworkConfig(E=2, delta=(0.0,)))


def test_non_integer_ns_rejected():
    with pytest.raises(ConfigError, match="whole number of ns"):
        validate(reference_network(guard=30.5e-9))


def test_mux_feasible_examples():
    assert mux_feasible(reference_network())
    assert mux_feasible(reference_network(E=1, R_d=2_488_000_000 - 1))
    assert not mux_feasible(reference_network(E=33))


def test_limit_bits():
    # 3 ms * 2.488 Gb/s / 32
    assert reference_network().limit_bits == 233_250


def test_time_round_trip_is_identity_for_all_constants(net):
    for name in ("tau", "g_p", "g_d", "Z", "guard"):
        v = getattr(net, name)
        assert to_seconds(to_ns(v)) == Fraction(round(v * NS_PER_S), NS_PER_S)
    assert to_ns(Fraction(3, 1000)) == 3_000_000


@given(st.integers(min_value=0, max_value=10**7), st.integers(min_value=1, max_value=10**10))
def test_tx_ns_is_a_ceiling(bits, rate):
    t = tx_ns(bits, rate)
    assert t * rate >= bits * NS_PER_S
    assert (t - 1) * rate < bits * NS_PER_S or bits == 0


@given(st.integers(0, 10**12), st.integers(0, 10**12))
def test_simtime_closed_under_addition(a, b):
    assert to_ns(to_seconds(a) + to_seconds(b)) == a + b


def test_packet_views():
    p = Packet(size=12144, onu=0, cpe=3, birth=1500)
    assert p.size_bytes == 1518
    assert p.birth_time == Fraction(3, 2_000_000)


def test_grant_set_invariants():
    ok = GrantSet(0, 0, 1000, [CpeGrant(0, 400, 1040, 10), CpeGrant(1, 600, 1040, 10)], origin=5)
    assert ok.check() is ok
    with pytest.raises(ValueError, match="exceed"):
        GrantSet(0, 0, 900, [CpeGrant(0, 400, 1040), CpeGrant(1, 600, 1040)]).check()
    with pytest.raises(ValueError, match="DSL window"):
        GrantSet(0, 0, 1000, [CpeGrant(0, 600, 520)]).check()
    with pytest.raises(ValueError, match="origin"):
        GrantSet(0, 0, 1000, [CpeGrant(0, 100, 520, 3)], origin=5).check()


def test_buffer_state_books_departures():
    b = BufferState(capacity=10_000)
    assert b.admits(6000, 0)
    b.commit(6000)
    b.book_departure(100, 6000)
    assert not b.admits(6000, 50)
    assert b.occupancy(100) == 0
    assert b.admits(6000, 100)
    assert b.peak == 6000
    assert BufferState().capacity == math.inf


@given(st.lists(st.integers(1, 5000), min_size=1, max_size=40))
def test_buffer_peak_never_decreases(sizes):
    b = BufferState()
    last = 0
    for i, s in enumerate(sizes):
        b.commit(s)
        b.book_departure(i, s)
        b.occupancy(i)
        assert b.peak >= last
        assert 0 <= b.committed <= b.peak
        last = b.peak
