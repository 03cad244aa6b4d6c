import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoonsim.channel import (
    DOWNLINK,
    UPLINK,
    ChannelRng,
    CurveError,
    LossEntry,
    LossSchedule,
    PdrCurve,
    builtin_curve,
    load_curve,
    lossless_curve,
    pdr_at_distance,
    transmit,
)


# -- curve lookup ---------------------------------------------------------------


def test_lookup_uses_first_bin_with_higher_upper_bound():
    curve = PdrCurve("x", ((25.0, 0.9), (50.0, 0.8)), tail_pdr=0.5)
    assert curve.pdr_at(0.0) == 0.9
    assert curve.pdr_at(24.999) == 0.9
    assert curve.pdr_at(25.0) == 0.8  # upper bound is exclusive
    assert curve.pdr_at(49.0) == 0.8
    assert curve.pdr_at(50.0) == 0.5
    assert curve.pdr_at(1000.0) == 0.5
    assert pdr_at_distance(curve, 10.0) == 0.9


def test_lookup_rejects_negative_distance():
    with pytest.raises(ValueError):
        lossless_curve().pdr_at(-1.0)


@pytest.mark.parametrize(
    "bins,tail",
    [
        (((25.0, 0.9), (25.0, 0.8)), 0.5),   # non-increasing bounds
        (((50.0, 0.9), (25.0, 0.8)), 0.5),   # decreasing bounds
        (((-1.0, 0.9),), 0.5),               # non-positive bound
        (((25.0, 1.5),), 0.5),               # pdr > 1
        (((25.0, 0.9),), -0.1),              # tail out of range
    ],
)
def test_curve_validation(bins, tail):
    with pytest.raises(CurveError):
        PdrCurve("x", bins, tail)


def test_load_curve_errors():
    with pytest.raises(CurveError, match="line"):
        load_curve("{not json")
    with pytest.raises(CurveError, match="unknown curve fields"):
        load_curve('{"protocol": "x", "bins": [], "tail_pdr": 1.0, "oops": 1}')
    with pytest.raises(CurveError, match="missing curve field"):
        load_curve('{"protocol": "x", "bins": []}')
    with pytest.raises(CurveError, match="bin 0"):
        load_curve('{"protocol": "x", "bins": [{"pdr": 1.0}], "tail_pdr": 1.0}')


def test_builtin_curves_and_dominance():
    dsrc = builtin_curve("dsrc")
    lte = builtin_curve("lte")
    assert dsrc.protocol_name == "dsrc"
    assert lte.protocol_name == "lte"
    # long-distance anchors
    assert dsrc.pdr_at(80.0) == 0.91
    assert lte.pdr_at(80.0) == 0.97
    # pointwise dominance over the whole distance axis
    for d in [x * 0.5 for x in range(0, 500)]:
        assert lte.pdr_at(d) >= dsrc.pdr_at(d)
    # monotone non-increasing in distance
    for curve in (dsrc, lte):
        pdrs = [pdr for _, pdr in curve.bins] + [curve.tail_pdr]
        assert pdrs == sorted(pdrs, reverse=True)


def test_unknown_builtin_protocol():
    with pytest.raises(CurveError, match="unknown protocol"):
        builtin_curve("wimax")


# -- rng / transmit ---------------------------------------------------------------


def test_equal_seeds_give_identical_delivery_sequences():
    curve = builtin_curve("dsrc")
    seq = []
    for _ in range(2):
        rng = ChannelRng(seed=1234)
        seq.append(
            [transmit(curve, rng, None, 80.0, t, DOWNLINK, 1) for t in range(1000)]
        )
    assert seq[0] == seq[1]


def test_forced_loss_overrides_even_lossless_curve():
    rng = ChannelRng(seed=0)
    schedule = LossSchedule.from_entries(
        [LossEntry(DOWNLINK, vehicle_id=4, tick_lo=10, tick_hi=20)]
    )
    curve = lossless_curve()
    for tick in range(30):
        delivered = transmit(curve, rng, schedule, 5.0, tick, DOWNLINK, 4)
        assert delivered == (not 10 <= tick <= 20)
    # entries are keyed on direction and vehicle too
    assert transmit(curve, rng, schedule, 5.0, 15, UPLINK, 4)
    assert transmit(curve, rng, schedule, 5.0, 15, DOWNLINK, 3)


def test_schedule_match_still_consumes_one_draw():
    # the stream stays aligned between a run and its fault-injection variant
    schedule = LossSchedule.from_entries([LossEntry(DOWNLINK, 0, 0, 4)])
    curve = builtin_curve("dsrc")
    rng_a, rng_b = ChannelRng(7), ChannelRng(7)
    for tick in range(50):
        transmit(curve, rng_a, None, 90.0, tick, DOWNLINK, 0)
        transmit(curve, rng_b, schedule, 90.0, tick, DOWNLINK, 0)
    assert rng_a.draw() == rng_b.draw()


def test_bernoulli_rate_at_anchor_pdr():
    rng = ChannelRng(seed=42)
    curve = PdrCurve("x", (), tail_pdr=0.91)
    n = 100_000
    delivered = sum(transmit(curve, rng, None, 10.0, t, UPLINK, 0) for t in range(n))
    assert abs(delivered / n - 0.91) < 0.01


@settings(max_examples=200, deadline=None)
@given(d=st.floats(0.0, 500.0))
def test_pdr_is_probability(d):
    for curve in (builtin_curve("dsrc"), builtin_curve("lte"), lossless_curve()):
        assert 0.0 <= curve.pdr_at(d) <= 1.0
