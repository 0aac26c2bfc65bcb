import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from contact_shape.field import (
    ClockKey,
    FieldError,
    HarrisField,
    arrivals,
    box_edges,
    box_edges_sized,
    edges_touching_box,
    idem_disagreements,
    idem_holds,
    replica_seed,
    shift_space,
    shift_time,
    thin,
)
from contact_shape.oracle import pooled_chisquare
from contact_shape._rng import TICKS_PER_UNIT, to_ticks


def _field(seed=1, d=1, lm=3.0):
    return HarrisField(seed, d, lm)


def test_arrivals_are_deterministic_and_order_free():
    f = _field(7, 2)
    k1 = ClockKey.for_edge((0, 0), (1, 0))
    k2 = ClockKey.for_site((3, -2))
    a = arrivals(f, k1, 5.0)
    arrivals(f, k2, 5.0)
    b = arrivals(_field(7, 2), k1, 5.0)
    assert a == b
    assert len(a) > 0
    assert np.all(np.diff(a.times) > 0)
    assert np.all((a.times > 0) & (a.times <= 5.0))
    assert np.all((a.marks > 0) & (a.marks < 1))


def test_distinct_keys_and_seeds_give_distinct_clocks():
    f = _field(3)
    e = ClockKey.for_edge((0,), (1,))
    assert arrivals(f, e, 20) != arrivals(f, ClockKey.for_edge((1,), (2,)), 20)
    assert arrivals(f, e, 20) != arrivals(_field(4), e, 20)


def test_edge_key_is_undirected():
    assert ClockKey.for_edge((2, 1), (1, 1)) == ClockKey.for_edge((1, 1), (2, 1))
    with pytest.raises(FieldError):
        ClockKey.for_edge((0, 0), (1, 1))


def test_horizon_extension_keeps_prefix():
    f = _field(11)
    k = ClockKey.for_edge((0,), (1,))
    short, long = arrivals(f, k, 3.0), arrivals(f, k, 9.5)
    n = len(short)
    assert np.array_equal(long.times[:n], short.times)
    assert np.all(long.times[n:] > 3.0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**40),
    lam_a=st.floats(0.0, 3.0),
    lam_b=st.floats(0.0, 3.0),
)
def test_thinning_is_nested(seed, lam_a, lam_b):
    lo, hi = sorted((lam_a, lam_b))
    seq = arrivals(_field(seed), ClockKey.for_edge((0,), (1,)), 6.0)
    small, big = thin(seq, lo, 3.0), thin(seq, hi, 3.0)
    assert set(small.times) <= set(big.times)
    assert len(thin(seq, 3.0, 3.0)) == len(seq)


def test_thin_rejects_sites_and_bad_rates():
    f = _field()
    with pytest.raises(FieldError):
        thin(arrivals(f, ClockKey.for_site((0,)), 1.0), 1.0, 3.0)
    with pytest.raises(FieldError):
        thin(arrivals(f, ClockKey.for_edge((0,), (1,)), 1.0), 4.0, 3.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), s=st.integers(0, 40), t=st.integers(0, 40))
def test_time_shifts_compose(seed, s, t):
    f = _field(seed)
    k = ClockKey.for_edge((0,), (1,))
    s, t = s / 8, t / 8
    a = arrivals(shift_time(shift_time(f, s), t), k, 4.0)
    b = arrivals(shift_time(f, s + t), k, 4.0)
    assert a == b


def test_time_shift_sees_window_of_base_clock():
    f = _field(5)
    k = ClockKey.for_edge((0,), (1,))
    base = arrivals(f, k, 12.0)
    view = arrivals(shift_time(f, 4.25), k, 5.0)
    sel = (base.times > 4.25) & (base.times <= 9.25)
    assert np.array_equal(view.times, base.times[sel] - 4.25)
    assert np.array_equal(view.marks, base.marks[sel])


def test_space_shift_translates_keys():
    f = _field(9, 2)
    x = (3, -1)
    k = ClockKey.for_edge((0, 0), (0, 1))
    assert arrivals(shift_space(f, x), k, 5.0).times.tolist() == arrivals(
        f, k.translated(x), 5.0
    ).times.tolist()
    g = shift_space(shift_space(f, (1, 1)), (-1, -1))
    assert arrivals(g, k, 5.0) == arrivals(f, k, 5.0)


def test_idem_count_matches_thinned_arrivals():
    # second route: compare thinned clocks edge by edge
    f = shift_time(_field(21, 2, 3.0), 1.5)
    edges = box_edges(2, 2)
    lam, lam_p, t = 2.0, 1.7, 4.0
    direct = 0
    for e in edges:
        seq = arrivals(f, e, t)
        a, b = thin(seq, lam, 3.0), thin(seq, lam_p, 3.0)
        direct += not np.array_equal(a.times, b.times)
    assert idem_disagreements(f, edges, t, lam, lam_p) == direct
    assert idem_holds(f, edges, t, 2.0, 2.0)


def test_box_edge_counts():
    # 2 * side * (side - 1) edges in a side x side square
    assert len(box_edges_sized(7, 2)) == 84
    assert len(box_edges(3, 2)) == 84
    assert len(box_edges(4, 1)) == 8
    # touching edges of [-r, r]: the box edges plus 2d boundary edges per face site
    assert len(edges_touching_box(4, 1)) == 10
    assert len(edges_touching_box(1, 2)) == 12 + 4 * 3


def test_tick_quantization():
    assert TICKS_PER_UNIT == 2**36
    assert to_ticks(1.5) == 3 * 2**35


def test_bad_fields():
    with pytest.raises(FieldError):
        HarrisField(0, 0, 3.0)
    with pytest.raises(FieldError):
        HarrisField(0, 1, 100.0)
    with pytest.raises(FieldError):
        shift_time(_field(), -1.0)
    with pytest.raises(FieldError):
        arrivals(_field(d=1), ClockKey.for_site((0, 0)), 1.0)


def test_site_marks_are_empty_and_trivial_thinning():
    f = _field(2)
    assert len(arrivals(f, ClockKey.for_site((0,)), 5.0).marks) == 0
    seq = arrivals(f, ClockKey.for_edge((0,), (1,)), 10.0)
    assert thin(seq, 3.0, 3.0) == seq
    assert len(thin(seq, 0.0, 3.0)) == 0


def test_zero_shifts_are_identity():
    f = _field(6, 2)
    k = ClockKey.for_edge((0, 0), (1, 0))
    assert arrivals(shift_time(f, 0.0), k, 5.0) == arrivals(f, k, 5.0)
    assert arrivals(shift_space(f, (0, 0)), k, 5.0) == arrivals(f, k, 5.0)


def test_space_shift_preserves_count_law():
    n, h = 10_000, 2.0
    k = ClockKey.for_edge((0,), (1,))
    counts = np.array([
        len(arrivals(shift_space(HarrisField(replica_seed(1, r), 1, 3.0), (17,)), k, h))
        for r in range(n)
    ])
    m = counts.max()
    exp = stats.poisson.pmf(np.arange(m + 2), 3.0 * h) * n
    exp[-1] += stats.poisson.sf(m + 1, 3.0 * h) * n
    _, _, p, _ = pooled_chisquare(np.bincount(counts, minlength=m + 2).astype(float), exp)
    assert p > 1e-3


def test_single_edge_disagreement_law():
    # disagreements on one edge form a Poisson process of rate |lam - lam'|
    n = 10_000
    e = [ClockKey.for_edge((0,), (1,))]
    bad = sum(not idem_holds(HarrisField(replica_seed(2, r), 1, 3.0), e, 1.0, 2.0, 2.3) for r in range(n))
    q = 1 - np.exp(-0.3)
    assert abs(bad / n - q) < 3 * np.sqrt(q * (1 - q) / n)
