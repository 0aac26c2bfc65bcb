import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contact_shape.field import (
    ClockKey,
    HarrisField,
    arrivals,
    box_edges,
    replica_seed,
    shift_space,
    shift_time,
)
from contact_shape.sim import (
    SimulationError,
    SurvivalPolicy,
    Window,
    hitting_time,
    infected_region,
    lifetime,
    simulate,
    simulate_coupled,
    simulate_sets,
    survival_proxy,
)


def reference_replay(field, lam, initial, radius, horizon):
    """Event-by-event replay straight from the clock API."""
    d = field.dimension
    events = []
    for idx in np.ndindex(*(2 * radius + 1,) * d):
        site = tuple(int(c) - radius for c in idx)
        for t in arrivals(field, ClockKey.for_site(site), horizon).times:
            events.append((t, "rec", site, None))
    for e in box_edges(radius, d):
        seq = arrivals(field, e, horizon)
        a, b = e.endpoints()
        for t, m in zip(seq.times, seq.marks):
            if m <= lam / field.lambda_max:
                events.append((t, "inf", a, b))
    events.sort(key=lambda ev: ev[0])
    infected = set(initial)
    first = {s: 0.0 for s in infected}
    ext = None
    for t, kind, a, b in events:
        if not infected:
            break
        if kind == "rec":
            infected.discard(a)
            if not infected:
                ext = t
        else:
            for src, dst in ((a, b), (b, a)):
                if src in infected and dst not in infected:
                    infected.add(dst)
                    first.setdefault(dst, t)
                    break
    return first, frozenset(infected), ext


@pytest.mark.parametrize("seed,d,lam,radius,horizon", [
    (1, 1, 2.0, 6, 6.0),
    (2, 1, 3.0, 8, 8.0),
    (3, 2, 1.5, 3, 3.0),
    (4, 2, 2.5, 3, 2.5),
    (5, 1, 0.7, 5, 10.0),
])
def test_kernel_matches_reference_replay(seed, d, lam, radius, horizon):
    f = shift_time(HarrisField(seed, d, 3.0), 0.75)
    init = [(0,) * d]
    tr = simulate(f, lam, init, Window(radius, "cutoff"), horizon)
    first, final, ext = reference_replay(f, lam, set(init), radius, horizon)
    assert tr.first_hit == pytest.approx(first, abs=0)
    assert tr.final_config == final
    assert tr.extinction_time == ext


def test_event_log_reconstructs_configuration():
    f = HarrisField(8, 1, 3.0)
    tr = simulate(f, 2.5, [(0,)], Window(12), 5.0, record_events=True)
    assert tr.configuration_at(5.0) == tr.final_config
    for t in (0.5, 1.7, 3.3):
        conf = tr.configuration_at(t)
        assert conf <= infected_region(tr, t)
    assert np.all(np.diff(tr.events.times) >= 0)


def test_hitting_time_and_region():
    f = HarrisField(3, 1, 3.0)
    tr = simulate(f, 3.0, [(0,)], Window(30), 8.0)
    assert hitting_time(tr, (0,)) == 0.0
    t1 = hitting_time(tr, (1,))
    if t1 is not None:
        assert (1,) in infected_region(tr, t1)
        assert (1,) not in infected_region(tr, np.nextafter(t1, 0))
    with pytest.raises(SimulationError):
        hitting_time(tr, (99,))
    with pytest.raises(SimulationError):
        infected_region(tr, 9.0)


def test_boundary_flag():
    f = HarrisField(0, 1, 3.0)
    hit = [simulate(HarrisField(s, 1, 3.0), 3.0, [(0,)], Window(2), 20.0).boundary_hit for s in range(20)]
    assert any(hit)
    cut = simulate(f, 3.0, [(0,)], Window(2, "cutoff"), 20.0)
    assert not cut.boundary_hit


def test_lifetime_of_isolated_site():
    # rate zero: the origin dies at its first recovery
    f = HarrisField(4, 1, 3.0)
    tr = simulate(f, 0.0, [(0,)], Window(1), 50.0)
    first_rec = arrivals(f, ClockKey.for_site((0,)), 50.0).times[0]
    lt = lifetime(tr)
    assert lt.extinct and lt.time == first_rec


def _random_sets(draw, d, r, k):
    pts = st.tuples(*[st.integers(-r, r)] * d)
    return draw(st.lists(pts, min_size=1, max_size=k, unique=True))


@settings(max_examples=40, deadline=None)
@given(data=st.data(), seed=st.integers(0, 2**32), d=st.sampled_from([1, 2]))
def test_additivity_and_set_monotonicity(data, seed, d):
    A = _random_sets(data.draw, d, 2, 4)
    B = data.draw(st.sets(st.sampled_from(A)))
    f = HarrisField(seed, d, 3.0)
    W = Window(12 if d == 1 else 6)
    h = 3.0
    runs = simulate_sets(f, 2.0, [A] + [[a] for a in A] + ([list(B)] if B else []), W, h)
    union = frozenset().union(*(r.final_config for r in runs[1:1 + len(A)]))
    assert runs[0].final_config == union
    if B:
        assert runs[-1].final_config <= runs[0].final_config


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), d=st.sampled_from([1, 2]))
def test_rate_monotonicity(seed, d):
    f = HarrisField(seed, d, 3.0)
    W = Window(14 if d == 1 else 6)
    rates = [1.8, 2.2, 2.6]
    runs = simulate_coupled(f, rates, [(0,) * d], W, 4.0)
    for lo, hi in zip(rates, rates[1:]):
        assert runs[lo].final_config <= runs[hi].final_config
        a, b = runs[lo].first_hit, runs[hi].first_hit
        assert all(s in b and b[s] <= t for s, t in a.items())


def test_coupled_equals_separate():
    f = HarrisField(12, 2, 3.0)
    W = Window(5)
    both = simulate_coupled(f, [1.5, 2.5], [(0, 0)], W, 3.0)
    for lam in (1.5, 2.5):
        alone = simulate(f, lam, [(0, 0)], W, 3.0)
        assert alone.first_hit == both[lam].first_hit
        assert alone.final_config == both[lam].final_config


def test_shifted_view_equals_translated_start():
    # the view shifted by x started at 0 matches the base started at x
    f = HarrisField(6, 1, 3.0)
    x = (4,)
    a = simulate(shift_space(f, x), 2.0, [(0,)], Window(10, "cutoff"), 3.0)
    first, final, ext = reference_replay(shift_space(f, x), 2.0, {(0,)}, 10, 3.0)
    assert a.final_config == final and a.extinction_time == ext


def test_survival_proxy_is_monotone_in_rate():
    pol = SurvivalPolicy(T_surv=20.0)
    for s in range(15):
        f = HarrisField(s, 1, 3.0)
        lo = survival_proxy(f, 1.8, (0,), 0.0, pol)
        hi = survival_proxy(f, 2.6, (0,), 0.0, pol)
        assert hi.survives or not lo.survives
        if not lo.survives:
            assert lo.death_time > 0


def test_validation():
    f = HarrisField(0, 1, 3.0)
    with pytest.raises(SimulationError):
        simulate(f, 3.5, [(0,)], Window(3), 1.0)
    with pytest.raises(SimulationError):
        simulate(f, 2.0, [(5,)], Window(3), 1.0)
    with pytest.raises(SimulationError):
        Window(-1)
    with pytest.raises(SimulationError):
        SurvivalPolicy(T_surv=0)


def test_zero_horizon_and_empty_start():
    f = HarrisField(1, 2, 3.0)
    tr = simulate(f, 2.0, [(0, 0), (1, 0)], Window(3), 0.0, record_events=True)
    assert tr.final_config == {(0, 0), (1, 0)} and len(tr.events) == 0
    empty = simulate(f, 2.0, [], Window(3), 5.0)
    lt = lifetime(empty)
    assert lt.extinct and lt.time == 0.0


def test_single_site_lifetime_is_exponential():
    n = 10_000
    times = [
        simulate(HarrisField(replica_seed(3, r), 1, 3.0), 2.0, [(0,)], Window(0), 50.0).extinction_time
        for r in range(n)
    ]
    assert np.mean(times) == pytest.approx(1.0, abs=3 / 100)


def test_set_containment_at_every_event():
    for seed in range(30):
        f = HarrisField(seed, 1, 3.0)
        small, big = simulate_sets(f, 2.0, [[(0,)], [(0,), (2,), (-1,)]], Window(15), 5.0, record_events=True)
        for t in np.union1d(small.events.times, big.events.times):
            assert small.configuration_at(t) <= big.configuration_at(t)


def test_rate_containment_large_window():
    for r in range(1000):
        runs = simulate_coupled(HarrisField(replica_seed(4, r), 1, 3.0), [1.8, 2.2, 2.6], [(0,)], Window(50), 20.0)
        assert runs[1.8].final_config <= runs[2.2].final_config <= runs[2.6].final_config


def test_region_growth_properties():
    f = HarrisField(9, 2, 3.0)
    tr = simulate(f, 2.0, [(0, 0)], Window(6), 3.0)
    assert infected_region(tr, 0.0) == {(0, 0)}
    prev = frozenset()
    for t in (0.0, 0.5, 1.0, 2.0, 3.0):
        cur = infected_region(tr, t)
        assert prev <= cur and all(tr.window.contains(s) for s in cur)
        prev = cur


def test_extinct_run_has_no_hit_for_far_site():
    for seed in range(50):
        tr = simulate(HarrisField(seed, 1, 3.0), 0.5, [(0,)], Window(20), 30.0)
        if tr.extinction_time is not None and (15,) not in tr.first_hit:
            assert hitting_time(tr, (15,)) is None
            return
    pytest.fail("no extinct run found")


def test_subcritical_runs_die():
    alive = sum(
        simulate(HarrisField(replica_seed(6, r), 1, 3.0), 0.5, [(0,)], Window(50), 50.0).extinction_time is None
        for r in range(1000)
    )
    assert alive / 1000 < 0.01


def test_proxy_death_time_is_exact_extinction():
    pol = SurvivalPolicy(T_surv=30.0)
    for s in range(20):
        f = HarrisField(s, 1, 3.0)
        out = survival_proxy(f, 2.0, (3,), 1.25, pol)
        if not out.survives:
            view = shift_space(shift_time(f, 1.25), (3,))
            tr = simulate(view, 2.0, [(0,)], pol.window, 30.0)
            assert out.death_time == pytest.approx(1.25 + tr.extinction_time, abs=1e-9)
            return
    pytest.fail("no dying progeny")


def test_proxy_two_horizon_consistency():
    n = 1000
    a = b = 0
    for r in range(n):
        f = HarrisField(replica_seed(7, r), 1, 3.0)
        a += survival_proxy(f, 2.0, (0,), 0.0, SurvivalPolicy(T_surv=100.0)).survives
        b += survival_proxy(f, 2.0, (0,), 0.0, SurvivalPolicy(T_surv=200.0)).survives
    pa, pb = a / n, b / n
    se = np.sqrt(pa * (1 - pa) / n + pb * (1 - pb) / n)
    assert b <= a and abs(pa - pb) <= 3 * se
