"""Essential hitting times and the regeneration shift.

``sigma(x)`` is the first time ``x`` is infected from the origin by a point
whose own progeny lives forever. It is found by alternating two stopping
times on one base run: ``u_{k+1}`` is the first time at or after ``v_k``
when ``x`` is infected, and ``v_k`` is ``u_k`` plus the lifetime of the
progeny of ``(x, u_k)``. "Forever" is decided by the survival proxy.

All times are kept in clock ticks as well, so shifting by ``sigma`` is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from ._rng import TICKS_PER_UNIT, to_ticks
from .field import (
    HarrisField,
    edges_touching_box,
    idem_holds,
    shift_space,
    shift_time_ticks,
)
from ._kernel import LOG_RECOVERY
from .sim import (
    SimulationError,
    SurvivalPolicy,
    Window,
    replay_copies,
    survival_proxy_ticks,
)

REGENERATED = "regenerated"
INITIAL_DIED = "initial_died"
HORIZON_EXHAUSTED = "horizon_exhausted"
STEP_CAPPED = "step_capped"
STATUSES = (REGENERATED, INITIAL_DIED, HORIZON_EXHAUSTED, STEP_CAPPED)


@dataclass(frozen=True)
class HittingRecord:
    """The u/v recursion for one site.

    ``u`` holds ``u_0 .. u_K`` and ``v`` holds ``v_0 .. v_{K-1}``; the
    progeny started at ``u_K`` is the one that survives. For records that
    did not regenerate, ``u`` and ``v`` hold whatever was reached and
    ``sigma`` is None.
    """

    x: tuple
    lam: float
    u: tuple
    v: tuple
    K: int
    sigma: float | None
    status: str
    u_ticks: tuple = dc_field(default=(), repr=False)
    v_ticks: tuple = dc_field(default=(), repr=False)
    boundary_hit: bool = False

    @property
    def regenerated(self) -> bool:
        return self.status == REGENERATED

    @property
    def sigma_ticks(self) -> int | None:
        return self.u_ticks[-1] if self.regenerated else None

    @property
    def hitting_time(self) -> float | None:
        """First infection time of x (``u_1``), if reached."""
        return self.u[1] if len(self.u) > 1 else None

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "lambda": self.lam,
            "u": list(self.u),
            "v": list(self.v),
            "K": self.K,
            "sigma": self.sigma,
            "status": self.status,
            "boundary_hit": self.boundary_hit,
        }


@dataclass
class BaseRun:
    """Origin run at one rate with the on/off history of watched sites."""

    field: HarrisField
    lam: float
    window: Window
    horizon_ticks: int
    extinction_ticks: int | None
    boundary_hit: bool
    hit_flat: np.ndarray
    hit_ticks: np.ndarray
    # per watched site: sorted (on_tick, off_tick) intervals, off = -1 if open
    intervals: dict

    @property
    def end_ticks(self) -> int:
        return self.field.time_ticks + self.horizon_ticks

    def infected_by(self, ticks: int) -> np.ndarray:
        """Flat indices of sites infected at some tick <= ``ticks``."""
        return self.hit_flat[self.hit_ticks <= ticks]


def _site_key(x, d):
    x = tuple(int(c) for c in x)
    if len(x) != d:
        raise SimulationError(f"site {x} has the wrong dimension")
    return x


def run_base(
    field: HarrisField,
    lam: float,
    sites: Sequence,
    window: Window,
    horizon: float,
) -> BaseRun:
    """Replay the origin process once, watching ``sites``."""
    d = field.dimension
    if not 0 <= lam <= field.lambda_max:
        raise SimulationError(f"rate {lam} outside [0, {field.lambda_max}]")
    sites = [_site_key(x, d) for x in sites]
    for x in sites:
        if not window.contains(x):
            raise SimulationError(f"site {x} outside the window")
    h_ticks = to_ticks(horizon)
    origin = np.zeros((1, d), np.int64)
    raw = replay_copies(
        field,
        [lam / field.lambda_max],
        [origin],
        window,
        h_ticks,
        record_log=True,
        watch_sites=np.array(sites, dtype=np.int64).reshape(-1, d),
    )
    t0 = field.time_ticks
    flats = window.flat(np.array(sites, dtype=np.int64).reshape(-1, d))
    intervals = {}
    origin_flat = int(window.flat(origin)[0])
    for x, fl in zip(sites, flats):
        sel = raw.log_site == fl
        ticks = raw.log_tick[sel]
        kinds = raw.log_kind[sel]
        iv = []
        on = t0 if fl == origin_flat else None
        for tk, kind in zip(ticks, kinds):
            if kind == LOG_RECOVERY:
                iv.append((on, int(tk)))
                on = None
            else:
                on = int(tk)
        if on is not None:
            iv.append((on, -1))
        intervals[x] = iv
    ext = int(raw.ext[0])
    return BaseRun(
        field=field,
        lam=float(lam),
        window=window,
        horizon_ticks=h_ticks,
        extinction_ticks=None if ext < 0 else ext,
        boundary_hit=bool(raw.flag_bits(raw.boundary, 1)[0])
        and window.boundary_policy == "flag",
        hit_flat=raw.hit_site,
        hit_ticks=raw.hit_tick,
        intervals=intervals,
    )


def _next_infected(intervals, v):
    """First tick >= v at which the site is infected, or None."""
    for on, off in intervals:
        if off == -1 or off > v:
            return max(on, v)
    return None


def hitting_from_base(base: BaseRun, x, policy: SurvivalPolicy) -> HittingRecord:
    """Run the u/v recursion for watched site ``x`` of ``base``."""
    field = base.field
    d = field.dimension
    x = _site_key(x, d)
    if x not in base.intervals:
        raise SimulationError(f"site {x} was not watched by the base run")
    iv = base.intervals[x]
    t0 = field.time_ticks
    u = [t0]
    v = [t0]
    boundary = base.boundary_hit
    status = None
    while True:
        nxt = _next_infected(iv, v[-1])
        if nxt is None:
            ext = base.extinction_ticks
            status = INITIAL_DIED if ext is not None else HORIZON_EXHAUSTED
            break
        u.append(nxt)
        if len(u) - 1 > policy.max_steps:
            status = STEP_CAPPED
            break
        out = survival_proxy_ticks(field, base.lam, x, nxt - t0, policy)
        if out.survives:
            status = REGENERATED
            break
        v.append(t0 + out.death_ticks)
    scale = float(TICKS_PER_UNIT)
    u_rel = tuple((t - t0) / scale for t in u)
    v_rel = tuple((t - t0) / scale for t in v)
    return HittingRecord(
        x=x,
        lam=base.lam,
        u=u_rel,
        v=v_rel,
        K=len(u) - 1,
        sigma=u_rel[-1] if status == REGENERATED else None,
        status=status,
        u_ticks=tuple(t - t0 for t in u),
        v_ticks=tuple(t - t0 for t in v),
        boundary_hit=boundary,
    )


def default_window(sites, horizon: float, growth_constant: float) -> Window:
    reach = max((max(abs(int(c)) for c in x) for x in sites), default=0)
    return Window(max(int(math.ceil(growth_constant * horizon)), reach) + 2)


def essential_hitting(
    field: HarrisField,
    lam: float,
    x,
    window: Window | None = None,
    horizon: float | None = None,
    policy: SurvivalPolicy | None = None,
) -> HittingRecord:
    """Essential hitting time of ``x`` from the origin at rate ``lam``.

    The base run covers ``(0, horizon]`` (default ``policy.T_surv``); when
    ``x`` is not re-infected in that span the record reports
    ``horizon_exhausted`` (base still alive) or ``initial_died``.
    """
    policy = SurvivalPolicy() if policy is None else policy
    horizon = policy.T_surv if horizon is None else float(horizon)
    x = _site_key(x, field.dimension)
    if window is None:
        window = default_window([x], horizon, 2.0 * lam)
    base = run_base(field, lam, [x], window, horizon)
    return hitting_from_base(base, x, policy)


def regeneration_view(field: HarrisField, record: HittingRecord) -> HarrisField:
    """The field seen from ``(x, sigma(x))``."""
    if not record.regenerated:
        raise SimulationError(
            f"record has status {record.status!r}; no regeneration point"
        )
    return shift_space(shift_time_ticks(field, record.sigma_ticks), record.x)


@dataclass(frozen=True)
class GEventResult:
    g_holds: bool
    sigma_equal: bool | None
    a_m: bool
    b_l: bool
    idem: bool | None
    survives: bool
    sigma: float | None
    sigma_prime: float | None
    record: HittingRecord
    record_prime: HittingRecord | None = None

    def to_dict(self) -> dict:
        return {
            "g_holds": self.g_holds,
            "sigma_equal": self.sigma_equal,
            "A_M": self.a_m,
            "B_L": self.b_l,
            "idem": self.idem,
            "survives": self.survives,
            "sigma": self.sigma,
            "sigma_prime": self.sigma_prime,
        }


def progeny_confined(view: HarrisField, lam: float, radius: int, duration: float):
    """Replay the origin progeny on ``view`` for ``duration``.

    Returns ``(confined, alive)``: whether every infected site stays within
    sup-norm ``radius`` and whether the progeny is alive at the end.
    """
    d = view.dimension
    win = Window(radius + 1, "cutoff")
    raw = replay_copies(
        view,
        [lam / view.lambda_max],
        [np.zeros((1, d), np.int64)],
        win,
        to_ticks(duration),
        track_hits=False,
        escape_radius=radius + 1,
    )
    confined = not bool(raw.flag_bits(raw.escaped, 1)[0])
    return confined, int(raw.ext[0]) < 0


def g_event_check(
    field: HarrisField,
    lam: float,
    lam_prime: float,
    x,
    M: float,
    L: float,
    policy: SurvivalPolicy | None = None,
    growth_constant: float | None = None,
    window: Window | None = None,
    horizon: float | None = None,
) -> GEventResult:
    """Evaluate the good event on which ``sigma`` is the same at both rates.

    The event is the intersection of: ``sigma <= M`` with everything
    infected by then inside ``[-M, M]^d``; from ``(x, sigma)`` the progeny at
    rate ``lam_prime`` stays in the ``C L`` box up to ``L`` and, if alive
    at ``L``, survives (proxy); and the two rates open the same arrows on
    every edge touching ``[-(M + C L), M + C L]^d`` up to ``M + L``.
    ``C`` is ``growth_constant`` (default ``2 * lam``).
    """
    if lam_prime > lam:
        raise SimulationError("lambda_prime must not exceed lambda")
    if not 0 < lam_prime:
        raise SimulationError("lambda_prime must be positive")
    policy = SurvivalPolicy() if policy is None else policy
    C = 2.0 * lam if growth_constant is None else float(growth_constant)
    CL = int(math.floor(C * L))
    d = field.dimension
    x = _site_key(x, d)
    horizon = max(policy.T_surv, float(M)) if horizon is None else float(horizon)
    if window is None:
        window = default_window([x], horizon, 2.0 * lam)

    base = run_base(field, lam, [x], window, horizon)
    rec = hitting_from_base(base, x, policy)
    origin = survival_proxy_ticks(field, lam, (0,) * d, 0, policy)
    survives = origin.survives

    a_m = False
    if rec.regenerated and rec.sigma <= M:
        infected = window.unflat(base.infected_by(field.time_ticks + rec.sigma_ticks), d)
        a_m = bool(np.all(np.abs(infected) <= M))
    b_l = False
    if rec.regenerated:
        view = regeneration_view(field, rec)
        confined, alive = progeny_confined(view, lam_prime, CL, L)
        b_l = confined
        if confined and alive and L <= policy.T_surv:
            b_l = survival_proxy_ticks(
                field, lam_prime, x, rec.sigma_ticks, policy
            ).survives
        elif confined and alive:
            b_l = False
    idem = None
    if a_m and b_l:
        # arrows leaving the box count too
        edges = edges_touching_box(int(math.floor(M)) + CL, d)
        idem = idem_holds(field, edges, M + L, lam, lam_prime)
    g = bool(a_m and b_l and idem)

    sigma_equal = None
    rec_p = None
    if g and survives:
        base_p = run_base(field, lam_prime, [x], window, horizon)
        rec_p = hitting_from_base(base_p, x, policy)
        sigma_equal = rec_p.regenerated and rec_p.sigma_ticks == rec.sigma_ticks
    return GEventResult(
        g_holds=g,
        sigma_equal=sigma_equal,
        a_m=a_m,
        b_l=b_l,
        idem=idem,
        survives=survives,
        sigma=rec.sigma,
        sigma_prime=None if rec_p is None else rec_p.sigma,
        record=rec,
        record_prime=rec_p,
    )
