"""Contact-process trajectories replayed from a clock field.

A trajectory is the deterministic replay of every clock of a finite window
on ``(0, horizon]``: a recovery heals its site, an accepted edge arrival
infects a healthy endpoint when the other endpoint is infected. Several
rates (or several initial sets) replayed on one field are coupled exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _kernel
from ._rng import TICKS_PER_UNIT, to_ticks
from .field import HarrisField, shift_space, shift_time_ticks

_NO_ESCAPE = np.iinfo(np.int64).max


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Sites of sup-norm <= radius. Edges leaving the window do not exist.

    With ``boundary_policy="flag"`` an infection of a site on the window
    face sets ``Trajectory.boundary_hit``.
    """

    radius: int
    boundary_policy: str = "flag"

    def __post_init__(self):
        if self.radius < 0:
            raise SimulationError("window radius must be >= 0")
        if self.boundary_policy not in ("cutoff", "flag"):
            raise SimulationError(f"unknown boundary policy {self.boundary_policy!r}")

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    def contains(self, site) -> bool:
        return all(abs(int(c)) <= self.radius for c in site)

    def flat(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        if sites.ndim == 1:
            sites = sites[None, :]
        W = self.width
        out = np.zeros(len(sites), dtype=np.int64)
        for a in range(sites.shape[1]):
            out = out * W + (sites[:, a] + self.radius)
        return out

    def unflat(self, flat: np.ndarray, d: int) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64).copy()
        W = self.width
        out = np.empty((len(flat), d), dtype=np.int64)
        for a in range(d - 1, -1, -1):
            out[:, a] = flat % W - self.radius
            flat //= W
        return out

    def sites(self, d: int) -> np.ndarray:
        return self.unflat(np.arange(self.width**d), d)


def auto_window(horizon: float, growth_constant: float, margin: int = 2) -> Window:
    return Window(int(math.ceil(growth_constant * horizon)) + margin)


@dataclass(frozen=True)
class SurvivalPolicy:
    """Finite-horizon stand-in for infinite survival.

    A progeny alive at ``T_surv`` is declared to survive; its window has
    radius ``ceil(window_factor * T_surv) + 2``. ``max_steps`` caps the
    regeneration recursion of essential hitting times.
    """

    T_surv: float = 150.0
    window_factor: float = 4.0
    max_steps: int = 100

    def __post_init__(self):
        if self.T_surv <= 0 or self.window_factor <= 0 or self.max_steps < 1:
            raise SimulationError("invalid survival policy")

    @property
    def window(self) -> Window:
        return auto_window(self.T_surv, self.window_factor)


@dataclass(frozen=True)
class EventLog:
    """Applied events in time order. Recoveries have ``source == site``."""

    times: np.ndarray
    kinds: np.ndarray  # 0 recovery, 1 infection
    sites: np.ndarray
    sources: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class Trajectory:
    lam: float
    initial: tuple
    window: Window
    horizon: float
    hit_sites: np.ndarray
    hit_times: np.ndarray
    final_sites: np.ndarray
    extinction_time: float | None
    boundary_hit: bool
    events: EventLog | None = None
    # clock-time bookkeeping for exact shifts
    start_ticks: int = 0
    hit_ticks: np.ndarray = dc_field(default=None, repr=False)
    extinction_ticks: int | None = None
    event_ticks: np.ndarray = dc_field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.hit_sites.shape[1]

    @cached_property
    def first_hit(self) -> dict:
        return {
            tuple(int(c) for c in s): float(t)
            for s, t in zip(self.hit_sites, self.hit_times)
        }

    @cached_property
    def final_config(self) -> frozenset:
        return frozenset(tuple(int(c) for c in s) for s in self.final_sites)

    @cached_property
    def _hit_lookup(self):
        flat = self.window.flat(self.hit_sites) if len(self.hit_sites) else np.empty(0, np.int64)
        order = np.argsort(flat)
        return flat[order], order

    def hit_time_of(self, sites) -> np.ndarray:
        """Vectorized first-hit lookup; ``inf`` where never hit."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.dimension)
        out = np.full(len(sites), np.inf)
        inside = np.all(np.abs(sites) <= self.window.radius, axis=1)
        keys, order = self._hit_lookup
        if len(keys) and inside.any():
            q = self.window.flat(sites[inside])
            pos = np.searchsorted(keys, q)
            pos = np.minimum(pos, len(keys) - 1)
            found = keys[pos] == q
            vals = np.full(len(q), np.inf)
            vals[found] = self.hit_times[order[pos[found]]]
            out[inside] = vals
        return out

    def configuration_at(self, t: float) -> frozenset:
        """Infected set at time ``t`` (requires a recorded event log)."""
        if self.events is None:
            raise SimulationError("trajectory was replayed without an event log")
        config = set(self.initial)
        ev = self.events
        n = np.searchsorted(ev.times, t, side="right")
        for k in range(n):
            s = tuple(int(c) for c in ev.sites[k])
            if ev.kinds[k] == 0:
                config.discard(s)
            else:
                config.add(s)
        return frozenset(config)


def _as_sites(initial, d) -> np.ndarray:
    arr = np.array(sorted({tuple(int(c) for c in s) for s in initial}), dtype=np.int64)
    return arr.reshape(-1, d)


@dataclass
class RawRun:
    """Kernel output for one replay, in window-flat indices and clock ticks."""

    ext: np.ndarray
    boundary: np.ndarray
    escaped: np.ndarray
    final_sites: np.ndarray
    final_masks: np.ndarray
    hit_copy: np.ndarray
    hit_site: np.ndarray
    hit_tick: np.ndarray
    log_tick: np.ndarray
    log_kind: np.ndarray
    log_site: np.ndarray
    log_src: np.ndarray
    log_copy: np.ndarray
    n_events: int

    def copy_bits(self, ncopies: int) -> np.ndarray:
        """Boolean (n_final_sites, ncopies) membership matrix."""
        if len(self.final_sites) == 0:
            return np.zeros((0, ncopies), dtype=bool)
        bits = np.unpackbits(
            self.final_masks.astype("<u8").view(np.uint8), axis=1, bitorder="little"
        )
        return bits[:, :ncopies].astype(bool)

    def flag_bits(self, words: np.ndarray, ncopies: int) -> np.ndarray:
        bits = np.unpackbits(
            words.astype("<u8").view(np.uint8), bitorder="little"
        )
        return bits[:ncopies].astype(bool)


def replay_copies(
    field: HarrisField,
    thresholds: Sequence[float],
    initials: Sequence[np.ndarray],
    window: Window,
    horizon_ticks: int,
    starts_ticks: Sequence[int] | None = None,
    track_hits: bool = True,
    record_log: bool = False,
    escape_radius: int | None = None,
    watch_sites: np.ndarray | None = None,
) -> RawRun:
    """Low-level coupled replay.

    ``initials[c]`` are view coordinates (k, d) of copy ``c``; ``starts``
    are ticks relative to the view origin. ``watch_sites`` (view
    coordinates) restricts the event log to those sites.
    """
    d = field.dimension
    nc = len(thresholds)
    t_off = field.time_ticks
    if starts_ticks is None:
        starts = np.full(nc, t_off, dtype=np.int64)
    else:
        starts = t_off + np.asarray(starts_ticks, dtype=np.int64)
    ptr = np.zeros(nc + 1, dtype=np.int64)
    flats = []
    for c, init in enumerate(initials):
        init = np.asarray(init, dtype=np.int64).reshape(-1, d)
        flats.append(window.flat(init) if len(init) else np.empty(0, np.int64))
        ptr[c + 1] = ptr[c] + len(init)
    flat = np.concatenate(flats) if flats else np.empty(0, np.int64)
    n_sites = window.width**d
    if n_sites * max(1, (nc + 63) // 64) > 200_000_000:
        raise SimulationError("window too large for a dense replay")
    watch = np.zeros(0, dtype=np.bool_)
    if watch_sites is not None:
        watch = np.zeros(n_sites, dtype=np.bool_)
        ws = np.asarray(watch_sites, dtype=np.int64).reshape(-1, d)
        watch[window.flat(ws)] = True
    out = _kernel.replay(
        field.useed,
        d,
        window.radius,
        float(field.lambda_max),
        t_off,
        np.asarray(field.space_offset, dtype=np.int64),
        t_off + int(horizon_ticks),
        np.asarray(thresholds, dtype=np.float64),
        starts,
        ptr,
        flat,
        bool(track_hits),
        bool(record_log),
        _NO_ESCAPE if escape_radius is None else int(escape_radius),
        watch,
    )
    return RawRun(*out[:-1], n_events=int(out[-1]))


def _validate(field, lambdas, initial_sites, window, horizon):
    for lam in lambdas:
        if not 0 <= lam <= field.lambda_max:
            raise SimulationError(f"rate {lam} outside [0, {field.lambda_max}]")
    if horizon < 0:
        raise SimulationError("negative horizon")
    if len(initial_sites) and np.any(np.abs(initial_sites) > window.radius):
        raise SimulationError("initial set leaves the window")


def _trajectory(field, raw, copy, lam, init_sites, window, horizon, h_ticks, record):
    d = field.dimension
    t0 = field.time_ticks
    sel = raw.hit_copy == copy
    hit_ticks = raw.hit_tick[sel]
    hit_sites = window.unflat(raw.hit_site[sel], d)
    ext_t = int(raw.ext[copy])
    bits = raw.copy_bits(len(raw.ext))
    final = window.unflat(raw.final_sites[bits[:, copy]], d) if len(bits) else np.empty((0, d), np.int64)
    events = None
    ev_ticks = None
    if record:
        es = raw.log_copy == copy
        ev_ticks = raw.log_tick[es]
        events = EventLog(
            (ev_ticks - t0) / TICKS_PER_UNIT,
            raw.log_kind[es].copy(),
            window.unflat(raw.log_site[es], d),
            window.unflat(raw.log_src[es], d),
        )
    bnd = bool(raw.flag_bits(raw.boundary, len(raw.ext))[copy])
    return Trajectory(
        lam=float(lam),
        initial=tuple(tuple(int(c) for c in s) for s in init_sites),
        window=window,
        horizon=float(horizon),
        hit_sites=hit_sites,
        hit_times=(hit_ticks - t0) / TICKS_PER_UNIT,
        final_sites=final,
        extinction_time=None if ext_t < 0 else (ext_t - t0) / TICKS_PER_UNIT,
        boundary_hit=bnd and window.boundary_policy == "flag",
        events=events,
        start_ticks=t0,
        hit_ticks=hit_ticks,
        extinction_ticks=None if ext_t < 0 else ext_t,
        event_ticks=ev_ticks,
    )


def simulate_coupled(
    field: HarrisField,
    lambdas: Iterable[float],
    initial,
    window: Window,
    horizon: float,
    record_events: bool = False,
) -> dict:
    """Replay one field at several rates; returns ``{rate: Trajectory}``."""
    lambdas = [float(v) for v in lambdas]
    d = field.dimension
    init = _as_sites(initial, d)
    _validate(field, lambdas, init, window, horizon)
    h_ticks = to_ticks(horizon)
    thr = [lam / field.lambda_max for lam in lambdas]
    raw = replay_copies(
        field, thr, [init] * len(lambdas), window, h_ticks, record_log=record_events
    )
    return {
        lam: _trajectory(field, raw, c, lam, init, window, horizon, h_ticks, record_events)
        for c, lam in enumerate(lambdas)
    }


def simulate(
    field: HarrisField,
    lam: float,
    initial,
    window: Window,
    horizon: float,
    record_events: bool = False,
) -> Trajectory:
    return simulate_coupled(field, [lam], initial, window, horizon, record_events)[
        float(lam)
    ]


def simulate_sets(
    field: HarrisField,
    lam: float,
    initials: Sequence,
    window: Window,
    horizon: float,
    record_events: bool = False,
) -> list:
    """Replay several initial sets at one rate on the same clocks."""
    d = field.dimension
    inits = [_as_sites(a, d) for a in initials]
    for init in inits:
        _validate(field, [lam], init, window, horizon)
    h_ticks = to_ticks(horizon)
    raw = replay_copies(
        field,
        [lam / field.lambda_max] * len(inits),
        inits,
        window,
        h_ticks,
        record_log=record_events,
    )
    return [
        _trajectory(field, raw, c, lam, init, window, horizon, h_ticks, record_events)
        for c, init in enumerate(inits)
    ]


def _check_site(traj: Trajectory, x):
    x = tuple(int(c) for c in x)
    if len(x) != traj.dimension or not traj.window.contains(x):
        raise SimulationError(f"site {x} outside the window")
    return x


def hitting_time(traj: Trajectory, x) -> float | None:
    """First infection time of ``x``, or None if never infected."""
    x = _check_site(traj, x)
    return traj.first_hit.get(x)


def infected_region(traj: Trajectory, t: float) -> frozenset:
    """Sites infected at some time <= t."""
    if not 0 <= t <= traj.horizon:
        raise SimulationError(f"time {t} outside [0, {traj.horizon}]")
    keep = traj.hit_times <= t
    return frozenset(tuple(int(c) for c in s) for s in traj.hit_sites[keep])


@dataclass(frozen=True)
class Lifetime:
    extinct: bool
    time: float | None = None


def lifetime(traj: Trajectory) -> Lifetime:
    if traj.extinction_time is not None and traj.extinction_time <= traj.horizon:
        return Lifetime(True, traj.extinction_time)
    return Lifetime(False)


@dataclass(frozen=True)
class ProxyOutcome:
    """``survives``, or death at ``death_time`` on the caller's clock."""

    survives: bool
    death_time: float | None = None
    death_ticks: int | None = None


def progeny_view(field: HarrisField, x, t0_ticks: int) -> HarrisField:
    return shift_space(shift_time_ticks(field, t0_ticks), x)


def survival_proxy_ticks(field, lam, x, t0_ticks, policy: SurvivalPolicy, window=None):
    view = progeny_view(field, x, t0_ticks)
    window = policy.window if window is None else window
    raw = replay_copies(
        view,
        [lam / field.lambda_max],
        [np.zeros((1, field.dimension), np.int64)],
        window,
        to_ticks(policy.T_surv),
        track_hits=False,
    )
    ext = int(raw.ext[0])
    if ext < 0:
        return ProxyOutcome(True)
    rel = ext - field.time_ticks
    return ProxyOutcome(False, rel / TICKS_PER_UNIT, rel)


def survival_proxy(
    field: HarrisField, lam: float, x, t0: float, policy: SurvivalPolicy
) -> ProxyOutcome:
    """Does the progeny of (x, t0) stay alive for ``policy.T_surv``?"""
    if not 0 <= lam <= field.lambda_max:
        raise SimulationError(f"rate {lam} outside [0, {field.lambda_max}]")
    return survival_proxy_ticks(field, lam, x, to_ticks(t0), policy)
