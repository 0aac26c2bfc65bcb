"""Seeded space-time clock field for the Harris construction.

Each undirected edge of Z^d carries a Poisson clock of rate ``lambda_max``
whose arrivals carry independent uniform marks; each site carries a rate-1
recovery clock. Thinning an edge clock at threshold ``lambda / lambda_max``
gives the rate-``lambda`` infection arrows, so every rate is read off the
same realization.

Times are quantized to 2**-36 so that time shifts compose exactly; this is
far below any scale the simulations resolve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _rng
from ._kernel import idem_count
from ._rng import TICKS_PER_UNIT, from_ticks, to_ticks

MAX_LAMBDA_MAX = 64.0


class FieldError(ValueError):
    """Invalid query against a clock field."""


@dataclass(frozen=True, order=True)
class ClockKey:
    """Canonical key of a site clock or an undirected edge clock.

    An edge is ``{site, site + e_axis}``, keyed by its lexicographically
    smaller endpoint ``site``.
    """

    kind: str
    site: tuple
    axis: int | None = None

    def __post_init__(self):
        if self.kind not in ("site", "edge"):
            raise FieldError(f"unknown clock kind {self.kind!r}")
        object.__setattr__(self, "site", tuple(int(c) for c in self.site))
        if self.kind == "site":
            if self.axis is not None:
                raise FieldError("site keys carry no axis")
        else:
            if self.axis is None or not 0 <= self.axis < len(self.site):
                raise FieldError(f"edge axis {self.axis} out of range")

    @property
    def dimension(self) -> int:
        return len(self.site)

    @classmethod
    def for_site(cls, site) -> "ClockKey":
        return cls("site", tuple(site))

    @classmethod
    def for_edge(cls, a, b) -> "ClockKey":
        """Key of the edge between neighbouring sites ``a`` and ``b``."""
        a = tuple(int(c) for c in a)
        b = tuple(int(c) for c in b)
        diff = [y - x for x, y in zip(a, b)]
        if len(a) != len(b) or sum(abs(v) for v in diff) != 1:
            raise FieldError(f"{a} and {b} are not nearest neighbours")
        axis = next(i for i, v in enumerate(diff) if v != 0)
        return cls("edge", min(a, b), axis)

    def endpoints(self):
        if self.kind == "site":
            return (self.site,)
        other = list(self.site)
        other[self.axis] += 1
        return (self.site, tuple(other))

    def translated(self, x) -> "ClockKey":
        site = tuple(c + int(v) for c, v in zip(self.site, x))
        return ClockKey(self.kind, site, self.axis)


@dataclass(frozen=True)
class ArrivalSequence:
    key: ClockKey
    horizon: float
    times: np.ndarray
    marks: np.ndarray

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, ArrivalSequence):
            return NotImplemented
        return (
            self.key == other.key
            and self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.marks, other.marks)
        )

    __hash__ = None


@dataclass(frozen=True)
class HarrisField:
    """A view of the clock field, possibly shifted in time and space.

    The view at time offset ``t`` and space offset ``x`` sees at key ``k``
    the base clock of key ``k + x`` on ``(t, t + h]``, moved back by ``t``.
    """

    seed: int
    dimension: int
    lambda_max: float
    time_ticks: int = 0
    space_offset: tuple = None

    def __post_init__(self):
        if self.dimension < 1:
            raise FieldError("dimension must be >= 1")
        if not 0 < self.lambda_max <= MAX_LAMBDA_MAX:
            raise FieldError(f"lambda_max must lie in (0, {MAX_LAMBDA_MAX}]")
        if self.time_ticks < 0:
            raise FieldError("negative time offset")
        object.__setattr__(self, "seed", int(self.seed) % 2**64)
        off = self.space_offset
        off = (0,) * self.dimension if off is None else tuple(int(v) for v in off)
        if len(off) != self.dimension:
            raise FieldError("space offset dimension mismatch")
        object.__setattr__(self, "space_offset", off)

    @property
    def time_offset(self) -> float:
        return from_ticks(self.time_ticks)

    @property
    def useed(self) -> np.uint64:
        return np.uint64(self.seed)


def _check_key(field: HarrisField, key: ClockKey):
    if key.dimension != field.dimension:
        raise FieldError(
            f"key dimension {key.dimension} != field dimension {field.dimension}"
        )


def arrivals(field: HarrisField, key: ClockKey, horizon: float) -> ArrivalSequence:
    """Arrivals of ``key`` on (0, horizon] as seen by ``field``."""
    if horizon < 0:
        raise FieldError("negative horizon")
    _check_key(field, key)
    base = key.translated(field.space_offset)
    start = field.time_ticks
    end = start + to_ticks(horizon)
    kind = _rng.SITE if key.kind == "site" else _rng.EDGE
    rate = 1.0 if key.kind == "site" else float(field.lambda_max)
    ticks, marks = _rng.clock_arrivals(
        field.useed,
        kind,
        np.asarray(base.site, dtype=np.int64),
        0 if key.axis is None else key.axis,
        rate,
        start,
        end,
    )
    times = (ticks - start) / TICKS_PER_UNIT
    if key.kind == "site":
        marks = np.empty(0)
    return ArrivalSequence(key, float(horizon), times, marks)


def thin(seq: ArrivalSequence, lam: float, lambda_max: float) -> ArrivalSequence:
    """Keep the arrivals whose mark is <= lam / lambda_max."""
    if seq.key.kind != "edge":
        raise FieldError("only edge clocks can be thinned")
    if not 0 <= lam <= lambda_max:
        raise FieldError(f"rate {lam} outside [0, {lambda_max}]")
    keep = seq.marks <= lam / lambda_max
    return ArrivalSequence(seq.key, seq.horizon, seq.times[keep], seq.marks[keep])


def shift_time(field: HarrisField, t: float) -> HarrisField:
    if t < 0:
        raise FieldError("negative time shift")
    return shift_time_ticks(field, to_ticks(t))


def shift_time_ticks(field: HarrisField, ticks: int) -> HarrisField:
    if ticks < 0:
        raise FieldError("negative time shift")
    return HarrisField(
        field.seed,
        field.dimension,
        field.lambda_max,
        field.time_ticks + int(ticks),
        field.space_offset,
    )


def shift_space(field: HarrisField, x: Sequence[int]) -> HarrisField:
    x = tuple(int(v) for v in x)
    if len(x) != field.dimension:
        raise FieldError("shift dimension mismatch")
    off = tuple(a + b for a, b in zip(field.space_offset, x))
    return HarrisField(
        field.seed, field.dimension, field.lambda_max, field.time_ticks, off
    )


def _check_rate(rate, field):
    if not 0 < rate <= field.lambda_max:
        raise FieldError(f"rate {rate} outside (0, {field.lambda_max}]")


def _edge_arrays(field: HarrisField, edges: Iterable[ClockKey]):
    edges = list(edges)
    for e in edges:
        if e.kind != "edge":
            raise FieldError("idem sets contain edge keys only")
        _check_key(field, e)
    coords = np.array(
        [e.translated(field.space_offset).site for e in edges], dtype=np.int64
    ).reshape(len(edges), field.dimension)
    axes = np.array([e.axis for e in edges], dtype=np.int64)
    return coords, axes


def idem_disagreements(field, edges, t, lam, lam_prime) -> int:
    """Number of edges whose thinned clocks at the two rates differ on (0, t]."""
    _check_rate(lam, field)
    _check_rate(lam_prime, field)
    if t <= 0:
        raise FieldError("t must be positive")
    coords, axes = _edge_arrays(field, edges)
    if len(axes) == 0 or lam == lam_prime:
        return 0
    lo = min(lam, lam_prime) / field.lambda_max
    hi = max(lam, lam_prime) / field.lambda_max
    start = field.time_ticks
    return int(
        idem_count(
            field.useed,
            coords,
            axes,
            float(field.lambda_max),
            lo,
            hi,
            start,
            start + to_ticks(t),
        )
    )


def idem_holds(field, edges, t, lam, lam_prime) -> bool:
    """True iff rates ``lam`` and ``lam_prime`` give identical arrows on
    every edge of ``edges`` up to time ``t``."""
    return idem_disagreements(field, edges, t, lam, lam_prime) == 0


def box_edges(radius: int, dimension: int) -> list:
    """Edges with both endpoints in the box [-radius, radius]^d."""
    rng = range(-radius, radius + 1)
    out = []
    for site in np.ndindex(*(len(rng),) * dimension):
        site = tuple(int(v) - radius for v in site)
        for axis in range(dimension):
            if site[axis] < radius:
                out.append(ClockKey("edge", site, axis))
    return out


def edges_touching_box(radius: int, dimension: int) -> list:
    """Edges with at least one endpoint in the box [-radius, radius]^d."""
    out = []
    for e in box_edges(radius + 1, dimension):
        if any(max(abs(c) for c in end) <= radius for end in e.endpoints()):
            out.append(e)
    return out


def box_edges_sized(side: int, dimension: int) -> list:
    """Edges inside a box of ``side`` sites per axis anchored at the origin."""
    out = []
    for site in np.ndindex(*(side,) * dimension):
        for axis in range(dimension):
            if site[axis] < side - 1:
                out.append(ClockKey("edge", tuple(int(v) for v in site), axis))
    return out


replica_seed = _rng.replica_seed
