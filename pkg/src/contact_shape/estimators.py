"""Survival-conditioned Monte Carlo estimators.

Runs are conditioned on survival by rejection: a replica is accepted when
the origin's process is still alive at the proxy horizon ``T_surv``.
Replica ``r`` always uses the field seeded by ``replica_seed(base_seed, r)``,
so estimates at different rates share their clocks (matched seeds).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull

from ._rng import TICKS_PER_UNIT, to_ticks
from .field import HarrisField, edges_touching_box, idem_holds, replica_seed
from .hitting import hitting_from_base, run_base
from .sim import SimulationError, SurvivalPolicy, Window, replay_copies

PROXY_CAVEAT = (
    "survival is decided by a finite-horizon proxy (alive at T_surv); "
    "misclassification is exponentially small in T_surv but not zero"
)


class ResourceExhausted(RuntimeError):
    """Replica or horizon caps were reached before the requested sample."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class TheoryConstants:
    """Numeric stand-ins for constants whose existence is all theory gives.

    ``growth_constant`` bounds the linear growth speed (default ``2 lambda``
    when None); ``M1`` corrects the subadditivity of ``E sigma(n x)``.
    """

    M1: float = 10.0
    growth_constant: float | None = None

    def __post_init__(self):
        if self.M1 < 0:
            raise ValueError("M1 must be >= 0")
        if self.growth_constant is not None and self.growth_constant <= 0:
            raise ValueError("growth_constant must be positive")

    def growth(self, lam: float) -> float:
        return 2.0 * lam if self.growth_constant is None else self.growth_constant


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("CONTACT_SHAPE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RunParams:
    """Shared Monte Carlo settings.

    ``replicas`` seeds are drawn; with ``target_accepted`` set, drawing
    continues until that many are accepted or ``max_replicas`` is reached.
    """

    dimension: int = 1
    lambda_max: float = 3.0
    base_seed: int = 0
    replicas: int = 200
    target_accepted: int | None = None
    max_replicas: int | None = None
    min_accepted: int = 2
    horizon: float | None = None
    max_horizon_factor: int = 8
    window_radius: int | None = None
    policy: SurvivalPolicy = SurvivalPolicy()
    constants: TheoryConstants = TheoryConstants()
    threads: int | None = None
    ci_level: float = 0.95

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.lambda_max <= 0:
            raise ValueError("lambda_max must be positive")

    def field(self, r: int) -> HarrisField:
        return HarrisField(replica_seed(self.base_seed, r), self.dimension, self.lambda_max)

    @property
    def n_threads(self) -> int:
        return default_threads() if self.threads is None else max(1, self.threads)

    @property
    def replica_cap(self) -> int:
        if self.max_replicas is not None:
            return self.max_replicas
        if self.target_accepted is not None:
            return max(self.replicas, 20 * self.target_accepted)
        return self.replicas


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    replicas: int
    accepted: int
    ci_level: float = 0.95
    info: dict = dc_field(default_factory=dict)
    flags: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.flags and math.isfinite(self.value)

    @property
    def ci(self) -> tuple:
        from scipy.stats import norm

        z = norm.ppf(0.5 + self.ci_level / 2)
        return (self.value - z * self.stderr, self.value + z * self.stderr)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "replicas": self.replicas,
            "accepted": self.accepted,
            "ci_level": self.ci_level,
            "flags": list(self.flags),
            "info": self.info,
        }


def combined_stderr(*estimates: Estimate) -> float:
    return math.sqrt(sum(e.stderr**2 for e in estimates))


def _mean_estimate(samples, replicas, params: RunParams, info=None, flags=()):
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    flags = list(flags)
    if n == 0:
        flags.append("no_estimate")
        return Estimate(math.nan, math.nan, replicas, 0, params.ci_level, info or {}, tuple(flags))
    if n < max(2, params.min_accepted):
        flags.append("few_accepted")
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return Estimate(float(samples.mean()), se, replicas, n, params.ci_level, info or {}, tuple(flags))


def _binomial_estimate(hits, n, params, info=None, flags=()):
    if n == 0:
        return Estimate(math.nan, math.nan, 0, 0, params.ci_level, info or {}, ("no_estimate",) + tuple(flags))
    p = hits / n
    se = math.sqrt(max(p * (1 - p), 0.0) / n)
    return Estimate(p, se, n, n, params.ci_level, info or {}, tuple(flags))


def parallel_map(fn: Callable, items: Iterable, threads: int) -> list:
    """Ordered map; kernels release the GIL so threads overlap replays."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _check_rates(lambdas, params):
    for lam in lambdas:
        if not 0 <= lam <= params.lambda_max:
            raise SimulationError(f"rate {lam} outside [0, {params.lambda_max}]")


# ---------------------------------------------------------------- origin runs


@dataclass
class OriginSample:
    """One replica replayed from the origin at several coupled rates."""

    index: int
    lambdas: tuple
    survives: np.ndarray  # per rate: alive at T_surv
    hit_ticks: np.ndarray  # (rates, targets), -1 if not hit within horizon
    alive_at_end: np.ndarray
    boundary: np.ndarray
    horizon_ticks: int
    raw: object = None
    window: Window = None


def _origin_window(params: RunParams, lambdas, horizon, targets) -> Window:
    if params.window_radius is not None:
        return Window(params.window_radius)
    reach = max((max(abs(c) for c in t) for t in targets), default=0)
    g = params.constants.growth(max(lambdas))
    R = max(
        params.policy.window.radius,
        int(math.ceil(g * horizon)) + 2,
        reach + 2,
    )
    return Window(R)


def origin_sample(
    params: RunParams,
    r: int,
    lambdas: Sequence[float],
    targets: Sequence = (),
    horizon: float | None = None,
    keep_raw: bool = False,
) -> OriginSample:
    """Coupled replay of replica ``r`` from the origin.

    ``horizon`` defaults to ``max(T_surv, params.horizon)``; it is doubled
    (up to ``max_horizon_factor``) while some surviving rate has not yet
    reached every target.
    """
    d = params.dimension
    T = params.policy.T_surv
    H = max(T, params.horizon or 0.0) if horizon is None else max(T, horizon)
    cap = H * params.max_horizon_factor
    targets = [tuple(int(c) for c in t) for t in targets]
    field = params.field(r)
    thr = [lam / params.lambda_max for lam in lambdas]
    origin = np.zeros((1, d), np.int64)
    T_ticks = to_ticks(T)
    while True:
        window = _origin_window(params, lambdas, H, targets)
        h_ticks = to_ticks(H)
        raw = replay_copies(field, thr, [origin] * len(thr), window, h_ticks)
        ext = raw.ext
        survives = (ext < 0) | (ext > T_ticks)
        alive_end = ext < 0
        hit = np.full((len(thr), len(targets)), -1, dtype=np.int64)
        if targets:
            tflat = window.flat(np.array(targets, dtype=np.int64).reshape(-1, d))
            pos = {int(f): j for j, f in enumerate(tflat)}
            sel = np.isin(raw.hit_site, tflat)
            for c, s, tk in zip(raw.hit_copy[sel], raw.hit_site[sel], raw.hit_tick[sel]):
                hit[c, pos[int(s)]] = tk
        missing = bool(np.any((hit < 0) & alive_end[:, None])) if targets else False
        if not missing or H >= cap:
            break
        H = min(2 * H, cap)
    return OriginSample(
        index=r,
        lambdas=tuple(lambdas),
        survives=survives,
        hit_ticks=hit,
        alive_at_end=alive_end,
        boundary=raw.flag_bits(raw.boundary, len(thr)),
        horizon_ticks=h_ticks,
        raw=raw if keep_raw else None,
        window=window if keep_raw else None,
    )


def _draw(params: RunParams, fn, accepted_of, chunk=None):
    """Draw replicas until the target is met; returns (samples, exhausted)."""
    threads = params.n_threads
    if params.target_accepted is None:
        return parallel_map(fn, range(params.replicas), threads), False
    samples = []
    cap = params.replica_cap
    chunk = chunk or max(params.replicas, 1)
    r = 0
    while True:
        n = min(chunk, cap - r)
        if n <= 0:
            return samples, True
        samples.extend(parallel_map(fn, range(r, r + n), threads))
        r += n
        if accepted_of(samples) >= params.target_accepted:
            return samples, False


# ---------------------------------------------------------------- survival


def survival_samples(lambdas: Sequence[float], params: RunParams) -> list:
    _check_rates(lambdas, params)
    return parallel_map(
        lambda r: origin_sample(params, r, lambdas, horizon=params.policy.T_surv),
        range(params.replicas),
        params.n_threads,
    )


def estimate_survival(lam: float, params: RunParams) -> Estimate:
    """Fraction of replicas whose origin process is alive at ``T_surv``."""
    _check_rates([lam], params)
    samples = survival_samples([lam], params)
    hits = sum(bool(s.survives[0]) for s in samples)
    return _binomial_estimate(
        hits, len(samples), params, {"T_surv": params.policy.T_surv, "caveat": PROXY_CAVEAT}
    )


# ---------------------------------------------------------------- time constant


def _scaled(x, n):
    return tuple(int(c) * n for c in x)


def estimate_mu_direct(lam: float, x, n: int, params: RunParams) -> Estimate:
    """Mean of ``t(n x) / n`` over replicas accepted by the survival proxy."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_rates([lam], params)
    x = tuple(int(c) for c in x)
    if len(x) != params.dimension:
        raise ValueError("direction dimension mismatch")
    target = _scaled(x, n)
    samples, exhausted = _draw(
        params,
        lambda r: origin_sample(params, r, [lam], [target]),
        lambda ss: sum(bool(s.survives[0]) for s in ss),
    )
    return _direct_from_samples(samples, 0, 0, n, params, exhausted)


def _direct_from_samples(samples, li, ti, n, params, exhausted=False):
    vals = []
    missed = 0
    boundary = 0
    for s in samples:
        if not s.survives[li]:
            continue
        tk = s.hit_ticks[li, ti]
        if s.boundary[li]:
            boundary += 1
        if tk < 0:
            missed += 1
            continue
        vals.append(tk / TICKS_PER_UNIT / n)
    flags = []
    if missed:
        flags.append("horizon_exhausted")
    if boundary:
        flags.append("boundary_hit")
    if exhausted:
        flags.append("replica_cap")
    info = {
        "n": n,
        "missed": missed,
        "boundary_runs": boundary,
        "caveat": PROXY_CAVEAT,
    }
    est = _mean_estimate(vals, len(samples), params, info, flags)
    accepted = sum(bool(s.survives[li]) for s in samples)
    return replace(est, accepted=accepted)


def sigma_samples(lam: float, sites: Sequence, params: RunParams, replicas=None):
    """Essential hitting records of ``sites`` on each accepted replica.

    Returns a list of ``(replica, records)`` with ``records`` None for
    replicas rejected by the origin survival proxy.
    """
    sites = [tuple(int(c) for c in s) for s in sites]
    policy = params.policy
    H = max(policy.T_surv, params.horizon or 0.0)

    def one(r):
        s = origin_sample(params, r, [lam], horizon=policy.T_surv)
        if not s.survives[0]:
            return r, None
        field = params.field(r)
        window = _origin_window(params, [lam], H, sites)
        base = run_base(field, lam, sites, window, H)
        return r, [hitting_from_base(base, x, policy) for x in sites]

    n = params.replicas if replicas is None else replicas
    if params.target_accepted is None or replicas is not None:
        return parallel_map(one, range(n), params.n_threads)
    out, _ = _draw(params, one, lambda ss: sum(rec is not None for _, rec in ss))
    return out


def estimate_mu_subadditive(
    lam: float,
    x,
    n_max: int,
    constants: TheoryConstants | None = None,
    params: RunParams | None = None,
) -> Estimate:
    """``min_n (M1 + mean sigma(n x)) / n`` over ``n = 1 .. n_max``."""
    params = RunParams() if params is None else params
    constants = params.constants if constants is None else constants
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    _check_rates([lam], params)
    x = tuple(int(c) for c in x)
    sites = [_scaled(x, n) for n in range(1, n_max + 1)]
    results = sigma_samples(lam, sites, params)
    accepted = [recs for _, recs in results if recs is not None]
    seq, ses, counts = [], [], []
    status_counts = {}
    for j, n in enumerate(range(1, n_max + 1)):
        vals = []
        for recs in accepted:
            rec = recs[j]
            status_counts[rec.status] = status_counts.get(rec.status, 0) + 1
            if rec.regenerated:
                vals.append(rec.sigma)
        vals = np.asarray(vals)
        m = float(vals.mean()) if len(vals) else math.nan
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
        seq.append((constants.M1 + m) / n)
        ses.append(se / n)
        counts.append(len(vals))
    arr = np.array(seq)
    flags = []
    if not np.any(np.isfinite(arr)):
        return Estimate(
            math.nan, math.nan, len(results), len(accepted), params.ci_level,
            {"status_counts": status_counts}, ("no_estimate",),
        )
    k = int(np.nanargmin(arr))
    if counts[k] < max(2, params.min_accepted):
        flags.append("few_accepted")
    if any(s != "regenerated" for s in status_counts):
        flags.append("unregenerated_records")
    info = {
        "n_star": k + 1,
        "sequence": [float(v) for v in seq],
        "stderrs": [float(v) for v in ses],
        "counts": counts,
        "M1": constants.M1,
        "status_counts": status_counts,
        "caveat": PROXY_CAVEAT,
    }
    return Estimate(float(arr[k]), float(ses[k]), len(results), len(accepted), params.ci_level, info, tuple(flags))


# ---------------------------------------------------------------- shapes


def default_directions(d: int) -> list:
    """Unit-l1 directions: the 2d axes, plus the diagonals when d == 2."""
    out = []
    for a in range(d):
        for s in (1.0, -1.0):
            v = [0.0] * d
            v[a] = s
            out.append(tuple(v))
    if d == 2:
        out += [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)]
    return out


@dataclass(frozen=True)
class ShapeEstimate:
    lam: float
    t: float
    directions: tuple
    radii: tuple
    stderrs: tuple
    accepted: int = 0
    replicas: int = 0
    occupancy: dict | None = None
    flags: tuple = ()

    def __post_init__(self):
        if len(self.directions) != len(self.radii):
            raise ValueError("one radius per direction")

    @property
    def dimension(self) -> int:
        return len(self.directions[0])

    def points(self) -> np.ndarray:
        """Vertices ``radius * direction`` of the polyhedral reconstruction."""
        return np.array(self.directions, float) * np.array(self.radii, float)[:, None]

    def radius(self, direction) -> float:
        direction = tuple(float(c) for c in direction)
        return self.radii[self.directions.index(direction)]

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        """Membership of points in the convex hull of ``points()``."""
        pts = np.atleast_2d(np.asarray(pts, float))
        P = self.points()
        if self.dimension == 1:
            lo, hi = P[:, 0].min(), P[:, 0].max()
            return (pts[:, 0] >= lo - tol) & (pts[:, 0] <= hi + tol)
        hull = ConvexHull(P)
        A, b = hull.equations[:, :-1], hull.equations[:, -1]
        return np.all(pts @ A.T + b <= tol, axis=1)


def ray_radius(sites: np.ndarray, direction, t: float) -> float:
    """``sup {r : r * direction in (sites + [-1/2, 1/2]^d) / t}``."""
    u = np.asarray(direction, float)
    if len(sites) == 0:
        return 0.0
    lo = (sites - 0.5) / t
    hi = (sites + 0.5) / t
    r_in = np.zeros(len(sites))
    r_out = np.full(len(sites), np.inf)
    for a in range(len(u)):
        if u[a] == 0:
            ok = (lo[:, a] <= 0) & (hi[:, a] >= 0)
            r_out = np.where(ok, r_out, -np.inf)
            continue
        r1 = lo[:, a] / u[a]
        r2 = hi[:, a] / u[a]
        r_in = np.maximum(r_in, np.minimum(r1, r2))
        r_out = np.minimum(r_out, np.maximum(r1, r2))
    good = r_out >= r_in
    return float(r_out[good].max()) if np.any(good) else 0.0


def shape_estimate(
    lam: float,
    t: float,
    params: RunParams,
    directions: Sequence | None = None,
    occupancy: bool = False,
    max_retries: int = 3,
) -> ShapeEstimate:
    """Directional radii of the scaled infected region at time ``t``."""
    _check_rates([lam], params)
    d = params.dimension
    directions = default_directions(d) if directions is None else [
        tuple(float(c) for c in v) for v in directions
    ]
    for v in directions:
        if len(v) != d or abs(sum(abs(c) for c in v) - 1.0) > 1e-9:
            raise ValueError(f"direction {v} is not a unit l1 vector in dimension {d}")
    g = params.constants.growth(lam)
    if params.window_radius is not None and params.window_radius < g * t:
        raise ValueError("window radius must be >= growth_constant * t")

    def one(r):
        s = origin_sample(params, r, [lam], horizon=params.policy.T_surv)
        if not s.survives[0]:
            return None
        field = params.field(r)
        R = params.window_radius or int(math.ceil(g * t)) + 2
        retries = 0
        while True:
            win = Window(R)
            raw = replay_copies(field, [lam / params.lambda_max], [np.zeros((1, d), np.int64)], win, to_ticks(t))
            if not raw.flag_bits(raw.boundary, 1)[0]:
                break
            retries += 1
            if retries > max_retries:
                return ("boundary", None)
            R *= 2
        sites = win.unflat(raw.hit_site, d)
        return ("ok", sites, retries)

    results, exhausted = _draw(params, one, lambda ss: sum(x is not None for x in ss))
    radii = [[] for _ in directions]
    occ = {}
    n_ok = 0
    boundary_fail = 0
    for res in results:
        if res is None:
            continue
        if res[0] == "boundary":
            boundary_fail += 1
            continue
        sites = res[1]
        n_ok += 1
        for j, u in enumerate(directions):
            radii[j].append(ray_radius(sites, u, t))
        if occupancy:
            for s in map(tuple, sites):
                occ[s] = occ.get(s, 0) + 1
    flags = []
    if boundary_fail:
        flags.append("boundary_retry_cap")
    if exhausted:
        flags.append("replica_cap")
    if n_ok < max(2, params.min_accepted):
        flags.append("few_accepted")
    means = tuple(float(np.mean(v)) if v else math.nan for v in radii)
    ses = tuple(
        float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan for v in radii
    )
    return ShapeEstimate(
        lam=float(lam),
        t=float(t),
        directions=tuple(directions),
        radii=means,
        stderrs=ses,
        accepted=n_ok,
        replicas=len(results),
        occupancy={k: v / n_ok for k, v in sorted(occ.items())} if occupancy and n_ok else None,
        flags=tuple(flags),
    )


def _point_to_hull(v, Q, norm):
    """Distance from point ``v`` to conv(Q) under the sup or l1 norm (LP)."""
    m, d = Q.shape
    if norm == "sup":
        # vars: weights w (m), s; min s st |v - Q^T w| <= s
        c = np.r_[np.zeros(m), 1.0]
        A = np.block([[-Q.T, -np.ones((d, 1))], [Q.T, -np.ones((d, 1))]])
        b = np.r_[-v, v]
        bounds = [(0, None)] * m + [(0, None)]
    elif norm == "l1":
        # vars: w (m), s (d); min sum s st |v - Q^T w| <= s componentwise
        c = np.r_[np.zeros(m), np.ones(d)]
        A = np.block([[-Q.T, -np.eye(d)], [Q.T, -np.eye(d)]])
        b = np.r_[-v, v]
        bounds = [(0, None)] * (m + d)
    else:
        raise ValueError(f"unsupported norm {norm!r}")
    A_eq = np.r_[np.ones(m), np.zeros(len(c) - m)][None, :]
    res = optimize.linprog(c, A_ub=A, b_ub=b, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    return max(float(res.fun), 0.0)


def polytope_hausdorff(P, Q, norm: str = "sup") -> float:
    """Hausdorff distance between conv(P) and conv(Q) given vertex sets.

    The distance to a convex set is convex, so its sup over a polytope is
    reached at a vertex.
    """
    P = np.atleast_2d(np.asarray(P, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    if P.shape[1] != Q.shape[1]:
        raise ValueError("dimension mismatch")
    a = max(_point_to_hull(p, Q, norm) for p in P)
    b = max(_point_to_hull(q, P, norm) for q in Q)
    return max(a, b)


def hausdorff_distance(a: ShapeEstimate, b: ShapeEstimate, norm: str = "sup") -> float:
    if tuple(a.directions) != tuple(b.directions):
        raise ValueError("shape estimates use different direction sets")
    return polytope_hausdorff(a.points(), b.points(), norm)


# ---------------------------------------------------------------- scan


@dataclass(frozen=True)
class ScanRow:
    lam: float
    direction: tuple
    estimate: Estimate


@dataclass(frozen=True)
class ScanTable:
    rows: tuple
    diagnostics: dict

    def __post_init__(self):
        order = [r.lam for r in self.rows]
        if order != sorted(order):
            raise ValueError("scan rows must be ordered by lambda")

    @property
    def lambdas(self) -> list:
        out = []
        for r in self.rows:
            if not out or out[-1] != r.lam:
                out.append(r.lam)
        return out

    def series(self, direction) -> list:
        direction = tuple(direction)
        return [r for r in self.rows if r.direction == direction]


def continuity_scan(
    lambda_grid: Sequence[float],
    directions: Sequence,
    n: int,
    params: RunParams,
) -> ScanTable:
    """``t(n x) / n`` estimates on a rate grid with matched seeds.

    One coupled replay per replica serves every rate and direction.
    Diagnostics count monotonicity violations beyond 3 combined standard
    errors, per-replica violations of the coupling order (must be zero),
    and the largest adjacent-rate jump per direction.
    """
    grid = [float(v) for v in lambda_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be strictly increasing")
    _check_rates(grid, params)
    directions = [tuple(int(c) for c in x) for x in directions]
    targets = [_scaled(x, n) for x in directions]
    if not grid:
        return ScanTable((), {})
    samples, exhausted = _draw(
        params,
        lambda r: origin_sample(params, r, grid, targets),
        lambda ss: sum(bool(s.survives[0]) for s in ss),
    )
    rows = []
    for li, lam in enumerate(grid):
        for ti, x in enumerate(directions):
            est = _direct_from_samples(samples, li, ti, n, params, exhausted)
            rows.append(ScanRow(lam, x, est))
    diag = {}
    if len(grid) > 1:
        diag = scan_diagnostics(rows, samples, grid, directions)
    return ScanTable(tuple(rows), diag)


def scan_diagnostics(rows, samples, grid, directions) -> dict:
    by = {(r.lam, r.direction): r.estimate for r in rows}
    mono = []
    jumps = {}
    for x in directions:
        best = (0.0, 0.0, None)
        for a, b in zip(grid, grid[1:]):
            ea, eb = by[(a, x)], by[(b, x)]
            se = combined_stderr(ea, eb)
            # mu is non-increasing in lambda
            if eb.value - ea.value > 3 * se:
                mono.append({"direction": list(x), "lambda": a, "lambda_next": b})
            jump = abs(eb.value - ea.value)
            if best[2] is None or jump > best[0]:
                best = (jump, se, (a, b))
        jumps[str(list(x))] = {"max_jump": best[0], "stderr": best[1], "between": list(best[2])}
    per_seed = 0
    survival_violations = 0
    for s in samples:
        surv = s.survives
        # rate-ordered survival must be nested
        survival_violations += int(np.any(surv[:-1] & ~surv[1:]))
        for ti in range(len(directions)):
            h = s.hit_ticks[:, ti]
            for i in range(len(grid) - 1):
                lo_t, hi_t = h[i], h[i + 1]
                if lo_t >= 0 and (hi_t < 0 or hi_t > lo_t):
                    per_seed += 1
    return {
        "monotonicity_violations": mono,
        "per_seed_violations": per_seed,
        "survival_nesting_violations": survival_violations,
        "max_adjacent_jump": jumps,
    }


# ---------------------------------------------------------------- idem


def idem_probability(
    S: Sequence,
    t: float,
    lam: float,
    lam_prime: float,
    replicas: int,
    params: RunParams | None = None,
) -> Estimate:
    """Fraction of replicas on which both rates open the same arrows on S."""
    params = RunParams() if params is None else params
    S = list(S)
    hits = 0
    for r in range(replicas):
        hits += idem_holds(params.field(r), S, t, lam, lam_prime)
    gap = abs(lam - lam_prime)
    info = {
        "S_size": len(S),
        "t": t,
        "analytic_bound": 1.0 - len(S) * t * gap,
        "exact": math.exp(-len(S) * t * gap),
    }
    return _binomial_estimate(hits, replicas, params, info)


# ---------------------------------------------------------------- good growth


@dataclass(frozen=True)
class GoodGrowthOutcome:
    holds: bool
    shape_ok: bool
    confined: bool


def _grid_points(N, d, t0_step, t_max):
    xs = [tuple(int(c) - N for c in idx) for idx in np.ndindex(*(2 * N + 1,) * d)]
    nt = int(math.floor(t_max / t0_step + 1e-9)) + 1
    ts = [k * t0_step for k in range(nt)]
    return xs, ts


def good_growth_replica(
    field: HarrisField,
    lam: float,
    shape: ShapeEstimate,
    alpha: float,
    L: int,
    N: int,
    epsilon: float,
    t0_step: float = 0.5,
) -> GoodGrowthOutcome:
    """Check the good-growth event on one field.

    Every ``(x0, t0)`` with ``x0`` in ``[-N, N]^d`` and ``t0`` on a grid of
    ``[0, 2N]`` starts its own copy; at time ``alpha L N`` each copy must
    lie in ``x0 + (1 + epsilon)(alpha L N - t0) * shape``, and no copy may
    ever reach sup-norm ``L N``.
    """
    d = field.dimension
    T = alpha * L * N
    if T <= 2 * N:
        raise ValueError("alpha * L must exceed 2 so every start precedes alpha L N")
    xs, ts = _grid_points(N, d, t0_step, 2 * N)
    starts, inits, x0s = [], [], []
    for t0 in ts:
        for x0 in xs:
            starts.append(to_ticks(t0))
            inits.append(np.array([x0], dtype=np.int64))
            x0s.append((x0, t0))
    LN = L * N
    win = Window(LN, "cutoff")
    nc = len(starts)
    raw = replay_copies(
        field,
        [lam / field.lambda_max] * nc,
        inits,
        win,
        to_ticks(T),
        starts_ticks=starts,
        track_hits=False,
        escape_radius=LN,
    )
    confined = not bool(np.any(raw.flag_bits(raw.escaped, nc)))
    shape_ok = True
    if len(raw.final_sites):
        bits = raw.copy_bits(nc)
        sites = win.unflat(raw.final_sites, d).astype(float)
        for c in np.nonzero(bits.any(axis=0))[0]:
            x0, t0 = x0s[c]
            scale = (1.0 + epsilon) * (T - t0)
            pts = (sites[bits[:, c]] - np.array(x0, float)) / scale
            if not np.all(shape.contains(pts)):
                shape_ok = False
                break
    return GoodGrowthOutcome(shape_ok and confined, shape_ok, confined)


def good_growth_probability(
    lam: float,
    lam0: float,
    reference_shape: ShapeEstimate,
    alpha: float,
    L: int,
    N: int,
    epsilon: float,
    replicas: int,
    params: RunParams | None = None,
    t0_step: float = 0.5,
    min_directions: int | None = None,
) -> Estimate:
    """Empirical probability of the good-growth event at rate ``lam``."""
    params = RunParams() if params is None else params
    if lam < lam0:
        raise ValueError("lam must be >= lam0")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    _check_rates([lam, lam0], params)
    d = params.dimension
    need = 2 * d if min_directions is None else min_directions
    if len(reference_shape.directions) < need:
        raise ValueError(
            f"reference shape has {len(reference_shape.directions)} directions; need {need}"
        )
    if reference_shape.dimension != d:
        raise ValueError("reference shape dimension mismatch")

    def one(r):
        return good_growth_replica(
            params.field(r), lam, reference_shape, alpha, L, N, epsilon, t0_step
        )

    outs = parallel_map(one, range(replicas), params.n_threads)
    hits = sum(o.holds for o in outs)
    T = alpha * L * N
    S_size = len(edges_touching_box(L * N - 1, d))
    info = {
        "shape_ok": sum(o.shape_ok for o in outs),
        "confined": sum(o.confined for o in outs),
        "alpha": alpha,
        "L": L,
        "N": N,
        "epsilon": epsilon,
        "t0_step": t0_step,
        "region_edges": S_size,
        "t": T,
    }
    return _binomial_estimate(hits, replicas, params, info)
