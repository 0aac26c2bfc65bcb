"""Exact contact-process laws on tiny graphs, and the Monte Carlo gate.

A configuration of an ``n``-site lattice is the bitmask whose bit ``i`` is
set when ``sites[i]`` is infected. Transient laws come from uniformization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .field import HarrisField, replica_seed
from .sim import Window, replay_copies
from ._rng import to_ticks

MAX_SITES = 12


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class TinyLattice:
    sites: tuple
    edges: tuple

    def __post_init__(self):
        sites = tuple(tuple(int(c) for c in s) for s in self.sites)
        if len(sites) > MAX_SITES:
            raise OracleError(f"at most {MAX_SITES} sites (got {len(sites)})")
        if len(set(sites)) != len(sites):
            raise OracleError("duplicate sites")
        index = {s: i for i, s in enumerate(sites)}
        edges = []
        for a, b in self.edges:
            a = tuple(int(c) for c in a)
            b = tuple(int(c) for c in b)
            if a not in index or b not in index:
                raise OracleError(f"edge {a}-{b} references an unlisted site")
            if a == b:
                raise OracleError("self loop")
            edges.append((a, b))
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def n_states(self) -> int:
        return 1 << self.n

    def index(self, site) -> int:
        return self.sites.index(tuple(int(c) for c in site))

    def encode(self, config) -> int:
        mask = 0
        for s in config:
            mask |= 1 << self.index(s)
        return mask

    def decode(self, mask: int) -> frozenset:
        return frozenset(s for i, s in enumerate(self.sites) if mask >> i & 1)

    @classmethod
    def path(cls, n: int) -> "TinyLattice":
        """Sites -(n//2) .. n - 1 - n//2 on a line, centred at 0."""
        lo = -(n // 2)
        sites = [(lo + i,) for i in range(n)]
        return cls(tuple(sites), tuple(zip(sites[:-1], sites[1:])))

    @classmethod
    def box(cls, radius: int, dimension: int) -> "TinyLattice":
        """All sites of [-radius, radius]^d with nearest-neighbour edges."""
        w = 2 * radius + 1
        sites = [tuple(int(c) - radius for c in idx) for idx in np.ndindex(*(w,) * dimension)]
        edges = []
        for s in sites:
            for a in range(dimension):
                if s[a] < radius:
                    t = list(s)
                    t[a] += 1
                    edges.append((s, tuple(t)))
        return cls(tuple(sites), tuple(edges))


def build_generator(lattice: TinyLattice, lam: float) -> np.ndarray:
    """Dense CTMC generator on the 2^n configurations."""
    if lam <= 0:
        raise OracleError("lambda must be positive")
    n = lattice.n
    N = 1 << n
    nbrs = [[] for _ in range(n)]
    for a, b in lattice.edges:
        i, j = lattice.index(a), lattice.index(b)
        nbrs[i].append(j)
        nbrs[j].append(i)
    Q = np.zeros((N, N))
    for s in range(N):
        for i in range(n):
            if s >> i & 1:
                Q[s, s & ~(1 << i)] += 1.0
            else:
                k = sum(s >> j & 1 for j in nbrs[i])
                if k:
                    Q[s, s | (1 << i)] += lam * k
        Q[s, s] = -Q[s].sum()
    return Q


def _poisson_depth(rate_t: float, tol: float) -> int:
    """Smallest K with P(Poisson(rate_t) > K) < tol."""
    if rate_t == 0:
        return 0
    K = int(rate_t + 10 * math.sqrt(rate_t) + 10)
    while stats.poisson.sf(K, rate_t) >= tol:
        K *= 2
    # shrink back to the first adequate depth
    lo, hi = 0, K
    while lo < hi:
        mid = (lo + hi) // 2
        if stats.poisson.sf(mid, rate_t) < tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def transient_distribution(Q: np.ndarray, init, t: float, tol: float = 1e-12) -> np.ndarray:
    """Law at time ``t`` started from state ``init`` (index or vector)."""
    if tol <= 0:
        raise OracleError("tol must be positive")
    if t < 0:
        raise OracleError("t must be nonnegative")
    N = Q.shape[0]
    if np.ndim(init) == 0:
        p0 = np.zeros(N)
        p0[int(init)] = 1.0
    else:
        p0 = np.asarray(init, dtype=float)
    rate = float(np.max(-np.diag(Q)))
    if t == 0 or rate == 0:
        return p0.copy()
    P = np.eye(N) + Q / rate
    K = _poisson_depth(rate * t, tol)
    weights = stats.poisson.pmf(np.arange(K + 1), rate * t)
    out = np.zeros(N)
    v = p0.copy()
    for k in range(K + 1):
        out += weights[k] * v
        v = v @ P
    return out


def hitting_probability(
    lattice: TinyLattice, lam: float, init, target, t: float, tol: float = 1e-12
) -> float:
    """P(some site of ``target`` is infected by time ``t``) from ``init``."""
    Q = build_generator(lattice, lam)
    tmask = lattice.encode(target)
    for s in range(Q.shape[0]):
        if s & tmask:
            Q[s, :] = 0.0
    p = transient_distribution(Q, lattice.encode(init), t, tol)
    hit = np.array([bool(s & tmask) for s in range(Q.shape[0])])
    return float(p[hit].sum())


@dataclass(frozen=True)
class OracleReport:
    valid: bool
    statistic: float | None
    dof: int | None
    p_value: float | None
    passed: bool | None
    alpha: float
    replicas: int
    lam: float
    oracle_lambda: float
    t: float
    bins: int = 0
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _embed(lattice: TinyLattice):
    """Window that contains ``lattice`` as exactly its site set and edges."""
    if not lattice.n:
        raise OracleError("empty lattice")
    d = len(lattice.sites[0])
    R = max(max(abs(c) for c in s) for s in lattice.sites)
    W = Window(R, "cutoff")
    full = TinyLattice.box(R, d) if (2 * R + 1) ** d <= MAX_SITES else None
    if full is not None and set(full.sites) == set(lattice.sites):
        want = {frozenset(e) for e in full.edges}
        if {frozenset(e) for e in lattice.edges} == want:
            return W
    raise OracleError(
        "lattice is not a full simulator window; use TinyLattice.path or .box"
    )


def pooled_chisquare(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Chi-square GOF after pooling cells with small expected counts.

    Cells are sorted by expected count and merged from the smallest upward
    until every pooled cell reaches ``min_expected``.
    """
    order = np.argsort(expected, kind="stable")
    obs_bins, exp_bins = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += observed[i]
        acc_e += expected[i]
        if acc_e >= min_expected:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_bins:
            obs_bins[-1] += acc_o
            exp_bins[-1] += acc_e
        else:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
    o = np.array(obs_bins)
    e = np.array(exp_bins)
    if len(o) < 2:
        return 0.0, 0, 1.0, len(o)
    stat = float(np.sum((o - e) ** 2 / e))
    dof = len(o) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof)), len(o)


def simulate_final_states(
    lattice: TinyLattice,
    lam: float,
    t: float,
    replicas: int,
    base_seed: int = 0,
    init=None,
    lambda_max: float | None = None,
) -> np.ndarray:
    """Counts of final configurations (by bitmask) over Harris replicas."""
    window = _embed(lattice)
    d = len(lattice.sites[0])
    init = [(0,) * d] if init is None else [tuple(s) for s in init]
    lambda_max = lam if lambda_max is None else lambda_max
    counts = np.zeros(lattice.n_states, dtype=np.int64)
    h = to_ticks(t)
    init_arr = np.array(init, dtype=np.int64).reshape(-1, d)
    for r in range(replicas):
        field = HarrisField(replica_seed(base_seed, r), d, lambda_max)
        raw = replay_copies(
            field, [lam / lambda_max], [init_arr], window, h, track_hits=False
        )
        sites = window.unflat(raw.final_sites, d)
        counts[lattice.encode(map(tuple, sites))] += 1
    return counts


def mc_vs_oracle(
    lattice: TinyLattice,
    lam: float,
    t: float,
    replicas: int,
    alpha: float = 1e-3,
    oracle_lambda: float | None = None,
    base_seed: int = 0,
    init=None,
    tol: float = 1e-12,
) -> OracleReport:
    """Chi-square test of simulated final states against the exact law.

    ``oracle_lambda`` lets the exact side use a different rate (a power
    control that should fail).
    """
    oracle_lambda = lam if oracle_lambda is None else oracle_lambda
    _embed(lattice)
    if replicas <= 0:
        return OracleReport(
            False, None, None, None, None, alpha, replicas, lam, oracle_lambda, t,
            note="no replicas",
        )
    d = len(lattice.sites[0])
    init = [(0,) * d] if init is None else [tuple(s) for s in init]
    counts = simulate_final_states(lattice, lam, t, replicas, base_seed, init)
    Q = build_generator(lattice, oracle_lambda)
    p = transient_distribution(Q, lattice.encode(init), t, tol)
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    stat, dof, pval, bins = pooled_chisquare(counts.astype(float), p * replicas)
    return OracleReport(
        True, stat, dof, pval, pval > alpha, alpha, replicas, lam, oracle_lambda, t,
        bins=bins,
    )
