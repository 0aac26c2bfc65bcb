"""Counter-based hashing used to realize the Harris clocks.

Every uniform variate is a pure function of (seed, clock key, time block,
arrival index, purpose), so clocks can be queried in any order, for any
subset of the lattice, without stored state.
"""

import numpy as np
from numba import njit

# time is quantized to TICKS_PER_UNIT ticks; one block of clock data per unit
TICK_BITS = 36
TICKS_PER_UNIT = 1 << TICK_BITS

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_SEED_SALT = np.uint64(0x6A09E667F3BCC909)
_REPLICA_SALT = np.uint64(0xBB67AE8584CAA73B)
_INV53 = 1.0 / 9007199254740992.0

SITE = 0
EDGE = 1


@njit(nogil=True, cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(nogil=True, cache=True)
def absorb(h, v):
    return mix64(h ^ mix64(v + _GOLDEN))


@njit(nogil=True, cache=True)
def uniform_open(h):
    """Map a 64-bit word to a double in the open interval (0, 1)."""
    return (np.float64(h >> _S11) + 0.5) * _INV53


@njit(nogil=True, cache=True)
def key_hash(seed, kind, coords, axis):
    h = mix64(seed ^ _SEED_SALT)
    h = absorb(h, np.uint64(kind))
    h = absorb(h, np.uint64(coords.shape[0]))
    for i in range(coords.shape[0]):
        h = absorb(h, np.uint64(np.int64(coords[i])))
    return absorb(h, np.uint64(axis))


@njit(nogil=True, cache=True)
def block_arrivals(hkey, block, rate, out_ticks, out_marks):
    """Fill the arrivals of one clock inside unit block ``block``.

    Returns the number of arrivals written. Gaps are Exp(rate) by inverse
    transform, restarted at the block start (memorylessness keeps the
    process Poisson). Marks are independent uniforms on (0, 1).
    """
    hb = absorb(hkey, np.uint64(block))
    base = np.int64(block) * TICKS_PER_UNIT
    pos = 0.0
    n = 0
    i = 0
    while True:
        u = uniform_open(absorb(hb, np.uint64(2 * i)))
        pos += -np.log(u) / rate
        if pos >= 1.0:
            break
        if n == out_ticks.shape[0]:
            break
        out_ticks[n] = base + np.int64(pos * TICKS_PER_UNIT)
        out_marks[n] = uniform_open(absorb(hb, np.uint64(2 * i + 1)))
        n += 1
        i += 1
    return n


@njit(nogil=True, cache=True)
def clock_arrivals(seed, kind, coords, axis, rate, start_tick, end_tick):
    """All arrivals of one clock with ticks in (start_tick, end_tick]."""
    hkey = key_hash(seed, kind, coords, axis)
    cap = 64
    ticks = np.empty(cap, np.int64)
    marks = np.empty(cap, np.float64)
    n = 0
    bt = np.empty(256, np.int64)
    bm = np.empty(256, np.float64)
    b0 = start_tick // TICKS_PER_UNIT
    b1 = end_tick // TICKS_PER_UNIT
    for b in range(b0, b1 + 1):
        k = block_arrivals(hkey, b, rate, bt, bm)
        for j in range(k):
            if bt[j] > start_tick and bt[j] <= end_tick:
                if n == cap:
                    cap *= 2
                    t2 = np.empty(cap, np.int64)
                    m2 = np.empty(cap, np.float64)
                    t2[:n] = ticks[:n]
                    m2[:n] = marks[:n]
                    ticks = t2
                    marks = m2
                ticks[n] = bt[j]
                marks[n] = bm[j]
                n += 1
    return ticks[:n], marks[:n]


@njit(nogil=True, cache=True)
def _replica_seed(base_seed, index):
    h = mix64(base_seed ^ _REPLICA_SALT)
    return absorb(h, index)


def replica_seed(base_seed, index):
    """Derive the seed of replica ``index`` from ``base_seed``."""
    return int(_replica_seed(np.uint64(base_seed % 2**64), np.uint64(index)))


def to_ticks(t):
    return int(round(float(t) * TICKS_PER_UNIT))


def from_ticks(ticks):
    return ticks / TICKS_PER_UNIT
