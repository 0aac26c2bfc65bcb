"""Bit-parallel replay of the graphical construction on a finite window.

A run carries ``ncopies`` coupled copies of the process. Copy ``c`` has its
own acceptance threshold (lambda / lambda_max), start tick and initial set,
and all copies read the same clocks. Copy membership at a site is one bit of
a row of uint64 words, so an infection arrow is ``mask[w] |= mask[v] & acc``.

Clocks are generated lazily per unit block and only inside a box around the
union of occupied sites (plus pending initial sites). When an infection lands
on the box face the box is regrown and the rest of the block regenerated from
the current (tick, rank) position. The result does not depend on the box
sequence because every clock is a pure function of its key.
"""

import numpy as np
from numba import njit

from ._rng import EDGE, SITE, TICKS_PER_UNIT, block_arrivals, key_hash

_RANK_MAX = np.iinfo(np.int64).max
_ONE = np.uint64(1)
_ZERO = np.uint64(0)

LOG_RECOVERY = 0
LOG_INFECTION = 1


@njit(nogil=True, cache=True)
def _bit_index(low):
    # low is a power of two
    return np.int64(np.log2(np.float64(low)) + 0.5)


@njit(nogil=True, cache=True)
def _coords(flat, d, W, out):
    for a in range(d - 1, -1, -1):
        out[a] = flat % W
        flat //= W


@njit(nogil=True, cache=True)
def _grow_i64(a):
    b = np.empty(2 * a.shape[0], np.int64)
    b[: a.shape[0]] = a
    return b


@njit(nogil=True, cache=True)
def _grow_f64(a):
    b = np.empty(2 * a.shape[0], np.float64)
    b[: a.shape[0]] = a
    return b


@njit(nogil=True, cache=True)
def _block_order(ticks, n, base, perm, counts):
    """Stable ordering of ``ticks[:n]`` (all within one unit block).

    Counting sort on the leading tick bits, then insertion sort inside each
    bucket; buckets hold O(1) items on average.
    """
    nb = counts.shape[0] - 1
    for b in range(nb + 1):
        counts[b] = 0
    for i in range(n):
        b = ((ticks[i] - base) * nb) // TICKS_PER_UNIT
        counts[b + 1] += 1
    for b in range(nb):
        counts[b + 1] += counts[b]
    for i in range(n):
        b = ((ticks[i] - base) * nb) // TICKS_PER_UNIT
        perm[counts[b]] = i
        counts[b] += 1
    # counts[b] is now the end of bucket b; bucket b starts at counts[b-1]
    start = 0
    for b in range(nb):
        end = counts[b]
        for i in range(start + 1, end):
            v = perm[i]
            tv = ticks[v]
            j = i - 1
            while j >= start and ticks[perm[j]] > tv:
                perm[j + 1] = perm[j]
                j -= 1
            perm[j + 1] = v
        start = end
    return perm


# slots of the scalar state shared between replay and its helpers
_S_TICK = 0
_S_RANK = 1
_S_NOCC = 2
_S_ALIVE = 3
_S_INJ = 4
_S_NHITS = 5
_S_NLOG = 6
_S_NEV = 7

_APPLIED = 0
_REGROW = 1
_FULL = 2
_EXTINCT = 3

# Helpers below never rebind their array arguments. Rebinding arrays inside
# the hot loops made numba reload them on every access (about 4x slower),
# so buffers are grown by the caller and the helper resumes where it stopped.


@njit(nogil=True, cache=True)
def _generate(seed, d, R, x_off, stride, lam_max, block, slice_end, st, lo, hi,
              ev, ev_mark, bt, bm, idx, absc):
    """Clock events of the box [lo, hi] in ``block`` after the current
    position, unsorted. Returns -1 when ``ev`` is too small."""
    cur_tick = st[_S_TICK]
    cur_rank = st[_S_RANK]
    cap = ev.shape[1]
    n_ev = 0
    for a in range(d):
        idx[a] = lo[a]
    while True:
        flat = 0
        for a in range(d):
            flat += idx[a] * stride[a]
            absc[a] = idx[a] - R + x_off[a]
        for sub in range(d + 1):
            if sub == 0:
                hk = key_hash(seed, SITE, absc, 0)
                k = block_arrivals(hk, block, 1.0, bt, bm)
            else:
                ax = sub - 1
                if idx[ax] + 1 > hi[ax]:
                    continue
                hk = key_hash(seed, EDGE, absc, ax)
                k = block_arrivals(hk, block, lam_max, bt, bm)
            rank = flat * (d + 1) + sub
            for j in range(k):
                tk = bt[j]
                if tk > slice_end:
                    continue
                if tk < cur_tick or (tk == cur_tick and rank <= cur_rank):
                    continue
                if n_ev == cap:
                    return -1
                ev[0, n_ev] = tk
                ev[1, n_ev] = rank
                ev[2, n_ev] = flat
                ev[3, n_ev] = sub - 1
                ev_mark[n_ev] = bm[j]
                n_ev += 1
        # odometer over the box, last axis fastest
        a = d - 1
        while a >= 0:
            idx[a] += 1
            if idx[a] <= hi[a]:
                break
            idx[a] = lo[a]
            a -= 1
        if a < 0:
            return n_ev


@njit(nogil=True, cache=True)
def _inject(c, masks, ever, occ_pos, occ_list, alive, ext, starts, init_ptr,
            init_sites, hits, st, track_hits):
    w = c // 64
    bit = _ONE << np.uint64(c % 64)
    nin = 0
    for k in range(init_ptr[c], init_ptr[c + 1]):
        site = init_sites[k]
        if masks[site, w] & bit:
            continue
        if occ_pos[site] < 0:
            n_occ = st[_S_NOCC]
            occ_pos[site] = n_occ
            occ_list[n_occ] = site
            st[_S_NOCC] = n_occ + 1
        masks[site, w] |= bit
        nin += 1
        if track_hits and not (ever[site, w] & bit):
            ever[site, w] |= bit
            n = st[_S_NHITS]
            hits[0, n] = c
            hits[1, n] = site
            hits[2, n] = starts[c]
            st[_S_NHITS] = n + 1
    alive[c] = nin
    if nin == 0:
        ext[c] = starts[c]
    else:
        st[_S_ALIVE] += 1


@njit(nogil=True, cache=True)
def _apply(p0, n_ev, perm, ev, ev_mark, d, R, W, stride, lo, hi, escape_q,
           uthr, acc, masks, ever, occ_pos, occ_list, alive, ext, bnd, esc,
           order, starts, init_ptr, init_sites, hits, log, st, newbits, coord,
           track_hits, record_log, watch):
    """Apply sorted events from position ``p0``.

    Returns ``(p, status)``: the slice was fully applied, an infection landed
    on the box face (regrow), the hit or log buffer needs room before event
    ``p``, or every copy is extinct.
    """
    nc = alive.shape[0]
    nw = masks.shape[1]
    nthr = uthr.shape[0]
    for p in range(p0, n_ev):
        e = perm[p]
        tk = ev[0, e]
        if st[_S_NHITS] + nc > hits.shape[1]:
            return p, _FULL
        if record_log and st[_S_NLOG] + nc > log.shape[1]:
            return p, _FULL
        # copies start strictly before the first event they see
        while st[_S_INJ] < nc and starts[order[st[_S_INJ]]] < tk:
            c = order[st[_S_INJ]]
            if st[_S_NHITS] + init_ptr[c + 1] - init_ptr[c] > hits.shape[1]:
                return p, _FULL
            st[_S_INJ] += 1
            _inject(c, masks, ever, occ_pos, occ_list, alive, ext, starts,
                    init_ptr, init_sites, hits, st, track_hits)
        site = ev[2, e]
        ax = ev[3, e]
        st[_S_NEV] += 1
        st[_S_TICK] = tk
        st[_S_RANK] = ev[1, e]
        if ax < 0:
            if occ_pos[site] < 0:
                continue
            for w in range(nw):
                m = masks[site, w]
                if m == _ZERO:
                    continue
                masks[site, w] = _ZERO
                while m != _ZERO:
                    low = m & (~m + _ONE)
                    m ^= low
                    c = w * 64 + _bit_index(low)
                    alive[c] -= 1
                    if alive[c] == 0:
                        ext[c] = tk
                        st[_S_ALIVE] -= 1
                    if record_log and (watch.shape[0] == 0 or watch[site]):
                        n = st[_S_NLOG]
                        log[0, n] = tk
                        log[1, n] = LOG_RECOVERY
                        log[2, n] = site
                        log[3, n] = site
                        log[4, n] = c
                        st[_S_NLOG] = n + 1
            n_occ = st[_S_NOCC]
            pos = occ_pos[site]
            last = occ_list[n_occ - 1]
            occ_list[pos] = last
            occ_pos[last] = pos
            occ_pos[site] = -1
            st[_S_NOCC] = n_occ - 1
            if st[_S_INJ] == nc and st[_S_ALIVE] == 0:
                return p + 1, _EXTINCT
            continue

        other = site + stride[ax]
        if occ_pos[site] < 0 and occ_pos[other] < 0:
            continue
        mark = ev_mark[e]
        j = 0
        while j < nthr and uthr[j] < mark:
            j += 1
        if j == nthr:
            continue
        trigger = False
        for side in range(2):
            if side == 0:
                src = site
                dst = other
            else:
                src = other
                dst = site
            anynew = False
            for w in range(nw):
                nb = masks[src, w] & acc[j, w] & ~masks[dst, w]
                newbits[w] = nb
                if nb != _ZERO:
                    anynew = True
            if not anynew:
                continue
            if occ_pos[dst] < 0:
                n_occ = st[_S_NOCC]
                occ_pos[dst] = n_occ
                occ_list[n_occ] = dst
                st[_S_NOCC] = n_occ + 1
            _coords(dst, d, W, coord)
            on_window_face = False
            supn = 0
            for a in range(d):
                r = coord[a] - R
                if r < 0:
                    r = -r
                if r > supn:
                    supn = r
                if coord[a] == 0 or coord[a] == W - 1:
                    on_window_face = True
                if (coord[a] == lo[a] and lo[a] > 0) or (
                    coord[a] == hi[a] and hi[a] < W - 1
                ):
                    trigger = True
            for w in range(nw):
                nb = newbits[w]
                if nb == _ZERO:
                    continue
                masks[dst, w] |= nb
                if on_window_face:
                    bnd[w] |= nb
                if supn >= escape_q:
                    esc[w] |= nb
                m = nb
                while m != _ZERO:
                    low = m & (~m + _ONE)
                    m ^= low
                    c = w * 64 + _bit_index(low)
                    alive[c] += 1
                    if record_log and (watch.shape[0] == 0 or watch[dst]):
                        n = st[_S_NLOG]
                        log[0, n] = tk
                        log[1, n] = LOG_INFECTION
                        log[2, n] = dst
                        log[3, n] = src
                        log[4, n] = c
                        st[_S_NLOG] = n + 1
                if track_hits:
                    m = nb & ~ever[dst, w]
                    ever[dst, w] |= m
                    while m != _ZERO:
                        low = m & (~m + _ONE)
                        m ^= low
                        n = st[_S_NHITS]
                        hits[0, n] = w * 64 + _bit_index(low)
                        hits[1, n] = dst
                        hits[2, n] = tk
                        st[_S_NHITS] = n + 1
        if trigger:
            return p + 1, _REGROW
    return n_ev, _APPLIED


@njit(nogil=True, cache=True)
def _grow_rows(a, need):
    b = np.empty((a.shape[0], 2 * a.shape[1] + need), a.dtype)
    b[:, : a.shape[1]] = a
    return b


@njit(nogil=True, cache=True)
def replay(
    seed,
    d,
    R,
    lam_max,
    t_off,
    x_off,
    t_end,
    thr,
    starts,
    init_ptr,
    init_sites,
    track_hits,
    record_log,
    escape_q,
    watch,
):
    """Replay clocks on ticks (t_off, t_end] in the window [-R, R]^d.

    ``init_sites`` are flat window indices (lexicographic, first axis most
    significant). ``x_off`` maps view coordinates to clock coordinates.
    A copy counts as escaped when it infects a site of sup-norm >= escape_q
    (pass escape_q > R to disable). With ``record_log``, only events at
    sites flagged in ``watch`` are logged (an empty ``watch`` logs all).
    """
    nc = thr.shape[0]
    nw = (nc + 63) // 64
    W = 2 * R + 1
    nsites = W**d
    stride = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        stride[a] = s
        s *= W

    # acceptance masks by distinct threshold, ascending
    uthr = np.unique(thr)
    nthr = uthr.shape[0]
    acc = np.zeros((nthr, nw), np.uint64)
    for j in range(nthr):
        for c in range(nc):
            if thr[c] >= uthr[j]:
                acc[j, c // 64] |= _ONE << np.uint64(c % 64)

    masks = np.zeros((nsites, nw), np.uint64)
    if track_hits:
        ever = np.zeros((nsites, nw), np.uint64)
    else:
        ever = np.zeros((1, nw), np.uint64)
    occ_pos = np.full(nsites, -1, np.int64)
    occ_list = np.empty(nsites, np.int64)

    alive = np.zeros(nc, np.int64)
    ext = np.full(nc, -1, np.int64)
    bnd = np.zeros(nw, np.uint64)
    esc = np.zeros(nw, np.uint64)
    hits = np.empty((3, 64 + nc), np.int64)
    log = np.empty((5, 64 + nc if record_log else 0), np.int64)

    order = np.argsort(starts, kind="mergesort")

    coord = np.empty(d, np.int64)
    absc = np.empty(d, np.int64)
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    idx = np.empty(d, np.int64)

    ev = np.empty((4, 1024), np.int64)
    ev_mark = np.empty(1024, np.float64)
    bt = np.empty(512, np.int64)
    bm = np.empty(512, np.float64)
    newbits = np.empty(nw, np.uint64)
    perm = np.empty(1024, np.int64)
    counts = np.empty(1025, np.int64)

    st = np.zeros(8, np.int64)
    st[_S_TICK] = t_off
    st[_S_RANK] = _RANK_MAX

    while True:
        if st[_S_INJ] == nc and st[_S_ALIVE] == 0:
            break
        nt = st[_S_TICK] + 1 if st[_S_RANK] == _RANK_MAX else st[_S_TICK]
        if nt > t_end:
            break
        block = nt // TICKS_PER_UNIT
        slice_end = min((block + 1) * TICKS_PER_UNIT - 1, t_end)

        # bounding box of occupied sites and pending initial sites
        for a in range(d):
            lo[a] = W
            hi[a] = -1
        for i in range(st[_S_NOCC]):
            _coords(occ_list[i], d, W, coord)
            for a in range(d):
                lo[a] = min(lo[a], coord[a])
                hi[a] = max(hi[a], coord[a])
        for q in range(st[_S_INJ], nc):
            c = order[q]
            for k in range(init_ptr[c], init_ptr[c + 1]):
                _coords(init_sites[k], d, W, coord)
                for a in range(d):
                    lo[a] = min(lo[a], coord[a])
                    hi[a] = max(hi[a], coord[a])
        if hi[0] < lo[0]:
            # nothing alive and nothing pending in this window
            break
        ext_max = 0
        for a in range(d):
            ext_max = max(ext_max, hi[a] - lo[a])
        pad = 2 + ext_max // 8
        for a in range(d):
            lo[a] = max(lo[a] - pad, 0)
            hi[a] = min(hi[a] + pad, W - 1)

        while True:
            n_ev = _generate(seed, d, R, x_off, stride, lam_max, block,
                             slice_end, st, lo, hi, ev, ev_mark, bt, bm, idx,
                             absc)
            if n_ev >= 0:
                break
            ev = _grow_rows(ev, 0)
            ev_mark = np.empty(ev.shape[1], np.float64)
        if perm.shape[0] < n_ev:
            perm = np.empty(ev.shape[1], np.int64)
        nbk = 1
        while nbk < n_ev and nbk < (1 << 20):
            nbk *= 2
        if counts.shape[0] < nbk + 1:
            counts = np.empty(2 * nbk + 1, np.int64)
        _block_order(ev[0], n_ev, block * TICKS_PER_UNIT, perm, counts[: nbk + 1])

        p = 0
        while True:
            p, status = _apply(p, n_ev, perm, ev, ev_mark, d, R, W, stride, lo,
                               hi, escape_q, uthr, acc, masks, ever, occ_pos,
                               occ_list, alive, ext, bnd, esc, order, starts,
                               init_ptr, init_sites, hits, log, st, newbits,
                               coord, track_hits, record_log, watch)
            if status != _FULL:
                break
            if st[_S_NHITS] + 2 * nc + init_sites.shape[0] > hits.shape[1]:
                hits = _grow_rows(hits, nc + init_sites.shape[0])
            if record_log and st[_S_NLOG] + nc > log.shape[1]:
                log = _grow_rows(log, nc)
        if status == _EXTINCT:
            break
        if status == _APPLIED:
            st[_S_TICK] = slice_end
            st[_S_RANK] = _RANK_MAX

    # copies starting after the last processed event
    if st[_S_NHITS] + init_sites.shape[0] > hits.shape[1]:
        hits = _grow_rows(hits, init_sites.shape[0])
    while st[_S_INJ] < nc and starts[order[st[_S_INJ]]] <= t_end:
        c = order[st[_S_INJ]]
        st[_S_INJ] += 1
        _inject(c, masks, ever, occ_pos, occ_list, alive, ext, starts,
                init_ptr, init_sites, hits, st, track_hits)

    n_occ = st[_S_NOCC]
    final_sites = occ_list[:n_occ].copy()
    final_masks = np.empty((n_occ, nw), np.uint64)
    for i in range(n_occ):
        final_masks[i] = masks[final_sites[i]]
    n_hits = st[_S_NHITS]
    n_log = st[_S_NLOG]
    return (
        ext,
        bnd,
        esc,
        final_sites,
        final_masks,
        hits[0, :n_hits].copy(),
        hits[1, :n_hits].copy(),
        hits[2, :n_hits].copy(),
        log[0, :n_log].copy(),
        log[1, :n_log].copy(),
        log[2, :n_log].copy(),
        log[3, :n_log].copy(),
        log[4, :n_log].copy(),
        st[_S_NEV],
    )


@njit(nogil=True, cache=True)
def idem_count(seed, coords, axes, lam_max, lo_thr, hi_thr, start_tick, end_tick):
    """Number of listed edge clocks with a mark in (lo_thr, hi_thr] on (start, end]."""
    bad = 0
    bt = np.empty(512, np.int64)
    bm = np.empty(512, np.float64)
    b0 = start_tick // TICKS_PER_UNIT
    b1 = end_tick // TICKS_PER_UNIT
    for i in range(axes.shape[0]):
        hk = key_hash(seed, EDGE, coords[i], axes[i])
        found = False
        for b in range(b0, b1 + 1):
            k = block_arrivals(hk, b, lam_max, bt, bm)
            for j in range(k):
                if bt[j] > start_tick and bt[j] <= end_tick:
                    if bm[j] > lo_thr and bm[j] <= hi_thr:
                        found = True
                        break
            if found:
                break
        if found:
            bad += 1
    return bad
