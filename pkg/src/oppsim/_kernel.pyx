# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled meeting loop.

Mirrors ``engine._run_python`` step for step: same event order, same
candidate ordering, same generator draws. Buffers are bitsets, the NC
decoder keeps each node's basis in reduced row-echelon form, and the LT
decoder tracks how many unrecovered neighbours each held symbol still has.
"""
import numpy as np

from libc.math cimport log1p, NAN, INFINITY, isnan
from libc.stdint cimport uint64_t, uint8_t, int64_t, int32_t
from libc.string cimport memset, memcpy, memmove
from cpython.pycapsule cimport PyCapsule_GetPointer

from .coding.gf256 import MUL as _MUL, INV as _INV

cdef extern from "numpy/random/bitgen.h":
    struct bitgen:
        void *state
        double (*next_double)(void *st) nogil
    ctypedef bitgen bitgen_t

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil
    int __builtin_ctzll(unsigned long long) nogil

cdef uint8_t MUL[256][256]
cdef uint8_t INV[256]

cdef void _load_tables():
    cdef int i, j
    for i in range(256):
        INV[i] = _INV[i]
        for j in range(256):
            MUL[i][j] = _MUL[i, j]

_load_tables()

DEF FLOODING = 0
DEF EPIDEMIC_RANDOM = 1
DEF EPIDEMIC_LR = 2
DEF NC = 3
DEF ERASURE = 4

DEF FAIL_PERIODIC = 1
DEF FAIL_MCU = 2


cdef inline double _u01(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline int64_t _uidx(bitgen_t *bg, int64_t m) noexcept nogil:
    cdef int64_t j = <int64_t>(bg.next_double(bg.state) * m)
    return j if j < m else m - 1


cdef inline double _exp(bitgen_t *bg, double rate) noexcept nogil:
    cdef double u = bg.next_double(bg.state)
    while u == 0.0:
        u = bg.next_double(bg.state)
    return -log1p(-u) / rate


# ---------------------------------------------------------------------------
# event heap keyed by (time, u, v)

cdef inline bint _less(double[:] ht, int64_t[:] hu, int64_t[:] hv, int64_t i, int64_t j) noexcept nogil:
    if ht[i] != ht[j]:
        return ht[i] < ht[j]
    if hu[i] != hu[j]:
        return hu[i] < hu[j]
    return hv[i] < hv[j]


cdef inline void _swap(double[:] ht, int64_t[:] hu, int64_t[:] hv, int64_t[:] he, int64_t i, int64_t j) noexcept nogil:
    cdef double t = ht[i]
    cdef int64_t x
    ht[i] = ht[j]; ht[j] = t
    x = hu[i]; hu[i] = hu[j]; hu[j] = x
    x = hv[i]; hv[i] = hv[j]; hv[j] = x
    x = he[i]; he[i] = he[j]; he[j] = x


cdef void _sift_up(double[:] ht, int64_t[:] hu, int64_t[:] hv, int64_t[:] he, int64_t i) noexcept nogil:
    cdef int64_t p
    while i > 0:
        p = (i - 1) >> 1
        if _less(ht, hu, hv, i, p):
            _swap(ht, hu, hv, he, i, p)
            i = p
        else:
            break


cdef void _sift_down(double[:] ht, int64_t[:] hu, int64_t[:] hv, int64_t[:] he, int64_t i, int64_t size) noexcept nogil:
    cdef int64_t l, r, best
    while True:
        l = 2 * i + 1
        r = l + 1
        best = i
        if l < size and _less(ht, hu, hv, l, best):
            best = l
        if r < size and _less(ht, hu, hv, r, best):
            best = r
        if best == i:
            return
        _swap(ht, hu, hv, he, i, best)
        i = best


# ---------------------------------------------------------------------------
# bitset helpers

cdef inline bint _has(uint64_t[:, :] bits, int64_t row, int64_t x) noexcept nogil:
    return (bits[row, x >> 6] >> (x & 63)) & 1


cdef inline void _set(uint64_t[:, :] bits, int64_t row, int64_t x) noexcept nogil:
    bits[row, x >> 6] |= (<uint64_t>1) << (x & 63)


cdef int64_t _nth_bit_diff(uint64_t[:, :] A, int64_t ra, uint64_t[:, :] B, int64_t rb, int64_t W, int64_t j) noexcept nogil:
    """Position of the j-th (0-based) set bit of A[ra] & ~B[rb]."""
    cdef int64_t w, c
    cdef uint64_t x
    for w in range(W):
        x = A[ra, w] & ~B[rb, w]
        c = __builtin_popcountll(x)
        if j < c:
            while j > 0:
                x &= x - 1
                j -= 1
            return w * 64 + __builtin_ctzll(x)
        j -= c
    return -1


cdef int64_t _pick_diff(bitgen_t *bg, uint64_t[:, :] A, int64_t ra, uint64_t[:, :] B, int64_t rb, int64_t W) noexcept nogil:
    cdef int64_t w, m = 0
    for w in range(W):
        m += __builtin_popcountll(A[ra, w] & ~B[rb, w])
    if m == 0:
        return -1
    return _nth_bit_diff(A, ra, B, rb, W, _uidx(bg, m))


cdef int64_t _pick_rarest(bitgen_t *bg, uint64_t[:, :] held, int64_t a, int64_t b, int64_t W,
                          int32_t[:, :] cnt) noexcept nogil:
    cdef int64_t w, x, low = -1, ties = 0, j
    cdef uint64_t bitsx
    cdef int32_t c
    for w in range(W):
        bitsx = held[a, w] & ~held[b, w]
        while bitsx:
            x = w * 64 + __builtin_ctzll(bitsx)
            bitsx &= bitsx - 1
            c = cnt[b, x]
            if low < 0 or c < low:
                low = c
                ties = 1
            elif c == low:
                ties += 1
    if ties == 0:
        return -1
    j = _uidx(bg, ties)
    for w in range(W):
        bitsx = held[a, w] & ~held[b, w]
        while bitsx:
            x = w * 64 + __builtin_ctzll(bitsx)
            bitsx &= bitsx - 1
            if cnt[b, x] == low:
                if j == 0:
                    return x
                j -= 1
    return -1


cdef void _observe(uint64_t[:, :] summ, int64_t slot, uint64_t[:, :] held, int64_t peer,
                   int32_t[:, :] cnt, int64_t viewer, int64_t W) noexcept nogil:
    cdef int64_t w, x
    cdef uint64_t old, new, d
    for w in range(W):
        old = summ[slot, w]
        new = held[peer, w]
        d = new & ~old
        while d:
            x = w * 64 + __builtin_ctzll(d)
            d &= d - 1
            cnt[viewer, x] += 1
        d = old & ~new
        while d:
            x = w * 64 + __builtin_ctzll(d)
            d &= d - 1
            cnt[viewer, x] -= 1
        summ[slot, w] = new


# ---------------------------------------------------------------------------
# network coding: per-node RREF basis

cdef bint _nc_ingest(uint8_t[:, :, :] rows, int64_t[:, :] piv, int64_t[:] rank, int64_t node,
                     uint8_t *v, int64_t k) noexcept nogil:
    cdef int64_t i, j, col = -1, pos, r = rank[node]
    cdef uint8_t c, f
    for i in range(r):
        c = v[piv[node, i]]
        if c:
            for j in range(k):
                v[j] ^= MUL[c][rows[node, i, j]]
    for j in range(k):
        if v[j]:
            col = j
            break
    if col < 0:
        return False
    f = INV[v[col]]
    for j in range(k):
        v[j] = MUL[f][v[j]]
    for i in range(r):
        c = rows[node, i, col]
        if c:
            for j in range(k):
                rows[node, i, j] ^= MUL[c][v[j]]
    pos = r
    for i in range(r):
        if piv[node, i] > col:
            pos = i
            break
    i = r
    while i > pos:
        for j in range(k):
            rows[node, i, j] = rows[node, i - 1, j]
        piv[node, i] = piv[node, i - 1]
        i -= 1
    for j in range(k):
        rows[node, pos, j] = v[j]
    piv[node, pos] = col
    rank[node] = r + 1
    return True


cdef void _nc_combine(bitgen_t *bg, uint8_t[:, :, :] rows, int64_t r, int64_t node, uint8_t *out,
                      int64_t k) noexcept nogil:
    cdef int64_t i, j
    cdef uint8_t c
    cdef bint nz
    while True:
        memset(out, 0, k)
        for i in range(r):
            c = <uint8_t>_uidx(bg, 256)
            if c:
                for j in range(k):
                    out[j] ^= MUL[c][rows[node, i, j]]
        nz = False
        for j in range(k):
            if out[j]:
                nz = True
                break
        if nz:
            return


# ---------------------------------------------------------------------------
# LT peeling

cdef void _lt_recover(int64_t node, int64_t p, uint8_t[:, :] rec, int64_t[:] rec_cnt, int32_t[:, :] rem,
                      uint64_t[:, :] held, int64_t[:] pk_ptr, int64_t[:] pk_sym,
                      int64_t[:] stack, int64_t *top) noexcept nogil:
    cdef int64_t q, s
    rec[node, p] = 1
    rec_cnt[node] += 1
    for q in range(pk_ptr[p], pk_ptr[p + 1]):
        s = pk_sym[q]
        if _has(held, node, s):
            rem[node, s] -= 1
            if rem[node, s] == 1:
                stack[top[0]] = s
                top[0] += 1


cdef bint _lt_add(int64_t node, int64_t s, uint8_t[:, :] rec, int64_t[:] rec_cnt, int32_t[:, :] rem,
                  uint64_t[:, :] held, int64_t[:] sym_ptr, int64_t[:] sym_pk,
                  int64_t[:] pk_ptr, int64_t[:] pk_sym, int64_t[:] stack) noexcept nogil:
    """Hold symbol ``s`` at ``node`` and peel; True if it had an unrecovered neighbour."""
    cdef int64_t q, unk = 0, top = 0, t, p
    for q in range(sym_ptr[s], sym_ptr[s + 1]):
        if not rec[node, sym_pk[q]]:
            unk += 1
    _set(held, node, s)
    rem[node, s] = <int32_t>unk
    if unk == 1:
        stack[0] = s
        top = 1
    while top > 0:
        top -= 1
        t = stack[top]
        if rem[node, t] != 1:
            continue
        for q in range(sym_ptr[t], sym_ptr[t + 1]):
            p = sym_pk[q]
            if not rec[node, p]:
                _lt_recover(node, p, rec, rec_cnt, rem, held, pk_ptr, pk_sym, stack, &top)
                break
    return unk > 0


# ---------------------------------------------------------------------------

def run_trial_kernel(dict inp, bit_generator):
    """Run one seeded trial. ``inp`` comes from ``engine.kernel_inputs``."""
    cdef bitgen_t *bg = <bitgen_t *>PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")

    cdef int64_t n = inp["n"], k = inp["k"], strat = inp["strategy"]
    cdef int64_t[:] us = np.ascontiguousarray(inp["us"], dtype=np.int64)
    cdef int64_t[:] vs = np.ascontiguousarray(inp["vs"], dtype=np.int64)
    cdef double[:] ws = np.ascontiguousarray(inp["ws"], dtype=np.float64)
    cdef int64_t m = us.shape[0]
    cdef int64_t[:] init_ptr = np.ascontiguousarray(inp["init_ptr"], dtype=np.int64)
    cdef int64_t[:] init_ids = np.ascontiguousarray(inp["init_ids"], dtype=np.int64)
    cdef int64_t n_sym = inp["n_sym"]
    cdef int64_t[:] sym_ptr = np.ascontiguousarray(inp["sym_ptr"], dtype=np.int64)
    cdef int64_t[:] sym_pk = np.ascontiguousarray(inp["sym_pk"], dtype=np.int64)
    cdef int64_t fail = inp["failure"]
    cdef double interval = inp["interval"]
    cdef int64_t threshold = inp["threshold"]
    cdef signed char[:] mcu = np.ascontiguousarray(inp["mcu"], dtype=np.int8)
    cdef double horizon = inp["horizon"]

    cdef bint lr = strat == EPIDEMIC_LR or strat == ERASURE
    cdef int64_t nid = n_sym if strat == ERASURE else k
    cdef int64_t W = (nid + 63) // 64 if nid > 0 else 1

    held_np = np.zeros((n, W), dtype=np.uint64)
    cdef uint64_t[:, :] held = held_np
    cdef int64_t[:] count = np.zeros(n, dtype=np.int64)
    cdef uint64_t[:, :] summ = np.zeros((2 * m if lr else 1, W), dtype=np.uint64)
    cdef int32_t[:, :] cnt = np.zeros((n if lr else 1, nid if lr else 1), dtype=np.int32)
    cdef uint64_t[:, :] flog = np.zeros((2 * m if strat == FLOODING else 1, W), dtype=np.uint64)

    if strat == NC:
        rows_np = np.array(inp["init_rows"], dtype=np.uint8, copy=True)
    else:
        rows_np = np.zeros((1, 1, 1), dtype=np.uint8)
    cdef uint8_t[:, :, :] rows = rows_np
    cdef int64_t[:, :] piv = np.zeros((n if strat == NC else 1, k if strat == NC else 1), dtype=np.int64)
    cdef int64_t[:] rank = np.zeros(n, dtype=np.int64)
    cdef uint8_t[:, :] msg = np.zeros((2, k), dtype=np.uint8)

    cdef uint8_t[:, :] rec = np.zeros((n if strat == ERASURE else 1, k if strat == ERASURE else 1), dtype=np.uint8)
    cdef int64_t[:] rec_cnt = np.zeros(n, dtype=np.int64)
    cdef int32_t[:, :] rem = np.zeros((n if strat == ERASURE else 1, n_sym if strat == ERASURE else 1), dtype=np.int32)
    cdef int64_t[:] pk_ptr = np.zeros(k + 1, dtype=np.int64)
    cdef int64_t[:] pk_sym = np.zeros(max(sym_pk.shape[0], 1), dtype=np.int64)
    cdef int64_t[:] stack = np.zeros(n_sym + 2, dtype=np.int64)
    cdef int64_t[:] fill = np.zeros(k, dtype=np.int64)

    cdef uint64_t[:, :] seeded = np.zeros((n, W), dtype=np.uint64)
    cdef uint64_t[:, :] spread = np.zeros((n, W), dtype=np.uint64)
    cdef int64_t[:] spread_cnt = np.zeros(n, dtype=np.int64)

    finish_np = np.full(n, np.nan)
    alive_np = np.ones(n, dtype=np.uint8)
    sent_np = np.zeros(n, dtype=np.int64)
    recv_np = np.zeros(n, dtype=np.int64)
    nonin_np = np.zeros(n, dtype=np.int64)
    cdef double[:] finish = finish_np
    cdef uint8_t[:] alive = alive_np
    cdef int64_t[:] sent = sent_np
    cdef int64_t[:] recv = recv_np
    cdef int64_t[:] nonin = nonin_np

    cdef double[:] ht = np.zeros(max(m, 1))
    cdef int64_t[:] hu = np.zeros(max(m, 1), dtype=np.int64)
    cdef int64_t[:] hv = np.zeros(max(m, 1), dtype=np.int64)
    cdef int64_t[:] he = np.zeros(max(m, 1), dtype=np.int64)
    cdef int64_t hsize = 0

    cdef int64_t i, j, q, e, u, v, a, b, x, s, p, w, victim, slot_ab, slot_ba
    cdef int64_t meetings = 0, innov_total = 0, noninnov_total = 0
    cdef int64_t n_alive = n, unfinished = 0, jfail = 1
    cdef int64_t x_ab, x_ba
    cdef bint truncated = False, useful
    cdef double t, now = 0.0, top, next_fail
    cdef int64_t[2] snd_
    cdef int64_t[2] rcv_
    cdef int64_t[2] item_
    failures = []

    # initial buffers
    if strat == ERASURE:
        for s in range(n_sym):
            for q in range(sym_ptr[s], sym_ptr[s + 1]):
                pk_ptr[sym_pk[q] + 1] += 1
        for p in range(k):
            pk_ptr[p + 1] += pk_ptr[p]
        for s in range(n_sym):
            for q in range(sym_ptr[s], sym_ptr[s + 1]):
                p = sym_pk[q]
                pk_sym[pk_ptr[p] + fill[p]] = s
                fill[p] += 1
    if strat == NC:
        init_rank = np.ascontiguousarray(inp["init_rank"], dtype=np.int64)
        for v in range(n):
            rank[v] = init_rank[v]
            for i in range(rank[v]):
                for j in range(k):
                    if rows[v, i, j]:
                        piv[v, i] = j
                        break
    else:
        for v in range(n):
            for q in range(init_ptr[v], init_ptr[v + 1]):
                x = init_ids[q]
                if strat == ERASURE:
                    _lt_add(v, x, rec, rec_cnt, rem, held, sym_ptr, sym_pk, pk_ptr, pk_sym, stack)
                else:
                    _set(held, v, x)
                count[v] += 1
    for v in range(n):
        if mcu[v]:
            for w in range(W):
                seeded[v, w] = held[v, w]
        if _complete(strat, v, k, count, rank, rec_cnt):
            finish[v] = 0.0
        else:
            unfinished += 1

    for e in range(m):
        ht[hsize] = _exp(bg, ws[e])
        hu[hsize] = us[e]
        hv[hsize] = vs[e]
        he[hsize] = e
        hsize += 1
        _sift_up(ht, hu, hv, he, hsize - 1)

    next_fail = interval if fail == FAIL_PERIODIC else INFINITY

    while True:
        if n_alive == 0:
            truncated = True
            break
        if unfinished == 0:
            break
        top = ht[0] if hsize > 0 else INFINITY
        if next_fail <= top:
            if next_fail > horizon:
                truncated = True
                now = horizon
                break
            now = next_fail
            j = _uidx(bg, n_alive)
            victim = -1
            for v in range(n):
                if alive[v]:
                    if j == 0:
                        victim = v
                        break
                    j -= 1
            if isnan(finish[victim]):
                unfinished -= 1
            _kill(victim, alive, finish, held, count, rank, rec_cnt, W)
            n_alive -= 1
            failures.append((now, victim))
            jfail += 1
            next_fail = jfail * interval
            continue
        if hsize == 0 or top > horizon:
            truncated = True
            if hsize > 0:
                now = horizon
            break

        t = ht[0]
        u = hu[0]
        v = hv[0]
        e = he[0]
        hsize -= 1
        if hsize > 0:
            _swap(ht, hu, hv, he, 0, hsize)
            _sift_down(ht, hu, hv, he, 0, hsize)
        now = t
        if not (alive[u] and alive[v]):
            continue
        meetings += 1
        a = u
        b = v
        slot_ab = 2 * e        # a's record about b
        slot_ba = 2 * e + 1    # b's record about a
        if lr:
            # both sides store the other's pre-meeting set
            _observe(summ, slot_ab, held, b, cnt, a, W)
            _observe(summ, slot_ba, held, a, cnt, b, W)

        x_ab = _select(bg, strat, a, b, slot_ab, k, W, held, count, flog, cnt, rows, rank, rec_cnt, msg, 0)
        x_ba = _select(bg, strat, b, a, slot_ba, k, W, held, count, flog, cnt, rows, rank, rec_cnt, msg, 1)

        snd_[0] = a; rcv_[0] = b; item_[0] = x_ab
        snd_[1] = b; rcv_[1] = a; item_[1] = x_ba
        for i in range(2):
            x = item_[i]
            if x < 0:
                continue
            p = snd_[i]
            q = rcv_[i]
            if strat == NC:
                useful = _nc_ingest(rows, piv, rank, q, &msg[i, 0], k)
            elif strat == ERASURE:
                useful = _lt_add(q, x, rec, rec_cnt, rem, held, sym_ptr, sym_pk, pk_ptr, pk_sym, stack)
                count[q] += 1
            else:
                if strat == FLOODING:
                    _set(flog, slot_ba if i == 0 else slot_ab, x)
                useful = not _has(held, q, x)
                if useful:
                    _set(held, q, x)
                    count[q] += 1
            sent[p] += 1
            recv[q] += 1
            if useful:
                innov_total += 1
            else:
                noninnov_total += 1
                nonin[q] += 1
            if mcu[p]:
                if strat == NC:
                    if useful:
                        spread_cnt[p] += 1
                elif _has(seeded, p, x) and not _has(spread, p, x):
                    _set(spread, p, x)
                    spread_cnt[p] += 1

        for i in range(2):
            q = b if i == 0 else a
            if isnan(finish[q]) and _complete(strat, q, k, count, rank, rec_cnt):
                finish[q] = t
                unfinished -= 1
        if fail == FAIL_MCU:
            for i in range(2):
                p = a if i == 0 else b
                if mcu[p] and alive[p] and spread_cnt[p] >= threshold:
                    if isnan(finish[p]):
                        unfinished -= 1
                    _kill(p, alive, finish, held, count, rank, rec_cnt, W)
                    n_alive -= 1
                    failures.append((t, p))

        ht[hsize] = t + _exp(bg, ws[e])
        hu[hsize] = u
        hv[hsize] = v
        he[hsize] = e
        hsize += 1
        _sift_up(ht, hu, hv, he, hsize - 1)

    return {
        "finish": finish_np,
        "alive": alive_np,
        "sent": sent_np,
        "recv": recv_np,
        "nonin": nonin_np,
        "meetings": meetings,
        "innov": innov_total,
        "noninnov": noninnov_total,
        "truncated": truncated,
        "end_time": now,
        "failures": failures,
    }


cdef inline bint _complete(int64_t strat, int64_t v, int64_t k, int64_t[:] count, int64_t[:] rank,
                           int64_t[:] rec_cnt) noexcept nogil:
    if strat == NC:
        return rank[v] == k
    if strat == ERASURE:
        return rec_cnt[v] == k
    return count[v] == k


cdef void _kill(int64_t v, uint8_t[:] alive, double[:] finish, uint64_t[:, :] held, int64_t[:] count,
                int64_t[:] rank, int64_t[:] rec_cnt, int64_t W) noexcept nogil:
    cdef int64_t w
    alive[v] = 0
    finish[v] = NAN
    for w in range(W):
        held[v, w] = 0
    count[v] = 0
    rank[v] = 0
    rec_cnt[v] = 0


cdef int64_t _select(bitgen_t *bg, int64_t strat, int64_t a, int64_t b, int64_t slot, int64_t k, int64_t W,
                     uint64_t[:, :] held, int64_t[:] count, uint64_t[:, :] flog, int32_t[:, :] cnt,
                     uint8_t[:, :, :] rows, int64_t[:] rank, int64_t[:] rec_cnt, uint8_t[:, :] msg,
                     int64_t which) noexcept nogil:
    """Item ``a`` sends to ``b`` (packet/symbol id, or 1 for an NC message in ``msg[which]``); -1 for none."""
    cdef int64_t x
    if _complete(strat, b, k, count, rank, rec_cnt):
        return -1
    if strat == NC:
        if rank[a] == 0:
            return -1
        _nc_combine(bg, rows, rank[a], a, &msg[which, 0], k)
        return 1
    if count[a] == 0:
        return -1
    if strat == FLOODING:
        x = _pick_diff(bg, held, a, flog, slot, W)
        if x >= 0:
            _set(flog, slot, x)
        return x
    if strat == EPIDEMIC_RANDOM:
        return _pick_diff(bg, held, a, held, b, W)
    return _pick_rarest(bg, held, a, b, W, cnt)
