# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cellular-automaton kernel; mirrors ``_pykernel.simulate`` exactly,
including the per-ride SplitMix64 streams."""

import numpy as np
cimport numpy as cnp

from ._pykernel import run_key

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef unsigned long long u64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline u64 fmix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double next_uniform(u64[::1] st, i64 r) nogil:
    st[r] = st[r] + GOLDEN
    return <double>(fmix64(st[r]) >> 11) * INV53


def simulate(cells_in, lanes_in, theta_in, route_ptr_in, route_edges_in,
             int v_max, double p_slow, i64 t_max, max_steps, rng, observer=None):
    if observer is not None:
        raise ValueError("observer is only supported by the pure-Python kernel")
    cdef i64[::1] cells = np.ascontiguousarray(cells_in, dtype=np.int64)
    cdef i64[::1] lanes = np.ascontiguousarray(lanes_in, dtype=np.int64)
    cdef i64[::1] theta = np.ascontiguousarray(theta_in, dtype=np.int64)
    cdef i64[::1] route_ptr = np.ascontiguousarray(route_ptr_in, dtype=np.int64)
    cdef i64[::1] route_edges = np.ascontiguousarray(route_edges_in, dtype=np.int64)
    cdef Py_ssize_t m = cells.shape[0]
    cdef Py_ssize_t n_rides = theta.shape[0]

    offsets_np = np.zeros(m, dtype=np.int64)
    cdef i64[::1] offsets = offsets_np
    cdef i64 total = 0
    cdef Py_ssize_t e
    for e in range(m):
        offsets[e] = total
        total += cells[e] * lanes[e]
    occ_np = np.zeros(max(total, 1), dtype=np.uint8)
    cdef cnp.uint8_t[::1] occ = occ_np

    state_np = np.zeros(n_rides, dtype=np.int8)
    cdef cnp.int8_t[::1] state = state_np
    cdef i64[::1] pos = np.zeros(n_rides, dtype=np.int64)
    cdef i64[::1] lane = np.zeros(n_rides, dtype=np.int64)
    cdef i64[::1] cell = np.zeros(n_rides, dtype=np.int64)
    cdef i64[::1] speed = np.zeros(n_rides, dtype=np.int64)
    finish_np = np.full(n_rides, -1, dtype=np.int64)
    cdef i64[::1] finish = finish_np
    counts_np = np.zeros(m, dtype=np.int64)
    cdef i64[::1] counts = counts_np

    cdef i64[::1] order = np.lexsort((np.arange(n_rides), np.asarray(theta))).astype(np.int64)
    cdef i64[::1] active = np.empty(n_rides + 1, dtype=np.int64)
    cdef i64[::1] scratch = np.empty(n_rides + 1, dtype=np.int64)
    cdef i64[::1] fresh = np.empty(n_rides + 1, dtype=np.int64)
    cdef i64[::1] free_lanes = np.empty(max(int(np.max(np.asarray(lanes))) if m else 1, 1), dtype=np.int64)
    cdef Py_ssize_t n_active = 0, n_new, a, b, k, idx, nxt_inject = 0
    cdef i64 t = 0, nt, limit = -1 if max_steps is None else <i64>max_steps
    cdef i64 r, c, base, lb, ob, ci, li, v, x, xl, l, best_l, best_x, chosen
    cdef bint done
    cdef u64 key = <u64>run_key(rng)
    cdef u64[::1] rstate = np.empty(max(n_rides, 1), dtype=np.uint64)
    for idx in range(n_rides):
        rstate[idx] = fmix64(key + <u64>(idx + 1) * GOLDEN)

    while t < t_max or n_active > 0:
        if limit >= 0 and t >= limit:
            break
        if n_active == 0:
            nt = theta[order[nxt_inject]] if nxt_inject < n_rides else t_max
            if nt > t_max:
                nt = t_max
            if limit >= 0 and nt > limit:
                nt = limit
            if nt > t:
                t = nt
                continue

        n_new = 0
        while nxt_inject < n_rides and theta[order[nxt_inject]] == t:
            r = order[nxt_inject]
            nxt_inject += 1
            if route_ptr[r] == route_ptr[r + 1]:
                continue
            state[r] = 1
            pos[r] = route_ptr[r]
            speed[r] = 0
            fresh[n_new] = r
            n_new += 1
        if n_new > 0:
            # injection order is (theta, id), so the fresh batch is already id-sorted
            a = 0
            b = 0
            k = 0
            while a < n_active or b < n_new:
                if b >= n_new or (a < n_active and active[a] < fresh[b]):
                    scratch[k] = active[a]
                    a += 1
                else:
                    scratch[k] = fresh[b]
                    b += 1
                k += 1
            for idx in range(k):
                active[idx] = scratch[idx]
            n_active = k

        # waiting rides try to enter their edge
        for idx in range(n_active):
            r = active[idx]
            if state[r] != 1:
                continue
            e = route_edges[pos[r]]
            c = cells[e]
            base = offsets[e]
            k = 0
            for l in range(lanes[e]):
                if occ[base + l * c] == 0:
                    free_lanes[k] = l
                    k += 1
            if k == 0:
                speed[r] = 0
                continue
            if k == 1:
                chosen = free_lanes[0]
            else:
                x = <i64>(next_uniform(rstate, r) * k)
                if x > k - 1:
                    x = k - 1
                chosen = free_lanes[x]
            lane[r] = chosen
            cell[r] = 1
            occ[base + chosen * c] = 1
            state[r] = 2
            counts[e] += 1

        done = False
        for idx in range(n_active):
            r = active[idx]
            if state[r] != 2:
                continue
            e = route_edges[pos[r]]
            c = cells[e]
            base = offsets[e]
            ci = cell[r]
            li = lane[r]
            v = speed[r] + 1
            if v > v_max:
                v = v_max
            lb = base + li * c
            x = 0
            while x < v and ci + x < c and occ[lb + ci + x] == 0:
                x += 1
            if x < v:
                best_l = li
                best_x = x
                for l in range(lanes[e]):
                    if l == li:
                        continue
                    ob = base + l * c
                    if occ[ob + ci - 1] != 0:
                        continue
                    xl = 0
                    while ci + xl < c and occ[ob + ci + xl] == 0:
                        xl += 1
                    if xl > best_x:
                        best_l = l
                        best_x = xl
                if best_l != li:
                    occ[lb + ci - 1] = 0
                    li = best_l
                    lb = base + li * c
                    occ[lb + ci - 1] = 1
                    lane[r] = li
                x = best_x
            if x < v:
                v = x
            if v > 0 and p_slow > 0.0 and next_uniform(rstate, r) < p_slow:
                v -= 1
            occ[lb + ci - 1] = 0
            ci += v
            speed[r] = v
            if ci == c:
                pos[r] += 1
                if pos[r] == route_ptr[r + 1]:
                    state[r] = 3
                    finish[r] = t
                    done = True
                else:
                    state[r] = 1
            else:
                occ[lb + ci - 1] = 1
                cell[r] = ci

        if done:
            k = 0
            for idx in range(n_active):
                if state[active[idx]] != 3:
                    active[k] = active[idx]
                    k += 1
            n_active = k
        t += 1

    return finish_np.tolist(), counts_np.tolist(), int(t)
