# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Mirrors ``_pure`` exactly; see there for semantics."""

import numpy as np
cimport numpy as cnp

ctypedef cnp.int64_t i64

cnp.import_array()


cdef inline Py_ssize_t _upper(const i64[::1] a, Py_ssize_t lo, Py_ssize_t hi, i64 key) noexcept nogil:
    # first index in [lo, hi) with a[idx] > key
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= key:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _gallop(const i64[::1] a, Py_ssize_t lo, Py_ssize_t hi, i64 key) noexcept nogil:
    # _upper for keys arriving in increasing order: probe lo, lo+1, lo+3, ... then bisect
    cdef Py_ssize_t step = 1, prev = lo
    while lo < hi and a[lo] <= key:
        prev = lo + 1
        lo += step
        step <<= 1
    if lo > hi:
        lo = hi
    return _upper(a, prev, lo, key)


def small_region_count(const i64[::1] users, const i64[::1] times,
                       const i64[::1] u_users, const i64[::1] u_times, i64 k):
    cdef Py_ssize_t i = 0, size = users.shape[0], nu = u_users.shape[0], pos
    cdef Py_ssize_t start = 0
    cdef i64 user, small, large, count = 0
    with nogil:
        while i < size:
            user = users[i]
            small = 0
            while i < size and users[i] == user:
                small += times[i]
                i += 1
            start = _gallop(u_users, start, nu, user)
            pos = start - 1
            large = u_times[pos] if pos >= 0 and u_users[pos] == user else 0
            if large < k and small + large >= k:
                count += 1
    return count


def sample_hits(const i64[::1] s_users, const i64[::1] s_regions, const i64[::1] s_times,
                const i64[::1] q_regions, const i64[::1] keys, const i64[::1] key_times,
                i64 m, i64 k):
    cdef Py_ssize_t r = q_regions.shape[0], nk = keys.shape[0], s = s_users.shape[0]
    cdef Py_ssize_t t, q, pos
    cdef i64 total, c, key, base, region
    hist_arr = np.zeros(r + 1, dtype=np.int64)
    cdef i64[::1] hist = hist_arr
    with nogil:
        for t in range(s):
            region = s_regions[t]
            total = s_times[t]
            c = 1
            base = s_users[t] * m
            for q in range(r):
                if q_regions[q] == region:
                    continue
                key = base + q_regions[q]
                pos = _upper(keys, 0, nk, key) - 1
                if pos >= 0 and keys[pos] == key:
                    total += key_times[pos]
                    c += 1
            if total >= k:
                hist[c] += 1
    return hist_arr


def saturating_accumulate(counters, const i64[::1] index, const i64[::1] inc, i64 cap):
    cdef i64[::1] flat = counters.reshape(-1)
    cdef Py_ssize_t i, size = index.shape[0]
    cdef i64 value
    with nogil:
        for i in range(size):
            value = flat[index[i]] + inc[i]
            flat[index[i]] = cap if value > cap else value


def minimal_intervals(const i64[::1] users, const i64[::1] pos, const i64[::1] times, i64 k):
    cdef Py_ssize_t size = users.shape[0], start = 0, end, i, j, n_out = 0
    cdef i64 user, window
    out_u_arr = np.empty(size, dtype=np.int64)
    out_l_arr = np.empty(size, dtype=np.int64)
    out_r_arr = np.empty(size, dtype=np.int64)
    cdef i64[::1] out_u = out_u_arr, out_l = out_l_arr, out_r = out_r_arr
    with nogil:
        while start < size:
            user = users[start]
            end = start
            while end < size and users[end] == user:
                end += 1
            j = start
            window = 0
            for i in range(start, end):
                if j < i:
                    j = i
                    window = 0
                while j < end and window < k:
                    window += times[j]
                    j += 1
                if window < k:
                    break
                if window - times[i] < k:
                    out_u[n_out] = user
                    out_l[n_out] = pos[i]
                    out_r[n_out] = pos[j - 1]
                    n_out += 1
                window -= times[i]
            start = end
    return out_u_arr[:n_out].copy(), out_l_arr[:n_out].copy(), out_r_arr[:n_out].copy()


def staircase(const i64[::1] colors, const i64[::1] xs, const i64[::1] ys):
    cdef Py_ssize_t size = colors.shape[0], i = 0, n_out = 0
    cdef i64 color, best_y, prev_y
    cdef bint have
    oc_arr = np.empty(2 * size, dtype=np.int64)
    ox_arr = np.empty(2 * size, dtype=np.int64)
    oy_arr = np.empty(2 * size, dtype=np.int64)
    ow_arr = np.empty(2 * size, dtype=np.int64)
    cdef i64[::1] oc = oc_arr, ox = ox_arr, oy = oy_arr, ow = ow_arr
    with nogil:
        while i < size:
            color = colors[i]
            have = False
            best_y = 0
            prev_y = 0
            while i < size and colors[i] == color:
                if not have or ys[i] < best_y:
                    if have:
                        oc[n_out] = color
                        ox[n_out] = xs[i]
                        oy[n_out] = prev_y
                        ow[n_out] = -1
                        n_out += 1
                    oc[n_out] = color
                    ox[n_out] = xs[i]
                    oy[n_out] = ys[i]
                    ow[n_out] = 1
                    n_out += 1
                    best_y = ys[i]
                    prev_y = ys[i]
                    have = True
                i += 1
    return (oc_arr[:n_out].copy(), ox_arr[:n_out].copy(),
            oy_arr[:n_out].copy(), ow_arr[:n_out].copy())


def dominance_query(const i64[::1] xs_sorted, const i64[::1] node_ptr, const i64[::1] node_y,
                    const i64[::1] node_cw, const i64[::1] qx, const i64[::1] qy):
    cdef Py_ssize_t nq = qx.shape[0], npts = xs_sorted.shape[0], t, i, a, b, cut
    cdef i64 total
    out_arr = np.zeros(nq, dtype=np.int64)
    cdef i64[::1] out = out_arr
    with nogil:
        for t in range(nq):
            i = _upper(xs_sorted, 0, npts, qx[t])
            total = 0
            while i > 0:
                a = node_ptr[i - 1]
                b = node_ptr[i]
                cut = _upper(node_y, a, b, qy[t])
                if cut > a:
                    total += node_cw[cut - 1]
                i -= i & -i
            out[t] = total
    return out_arr
