"""Pure-Python kernels. Same signatures and results as ``_ckernels``."""

from bisect import bisect_right

import numpy as np


def small_region_count(users, times, u_users, u_times, k):
    """Count users (grouped, sorted by id) newly reaching ``k`` once the large-part time is added.

    A user already at ``k`` in the large part is skipped: it was counted there.
    """
    users = users.tolist()
    times = times.tolist()
    u_users = u_users.tolist()
    u_times = u_times.tolist()
    nu = len(u_users)
    count = 0
    i = 0
    start = 0
    size = len(users)
    while i < size:
        user = users[i]
        small = 0
        while i < size and users[i] == user:
            small += times[i]
            i += 1
        start = bisect_right(u_users, user, start)
        pos = start - 1
        large = u_times[pos] if pos >= 0 and pos < nu and u_users[pos] == user else 0
        if large < k and small + large >= k:
            count += 1
    return count


def sample_hits(s_users, s_regions, s_times, q_regions, keys, key_times, m, k):
    """Histogram ``h`` with ``h[c]`` = samples whose user qualifies and visits ``c`` query regions."""
    r = len(q_regions)
    hist = np.zeros(r + 1, dtype=np.int64)
    keys_l = keys.tolist()
    key_times_l = key_times.tolist()
    nk = len(keys_l)
    q = q_regions.tolist()
    for user, region, t in zip(s_users.tolist(), s_regions.tolist(), s_times.tolist()):
        total = t
        c = 1
        base = user * m
        for other in q:
            if other == region:
                continue
            key = base + other
            pos = bisect_right(keys_l, key) - 1
            if 0 <= pos < nk and keys_l[pos] == key:
                total += key_times_l[pos]
                c += 1
        if total >= k:
            hist[c] += 1
    return hist


def saturating_accumulate(counters, index, inc, cap):
    """In order, ``counters[index[i]] = min(cap, counters[index[i]] + inc[i])``."""
    flat = counters.reshape(-1)
    for idx, step in zip(index.tolist(), inc.tolist()):
        value = int(flat[idx]) + step
        flat[idx] = cap if value > cap else value


def minimal_intervals(users, pos, times, k):
    """Two-pointer sweep per user group; returns ``(user, l, r)`` arrays of minimal intervals.

    Input is grouped by user with strictly increasing ``pos`` inside a group.
    """
    users_l = users.tolist()
    pos_l = pos.tolist()
    times_l = times.tolist()
    out_u, out_l, out_r = [], [], []
    size = len(users_l)
    start = 0
    while start < size:
        user = users_l[start]
        end = start
        while end < size and users_l[end] == user:
            end += 1
        j = start
        window = 0  # sum of times[i..j-1]
        for i in range(start, end):
            if j < i:
                j = i
                window = 0
            while j < end and window < k:
                window += times_l[j]
                j += 1
            if window < k:
                break
            if window - times_l[i] < k:
                out_u.append(user)
                out_l.append(pos_l[i])
                out_r.append(pos_l[j - 1])
            window -= times_l[i]
        start = end
    return (np.array(out_u, dtype=np.int64), np.array(out_l, dtype=np.int64),
            np.array(out_r, dtype=np.int64))


def staircase(colors, xs, ys):
    """Per color: dominance-minimal points (+1) and cancellation corners (-1).

    Input must be sorted by (color, x, y). Returns ``(color, x, y, weight)``.
    """
    colors_l, xs_l, ys_l = colors.tolist(), xs.tolist(), ys.tolist()
    oc, ox, oy, ow = [], [], [], []
    size = len(colors_l)
    i = 0
    while i < size:
        color = colors_l[i]
        best_y = None
        prev_y = None
        while i < size and colors_l[i] == color:
            x, y = xs_l[i], ys_l[i]
            if best_y is None or y < best_y:
                if prev_y is not None:
                    oc.append(color)
                    ox.append(x)
                    oy.append(prev_y)
                    ow.append(-1)
                oc.append(color)
                ox.append(x)
                oy.append(y)
                ow.append(1)
                best_y = y
                prev_y = y
            i += 1
    return (np.array(oc, dtype=np.int64), np.array(ox, dtype=np.int64),
            np.array(oy, dtype=np.int64), np.array(ow, dtype=np.int64))


def dominance_query(xs_sorted, node_ptr, node_y, node_cw, qx, qy):
    """Signed weight of points with ``x <= qx`` and ``y <= qy`` for each query.

    Fenwick layout over x-sorted points: node ``i`` (1-based) covers points
    ``(i - lowbit(i), i]`` and stores their y values sorted in
    ``node_y[node_ptr[i-1]:node_ptr[i]]`` with inclusive prefix weights in ``node_cw``.
    """
    xs_l = xs_sorted.tolist()
    ptr = node_ptr.tolist()
    ny = node_y.tolist()
    cw = node_cw.tolist()
    out = np.zeros(len(qx), dtype=np.int64)
    for t, (x, y) in enumerate(zip(qx.tolist(), qy.tolist())):
        i = bisect_right(xs_l, x)
        total = 0
        while i > 0:
            a, b = ptr[i - 1], ptr[i]
            cut = bisect_right(ny, y, a, b)
            if cut > a:
                total += cw[cut - 1]
            i -= i & -i
        out[t] = total
    return out
