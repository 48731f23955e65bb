"""Compiled event loops.

Both loops consume a buffer of standard exponentials ``E`` and uniforms ``V``.
Event ``i`` happens ``E[i] / total_rate`` after the previous one; ``V[i]``
picks the clock (bulk edge or boundary channel) and its fractional remainder
is the uniform attached to the ring.  A loop returns as soon as the next event
lies beyond ``t_end`` without consuming it, so splitting a run into several
calls replays exactly the same events.
"""

import numpy as np
from numba import njit

KIND_BULK = 0
KIND_ALPHA = 1  # fill site 1
KIND_GAMMA = 2  # clear site 1
KIND_DELTA = 3  # fill site N
KIND_BETA = 4  # clear site N

STATUS_TIME = 0
STATUS_EXHAUSTED = 1
STATUS_COALESCED = 2
STATUS_BREACH = 3
STATUS_ESCAPED = 4
STATUS_EXITS = 5
STATUS_CLEARED = 6
STATUS_SPLIT = 7

# integer option slots for advance_binary
OPT_ORDER = 0  # 0 none, 1 componentwise, 2 height; replica 0 must dominate replica 1
OPT_COALESCE = 1  # 1: stop when replicas 0 and 1 agree, 2: stop when they differ
OPT_LEFT_TAIL = 2  # -1 or the value every site near the left window edge must keep
OPT_RIGHT_TAIL = 3
OPT_ESCAPE = 4  # stop when max(R, -L) exceeds this threshold (line windows), -1 off
OPT_ORIGIN = 5  # array index of site 0 on line windows

_ONE_MINUS = 1.0 - 2.0**-53


@njit(cache=True)
def decode_clock(v, n_bulk, total_rate, bcum, brate):
    """Map a uniform to (kind, bulk slot, attached uniform)."""
    x = v * total_rate
    if x < n_bulk:
        j = int(x)
        if j >= n_bulk:
            j = n_bulk - 1
        u = x - j
        return KIND_BULK, j, u
    y = x - n_bulk
    last = 0
    for k in range(1, 5):
        if brate[k] > 0.0:
            last = k
            if y < bcum[k]:
                u = (y - (bcum[k] - brate[k])) / brate[k]
                if u < 0.0:
                    u = 0.0
                if u > _ONE_MINUS:
                    u = _ONE_MINUS
                return k, -1, u
    return last, -1, _ONE_MINUS


@njit(cache=True)
def _clock_column(kind, j, n):
    if kind == KIND_BULK:
        return j + 1
    if kind <= KIND_GAMMA:
        return 0
    return n


@njit(cache=True)
def _near_edge_bad(state, r, idx, n, left_tail, right_tail):
    if left_tail >= 0 and idx <= 2 and state[r, idx] != left_tail:
        return True
    if right_tail >= 0 and idx >= n - 3 and state[r, idx] != right_tail:
        return True
    return False


@njit(cache=True)
def _height_violated(state):
    n = state.shape[1]
    s0 = 0
    s1 = 0
    for i in range(n):
        s0 += state[0, i]
        s1 += state[1, i]
        if s0 < s1:
            return True
    return False


@njit(cache=True)
def _escape_extent(state, origin):
    """max(R, -L) of replica 0 on a line window, in site coordinates."""
    n = state.shape[1]
    left = n
    for i in range(n):
        if state[0, i] == 1:
            left = i
            break
    right = -1
    for i in range(n - 1, -1, -1):
        if state[0, i] == 0:
            right = i
            break
    ext = -(1 << 40)
    if left < n:
        ext = origin - left
    if right >= 0 and right - origin > ext:
        ext = right - origin
    return ext


@njit(cache=True)
def advance_binary(state, pright, thresh, E, V, cursor, t_last, total_rate, n_bulk, bcum, brate,
                   t_end, cens_times, cens_mask, piece, entered, exited, opts, diffsite, diag):
    """Advance coupled 0/1 replicas (rows of ``state``).

    ``thresh[r, k]`` is the fraction of the boundary channel ``k`` that acts
    on replica ``r``.  ``diag[0]`` accumulates order violations and
    ``diag[1]`` holds the number of sites where replicas 0 and 1 differ.
    Returns (cursor, time of last event, status, censoring piece).
    """
    n_rep, n = state.shape
    inv_rate = 1.0 / total_rate
    order_mode = opts[OPT_ORDER]
    coalesce = opts[OPT_COALESCE]
    left_tail = opts[OPT_LEFT_TAIL]
    right_tail = opts[OPT_RIGHT_TAIL]
    escape = opts[OPT_ESCAPE]
    origin = opts[OPT_ORIGIN]
    n_times = cens_times.shape[0]
    track_diff = coalesce != 0 or order_mode == 1
    i = cursor
    t = t_last
    while i < E.shape[0]:
        tn = t + E[i] * inv_rate
        if tn > t_end:
            return i, t, STATUS_TIME, piece
        t = tn
        kind, j, u = decode_clock(V[i], n_bulk, total_rate, bcum, brate)
        i += 1
        while piece < n_times and cens_times[piece] <= t:
            piece += 1
        if cens_mask[piece, _clock_column(kind, j, n)]:
            continue
        changed = False
        a_site = -1
        b_site = -1
        if kind == KIND_BULK:
            a_site = j
            b_site = j + 1
            for r in range(n_rep):
                x = state[r, j]
                y = state[r, j + 1]
                if x == 1 and y == 0:
                    if u <= pright[r]:
                        state[r, j] = 0
                        state[r, j + 1] = 1
                        changed = True
                elif x == 0 and y == 1:
                    if u > pright[r]:
                        state[r, j] = 1
                        state[r, j + 1] = 0
                        changed = True
        else:
            site = 0 if kind <= KIND_GAMMA else n - 1
            val = 1 if (kind == KIND_ALPHA or kind == KIND_DELTA) else 0
            a_site = site
            for r in range(n_rep):
                if u < thresh[r, kind] and state[r, site] != val:
                    state[r, site] = val
                    changed = True
                    if kind <= KIND_GAMMA:
                        if val == 1:
                            entered[r] += 1
                        else:
                            exited[r] += 1
        if not changed:
            continue
        if track_diff and n_rep >= 2:
            for s in (a_site, b_site):
                if s < 0:
                    continue
                d = 1 if state[0, s] != state[1, s] else 0
                diag[1] += d - diffsite[s]
                diffsite[s] = d
                if order_mode == 1 and state[0, s] < state[1, s]:
                    diag[0] += 1
        if order_mode == 2 and n_rep >= 2:
            if _height_violated(state):
                diag[0] += 1
        if left_tail >= 0 or right_tail >= 0:
            for r in range(n_rep):
                if _near_edge_bad(state, r, a_site, n, left_tail, right_tail):
                    return i, t, STATUS_BREACH, piece
                if b_site >= 0 and _near_edge_bad(state, r, b_site, n, left_tail, right_tail):
                    return i, t, STATUS_BREACH, piece
        if coalesce == 1 and diag[1] == 0:
            return i, t, STATUS_COALESCED, piece
        if coalesce == 2 and diag[1] > 0:
            return i, t, STATUS_SPLIT, piece
        if escape >= 0 and _escape_extent(state, origin) > escape:
            return i, t, STATUS_ESCAPED, piece
    return i, t, STATUS_EXHAUSTED, piece


# integer option slots for advance_labels
LOPT_STOP_CLEARED = 0  # stop when no label of count_mask remains
LOPT_EXIT_LIMIT = 1  # stop when left exits of stop_mask labels exceed this, -1 off
LOPT_LEFT_TAIL = 2
LOPT_RIGHT_TAIL = 3

N_LABELS = 8


@njit(cache=True)
def advance_labels(labels, p, edge_table, bthr, bmap, nlev, E, V, cursor, t_last, total_rate, n_bulk,
                   bcum, brate, t_end, cens_times, cens_mask, piece, left_in, left_out, right_in,
                   right_out, exit_log, log_count, count_mask, counter, stop_mask, opts):
    """Advance one multi-species configuration.

    ``edge_table[l, r, d]`` gives the new (left, right) labels packed as
    ``8*left + right`` for direction ``d`` (0 when U <= p).  Boundary channel
    ``k`` acts through the first level ``l`` with ``U < bthr[k, l]``, mapping
    label ``x`` to ``bmap[k, l, x]``.  ``counter[0]`` tracks the number of
    sites whose label is in ``count_mask``; labels replaced at site 1 are
    appended to ``exit_log``.
    """
    n = labels.shape[0]
    inv_rate = 1.0 / total_rate
    stop_cleared = opts[LOPT_STOP_CLEARED]
    exit_limit = opts[LOPT_EXIT_LIMIT]
    left_tail = opts[LOPT_LEFT_TAIL]
    right_tail = opts[LOPT_RIGHT_TAIL]
    n_times = cens_times.shape[0]
    i = cursor
    t = t_last
    while i < E.shape[0]:
        tn = t + E[i] * inv_rate
        if tn > t_end:
            return i, t, STATUS_TIME, piece
        t = tn
        kind, j, u = decode_clock(V[i], n_bulk, total_rate, bcum, brate)
        i += 1
        while piece < n_times and cens_times[piece] <= t:
            piece += 1
        if cens_mask[piece, _clock_column(kind, j, n)]:
            continue
        if kind == KIND_BULK:
            x = labels[j]
            y = labels[j + 1]
            if x == y:
                continue
            d = 0 if u <= p else 1
            packed = edge_table[x, y, d]
            nx = packed // N_LABELS
            ny = packed % N_LABELS
            if nx == x and ny == y:
                continue
            labels[j] = nx
            labels[j + 1] = ny
            if count_mask[x]:
                counter[0] -= 1
            if count_mask[y]:
                counter[0] -= 1
            if count_mask[nx]:
                counter[0] += 1
            if count_mask[ny]:
                counter[0] += 1
            if left_tail >= 0 or right_tail >= 0:
                for s in (j, j + 1):
                    if left_tail >= 0 and s <= 2 and labels[s] != left_tail:
                        return i, t, STATUS_BREACH, piece
                    if right_tail >= 0 and s >= n - 3 and labels[s] != right_tail:
                        return i, t, STATUS_BREACH, piece
        else:
            site = 0 if kind <= KIND_GAMMA else n - 1
            lev = 0
            while lev < nlev[kind] - 1 and u >= bthr[kind, lev]:
                lev += 1
            if u >= bthr[kind, lev]:
                continue
            old = labels[site]
            new = bmap[kind, lev, old]
            if new == old:
                continue
            labels[site] = new
            if count_mask[old]:
                counter[0] -= 1
            if count_mask[new]:
                counter[0] += 1
            if kind <= KIND_GAMMA:
                left_out[old] += 1
                left_in[new] += 1
                if log_count[0] < exit_log.shape[0]:
                    exit_log[log_count[0]] = old
                log_count[0] += 1
            else:
                right_out[old] += 1
                right_in[new] += 1
        if stop_cleared != 0 and counter[0] == 0:
            return i, t, STATUS_CLEARED, piece
        if exit_limit >= 0:
            total = 0
            for lab in range(N_LABELS):
                if stop_mask[lab]:
                    total += left_out[lab]
            if total > exit_limit:
                return i, t, STATUS_EXITS, piece
    return i, t, STATUS_EXHAUSTED, piece


@njit(cache=True)
def fill_counter(labels, count_mask):
    c = 0
    for x in labels:
        if count_mask[x]:
            c += 1
    return c


def empty_schedule(n_columns):
    return np.zeros(0, dtype=np.float64), np.zeros((1, n_columns), dtype=np.bool_)
