"""Compiled inner loops.  Everything here works on plain integer arrays.

Lattice points are int64 coordinate rows ``(p, k_1, ..., k_d)`` with the
torsion coordinate reduced mod ``m``.  IET generators are tabulated as
breakpoint coordinates, breakpoint floats and per-arc translations; order is
decided by floats, equality by coordinates.  A float comparison closer than
``eps`` is reported as uncertain and the caller redoes that trajectory
exactly.
"""

import numpy as np
from numba import njit

_EMPTY = np.int64(-1)
_FIB = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True)
def _slot(key, bits):
    return np.int64((np.uint64(key) * _FIB) >> np.uint64(64 - bits))


@njit(cache=True)
def _insert(table, used, nused, key, bits):
    """Insert key; returns (new_nused, was_new)."""
    mask = table.shape[0] - 1
    s = _slot(key, bits)
    while True:
        v = table[s]
        if v == _EMPTY:
            table[s] = key
            used[nused] = s
            return nused + 1, True
        if v == key:
            return nused, False
        s = (s + 1) & mask


@njit(cache=True)
def _encode(pos, m, shift, radix):
    key = np.int64(pos[0] % m)
    mul = np.int64(m)
    for i in range(1, pos.shape[0]):
        key += (pos[i] + shift) * mul
        mul *= radix
    return key


@njit(cache=True, nogil=True)
def lattice_walk_batch(steps, vecs, m, checkpoints, bits, shift):
    """Range and first return of abelian walks S_k = S_{k-1} + vecs[step_k].

    Returns sizes at checkpoints (B, C), return time (B,) with -1 for
    censored, and final positions (B, D).
    """
    B, n = steps.shape
    D = vecs.shape[1]
    C = checkpoints.shape[0]
    sizes = np.zeros((B, C), np.int64)
    ret = np.full(B, -1, np.int64)
    final = np.zeros((B, D), np.int64)
    table = np.full(1 << bits, _EMPTY, np.int64)
    used = np.empty(n + 2, np.int64)
    radix = np.int64(2 * shift + 1)
    pos = np.zeros(D, np.int64)
    for b in range(B):
        for i in range(D):
            pos[i] = 0
        nused = 0
        nused, _ = _insert(table, used, nused, _encode(pos, m, shift, radix), bits)
        count = 1
        c = 0
        while c < C and checkpoints[c] == 0:
            sizes[b, c] = 1
            c += 1
        for k in range(1, n + 1):
            g = steps[b, k - 1]
            zero = True
            for i in range(D):
                pos[i] += vecs[g, i]
            pos[0] = pos[0] % m
            for i in range(D):
                if pos[i] != 0:
                    zero = False
            if zero and ret[b] < 0:
                ret[b] = k
            nused, new = _insert(table, used, nused, _encode(pos, m, shift, radix), bits)
            if new:
                count += 1
            while c < C and checkpoints[c] == k:
                sizes[b, c] = count
                c += 1
        for i in range(D):
            final[b, i] = pos[i]
        for j in range(nused):
            table[used[j]] = _EMPTY
    return sizes, ret, final


@njit(cache=True, nogil=True)
def free_product_batch(steps, ngens, checkpoints, max_nodes):
    """Right walk on the free product of ``ngens`` involutions.

    Visited elements form a subtree of the Cayley tree; a node is new iff it
    had to be created.  Returns sizes and word lengths at checkpoints, and
    the first return time.
    """
    B, n = steps.shape
    C = checkpoints.shape[0]
    sizes = np.zeros((B, C), np.int64)
    lengths = np.zeros((B, C), np.int64)
    ret = np.full(B, -1, np.int64)
    child = np.full((max_nodes, ngens), _EMPTY, np.int64)
    parent = np.zeros(max_nodes, np.int64)
    last = np.zeros(max_nodes, np.int64)
    depth = np.zeros(max_nodes, np.int64)
    for b in range(B):
        nodes = 1
        cur = 0
        last[0] = -1
        c = 0
        while c < C and checkpoints[c] == 0:
            sizes[b, c] = 1
            c += 1
        for k in range(1, n + 1):
            s = steps[b, k - 1]
            if cur != 0 and last[cur] == s:
                cur = parent[cur]
            else:
                nxt = child[cur, s]
                if nxt == _EMPTY:
                    nxt = nodes
                    nodes += 1
                    child[cur, s] = nxt
                    parent[nxt] = cur
                    last[nxt] = s
                    depth[nxt] = depth[cur] + 1
                cur = nxt
            if cur == 0 and ret[b] < 0:
                ret[b] = k
            while c < C and checkpoints[c] == k:
                sizes[b, c] = nodes
                lengths[b, c] = depth[cur]
                c += 1
        for i in range(nodes):
            for j in range(ngens):
                child[i, j] = _EMPTY
    return sizes, lengths, ret


# ---------------------------------------------------------------------------
# IET tables
#
# A point travels with its float value in [0, 1).  Floats are moved by the
# per-arc float translation instead of being recomputed, which keeps the
# drift far below eps over any horizon the tables were built for.


def iet_args(t):
    """Positional table arguments shared by the IET kernels."""
    return (t["m"], t["theta"], t["base_val"], t["nbp"], t["bp_same"], t["bp_coord"],
            t["bp_val"], t["tr"], t["tr_val"], t["eps"])


@njit(cache=True)
def _value(x, m, theta, base_val):
    v = base_val + x[0] / m
    for i in range(theta.shape[0]):
        v += x[i + 1] * theta[i]
    return v - np.floor(v)


@njit(cache=True, inline="always")
def _find_arc(g, x, v, left, nbp, bp_same, bp_coord, bp_val, eps):
    """Arc index of x for generator g; status 1 flags an uncertain comparison."""
    r = nbp[g]
    if r == 0:
        return 0, 0
    idx = -1
    status = 0
    for j in range(r):
        d = v - bp_val[g, j]
        ad = abs(d)
        if ad < eps or 1.0 - ad < eps:
            eq = bp_same[g, j] != 0
            if eq:
                for i in range(x.shape[0]):
                    if bp_coord[g, j, i] != x[i]:
                        eq = False
                        break
            if eq:
                idx = j - 1 if left else j
                break
            status = 1
        if d > 0:
            idx = j
        else:
            break
    if idx < 0:
        idx = r - 1
    return idx, status


@njit(cache=True, inline="always")
def _step(g, x, v, left, m, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps):
    """Apply generator g to (x, v) in place; returns (new float, status)."""
    a, status = _find_arc(g, x, v, left, nbp, bp_same, bp_coord, bp_val, eps)
    for i in range(x.shape[0]):
        x[i] += tr[g, a, i]
    if x[0] >= m:
        x[0] -= m
    elif x[0] < 0:
        x[0] += m
    v += tr_val[g, a]
    return v - np.floor(v), status


@njit(cache=True, nogil=True)
def iet_orbit_batch(steps, inv, x0, checkpoints, m, theta, base_val, nbp, bp_same, bp_coord, bp_val, tr,
                    tr_val, eps):
    """Inverted orbit by explicit inverse prefix products (O(n^2) per trajectory).

    Point j is h_1^-1 ... h_j^-1 x0, applied right to left.  The return time
    uses the forward chain X_k = h_k X_{k-1}.
    """
    B, n = steps.shape
    D = x0.shape[0]
    C = checkpoints.shape[0]
    sizes = np.zeros((B, C), np.int64)
    ret = np.full(B, -1, np.int64)
    status = np.zeros(B, np.int64)
    pts = np.empty((n + 1, D), np.int64)
    cur = np.empty(D, np.int64)
    v0 = _value(x0, m, theta, base_val)
    for b in range(B):
        st = 0
        for i in range(D):
            pts[0, i] = x0[i]
        count = 1
        c = 0
        while c < C and checkpoints[c] == 0:
            sizes[b, c] = 1
            c += 1
        for j in range(1, n + 1):
            for i in range(D):
                cur[i] = x0[i]
            v = v0
            for r in range(j - 1, -1, -1):
                v, s1 = _step(inv[steps[b, r]], cur, v, False, m, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps)
                st |= s1
            new = True
            for q in range(count):
                same = True
                for i in range(D):
                    if pts[q, i] != cur[i]:
                        same = False
                        break
                if same:
                    new = False
                    break
            if new:
                for i in range(D):
                    pts[count, i] = cur[i]
                count += 1
            while c < C and checkpoints[c] == j:
                sizes[b, c] = count
                c += 1
        for i in range(D):
            cur[i] = x0[i]
        v = v0
        for k in range(n):
            v, s1 = _step(steps[b, k], cur, v, False, m, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps)
            st |= s1
            same = True
            for i in range(D):
                if cur[i] != x0[i]:
                    same = False
                    break
            if same:
                ret[b] = k + 1
                break
        status[b] = st
    return sizes, ret, status


@njit(cache=True, nogil=True)
def iet_forward_batch(steps, x0, m, theta, base_val, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps):
    """Final point of the forward chain X_k = h_k X_{k-1}."""
    B, n = steps.shape
    D = x0.shape[0]
    final = np.zeros((B, D), np.int64)
    status = np.zeros(B, np.int64)
    cur = np.empty(D, np.int64)
    v0 = _value(x0, m, theta, base_val)
    for b in range(B):
        st = 0
        for i in range(D):
            cur[i] = x0[i]
        v = v0
        for k in range(n):
            v, s1 = _step(steps[b, k], cur, v, False, m, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps)
            st |= s1
        for i in range(D):
            final[b, i] = cur[i]
        status[b] = st
    return final, status


@njit(cache=True, nogil=True)
def tau_probe_batch(steps, inv, points, checkpoints, supp_count, supp_coord,
                    m, theta, base_val, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps):
    """Track tau_{g_n}(x) for the right walk g_n = h_1 ... h_n.

    y_n = g_n^-1 x moves by y_n = h_n^-1 y_{n-1}; tau changes at x exactly
    when y_{n-1} lies in the support of tau_{h_n}.  Values at checkpoints are
    g~_n(y_n), replayed through the left-continuous companions.
    """
    B, n = steps.shape
    S, D = points.shape
    C = checkpoints.shape[0]
    last = np.zeros((B, S), np.int64)
    changes = np.zeros((B, S), np.int64)
    values = np.zeros((B, S, C, D), np.int64)
    status = np.zeros(B, np.int64)
    y = np.empty(D, np.int64)
    w = np.empty(D, np.int64)
    for b in range(B):
        st = 0
        for s in range(S):
            for i in range(D):
                y[i] = points[s, i]
            vy = _value(y, m, theta, base_val)
            c = 0
            while c < C and checkpoints[c] == 0:
                for i in range(D):
                    values[b, s, c, i] = points[s, i]
                c += 1
            for k in range(1, n + 1):
                h = steps[b, k - 1]
                for q in range(supp_count[h]):
                    same = True
                    for i in range(D):
                        if supp_coord[h, q, i] != y[i]:
                            same = False
                            break
                    if same:
                        last[b, s] = k
                        changes[b, s] += 1
                        break
                vy, s1 = _step(inv[h], y, vy, False, m, nbp, bp_same, bp_coord, bp_val, tr, tr_val, eps)
                st |= s1
                while c < C and checkpoints[c] == k:
                    for i in range(D):
                        w[i] = y[i]
                    vw = vy
                    for r in range(k - 1, -1, -1):
                        vw, s1 = _step(steps[b, r], w, vw, True, m, nbp, bp_same, bp_coord, bp_val, tr, tr_val,
                                       eps)
                        st |= s1
                    for i in range(D):
                        values[b, s, c, i] = w[i]
                    c += 1
        status[b] = st
    return last, changes, values, status


# ---------------------------------------------------------------------------
# colored line


@njit(cache=True, nogil=True)
def colored_marks_batch(codes, task, marks, col, fv, tv):
    """t_n at marked points for H-walk step codes.

    ``task`` rows are (trajectory, n, window offset, mark offset, mark count).
    Windows are flat: vertex q has f value fv[q], t value tv[q], left edge
    col[q - 1] and right edge col[q].  Step code u packs the first coin
    u % 2, the generator (u // 2) % 3 and the second coin u // 6.
    """
    out = np.zeros(marks.shape[0], np.int8)
    for j in range(task.shape[0]):
        b = task[j, 0]
        n = task[j, 1]
        off = task[j, 2]
        m0 = task[j, 3]
        for i in range(task[j, 4]):
            p = off + marks[m0 + i]
            v = 0
            for k in range(n):
                u = codes[b, k]
                if u % 2:
                    v ^= fv[p]
                h = (u // 2) % 3
                if col[p - 1] == h:
                    p -= 1
                elif col[p] == h:
                    p += 1
                if u // 6:
                    v ^= fv[p]
            out[m0 + i] = v ^ tv[p]
    return out
