"""Numba kernel for exact polyhedral geodesics by window propagation.

Windows are intervals on directed halfedges. A window on halfedge ``h``
(tail ``a``, head ``b``) lives in the planar frame of ``h``: ``a`` at the
origin, ``b`` at ``(L, 0)`` and the third vertex ``c`` of face ``h // 3`` in
the upper half plane. The unfolded source image sits at ``(sx, sy)`` with
``sy <= 0``; the distance to a point ``x`` of the window is
``sigma + |image - x|``. Windows are processed in order of their minimum
distance.

A window loses a piece of its interval only where some other realisable
path is strictly shorter: a vertex label continued along the edge, or
another window on the same halfedge. The optimal path to every point
therefore survives, and the vertex labels come out exact.

Every window and vertex label also carries its *root*, the source or the
saddle/boundary pseudosource its path last bent around. A vertex whose
final label has ``root == source`` is reached by a direct geodesic.

``mesh`` arguments are the tuple
``(he_src, he_dst, he_opp, he_len, he_third, v_indptr, v_he)``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PRUNE_RTOL = 1e-12
VISIBILITY_RTOL = 1e-10
MIN_WIDTH_RTOL = 1e-12
# overlap kept on both sides of a crossover between two windows
SPLIT_RTOL = 1e-10

# wf columns
B0, B1, SX, SY, SIGMA = 0, 1, 2, 3, 4
# wi columns
HE, ROOT, NEXT, ALIVE = 0, 1, 2, 3
# counters
NW, HSIZE, NTV, NTH = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def _grown(a, need):
    """``a`` with at least ``need`` rows, doubling when it has to grow."""
    if need <= a.shape[0]:
        return a
    cap = max(need, 2 * a.shape[0])
    out = np.empty((cap, a.shape[1]), dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


# ----------------------------------------------------------------------
# binary heap of (key, id) rows, ordered by key then id


@njit(cache=True, nogil=True)
def _before(k1, i1, k2, i2):
    return k1 < k2 or (k1 == k2 and i1 < i2)


@njit(cache=True, nogil=True)
def _hpush(heap, cnt, key, ident):
    i = cnt[HSIZE]
    cnt[HSIZE] = i + 1
    while i > 0:
        p = (i - 1) >> 1
        if _before(key, ident, heap[p, 0], heap[p, 1]):
            heap[i, 0] = heap[p, 0]
            heap[i, 1] = heap[p, 1]
            i = p
        else:
            break
    heap[i, 0] = key
    heap[i, 1] = ident


@njit(cache=True, nogil=True)
def _hpop(heap, cnt):
    key = heap[0, 0]
    ident = heap[0, 1]
    size = cnt[HSIZE] - 1
    cnt[HSIZE] = size
    if size > 0:
        lk = heap[size, 0]
        li = heap[size, 1]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= size:
                break
            if c + 1 < size and _before(heap[c + 1, 0], heap[c + 1, 1], heap[c, 0], heap[c, 1]):
                c += 1
            if _before(heap[c, 0], heap[c, 1], lk, li):
                heap[i, 0] = heap[c, 0]
                heap[i, 1] = heap[c, 1]
                i = c
            else:
                break
        heap[i, 0] = lk
        heap[i, 1] = li
    return key, int(ident)


@njit(cache=True, nogil=True)
def _segment_distance(b0, b1, sx, sy):
    if sx < b0:
        return math.hypot(b0 - sx, sy)
    if sx > b1:
        return math.hypot(sx - b1, sy)
    return abs(sy)


@njit(cache=True, nogil=True)
def _trim(b0, b1, L, sx, sy, sigma, da, db):
    """Cut the ends of [b0, b1] reached more cheaply along the edge from a or b.

    ``da + x`` and ``db + (L - x)`` are path lengths through the edge's end
    vertices; their difference to ``sigma + |image - x|`` is monotone in
    ``x``, so each dominated part is one end segment found in closed form.
    """
    tol = PRUNE_RTOL * (sigma + L + abs(sx) + abs(sy))
    if da < np.inf:
        D = da - sigma + tol
        if sx + D <= 0.0:
            return b0, -1.0
        xa = (sx * sx + sy * sy - D * D) / (2.0 * (sx + D))
        if xa > b0:
            b0 = xa
    if db < np.inf:
        D = db - sigma + tol
        rx = L - sx
        if rx + D <= 0.0:
            return b0, -1.0
        yb = (rx * rx + sy * sy - D * D) / (2.0 * (rx + D))
        if L - yb < b1:
            b1 = L - yb
    return b0, b1


@njit(cache=True, nogil=True)
def _dominated(h, b0, b1, sx, sy, sigma, mesh, dist):
    """True when the label of the face's third vertex beats every point of the window."""
    he_dst = mesh[1]
    he_third = mesh[4]
    c = he_dst[3 * (h // 3) + (h % 3 + 1) % 3]
    if dist[c] == np.inf:
        return False
    cx = he_third[h, 0]
    cy = he_third[h, 1]
    reach_c = max(math.hypot(cx - b0, cy), math.hypot(cx - b1, cy))
    near = sigma + _segment_distance(b0, b1, sx, sy)
    return dist[c] + reach_c < near - PRUNE_RTOL * near


@njit(cache=True, nogil=True)
def _polish(x, ax, ay, sa, bx, by, sb, width):
    """One Newton step on the unsquared crossing equation."""
    da = math.hypot(x - ax, ay)
    db = math.hypot(x - bx, by)
    if da > 0.0 and db > 0.0:
        dg = (x - ax) / da - (x - bx) / db
        if dg != 0.0:
            step = (sa + da - sb - db) / dg
            if abs(step) < 0.1 * width:
                x -= step
    return x


@njit(cache=True, nogil=True)
def _crossings(lo, hi, ax, ay, sa, bx, by, sb):
    """Points in (lo, hi) where ``sa + |A - x|`` equals ``sb + |B - x|``.

    Returns ``(r0, r1, k)``: the first ``k`` (at most two) of ``r0 <= r1``
    are valid.
    """
    alpha = sb - sa
    beta = 2.0 * (bx - ax)
    gamma = ax * ax + ay * ay - bx * bx - by * by
    scale = abs(hi) + abs(lo) + abs(sa) + abs(sb) + abs(ax) + abs(bx) + abs(ay) + abs(by)
    if abs(alpha) <= 1e-14 * scale:
        if abs(beta) > 1e-14 * scale:
            x = -gamma / beta
            if lo < x < hi:
                return x, x, 1
        return 0.0, 0.0, 0
    a2 = alpha * alpha
    qa = 4.0 * a2 - beta * beta
    qb = -8.0 * a2 * ax - 2.0 * beta * (a2 + gamma)
    qc = 4.0 * a2 * (ax * ax + ay * ay) - (a2 + gamma) ** 2
    c0 = 0.0
    c1 = 0.0
    nc = 0
    if abs(qa) <= 1e-14 * (abs(qb) / (scale + 1e-300) + abs(qc) / (scale * scale + 1e-300)):
        if qb != 0.0:
            c0 = -qc / qb
            nc = 1
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (qb + sq) if qb >= 0.0 else -0.5 * (qb - sq)
            if q != 0.0:
                c0 = q / qa
                c1 = qc / q
                nc = 2
            else:
                c0 = -qb / (2.0 * qa)
                nc = 1
    width = hi - lo
    r0 = 0.0
    r1 = 0.0
    k = 0
    if nc >= 1:
        x = _polish(c0, ax, ay, sa, bx, by, sb, width)
        if lo < x < hi:
            r0 = x
            k = 1
    if nc == 2:
        x = _polish(c1, ax, ay, sa, bx, by, sb, width)
        if lo < x < hi:
            if k == 0:
                r0 = x
                k = 1
            else:
                if x < r0:
                    r1 = r0
                    r0 = x
                else:
                    r1 = x
                k = 2
    return r0, r1, k


@njit(cache=True, nogil=True)
def _sign(m, xsx, xsy, xs, ysx, ysy, ys):
    """+1 where y is strictly shorter at ``m``, -1 where x is, 0 on a tie."""
    fx = xs + math.hypot(m - xsx, xsy)
    fy = ys + math.hypot(m - ysx, ysy)
    tol = PRUNE_RTOL * (fx + fy)
    if fx - fy > tol:
        return 1
    if fy - fx > tol:
        return -1
    return 0


@njit(cache=True, nogil=True)
def _cut_by(xb0, xb1, xsx, xsy, xs, y, wf, wi, L):
    """Mutually trim window X (given by value) and stored window ``y`` on the same halfedge.

    Returns X's new interval; ``y`` is trimmed in place and may die.
    """
    yb0 = wf[y, B0]
    yb1 = wf[y, B1]
    lo = max(xb0, yb0)
    hi = min(xb1, yb1)
    if hi - lo <= MIN_WIDTH_RTOL * L:
        return xb0, xb1
    ysx = wf[y, SX]
    ysy = wf[y, SY]
    ys = wf[y, SIGMA]
    r0, r1, nr = _crossings(lo, hi, xsx, xsy, xs, ysx, ysy, ys)
    if nr == 0:
        cuts = (lo, hi, hi, hi)
    elif nr == 1:
        cuts = (lo, r0, hi, hi)
    else:
        cuts = (lo, r0, r1, hi)
    npieces = nr + 1
    s0 = _sign(0.5 * (cuts[0] + cuts[1]), xsx, xsy, xs, ysx, ysy, ys)
    s1 = _sign(0.5 * (cuts[1] + cuts[2]), xsx, xsy, xs, ysx, ysy, ys) if nr >= 1 else 0
    s2 = _sign(0.5 * (cuts[2] + cuts[3]), xsx, xsy, xs, ysx, ysy, ys) if nr == 2 else 0
    signs = (s0, s1, s2)
    margin = SPLIT_RTOL * L

    # X loses its leading / trailing pieces where y is shorter
    nx0, nx1 = xb0, xb1
    if lo == xb0:
        j = 0
        while j < npieces and signs[j] == 1:
            j += 1
        if j == npieces and hi == xb1:
            return 0.0, -1.0
        if j > 0:
            nx0 = cuts[j] - margin
    if hi == xb1:
        j = npieces - 1
        while j >= 0 and signs[j] == 1:
            j -= 1
        if j < npieces - 1:
            nx1 = cuts[j + 1] + margin

    # and y loses its pieces where X is shorter
    if lo == yb0:
        j = 0
        while j < npieces and signs[j] == -1:
            j += 1
        if j == npieces and hi == yb1:
            wi[y, ALIVE] = 0
            return nx0, nx1
        if j > 0:
            wf[y, B0] = cuts[j] - margin
    if hi == yb1:
        j = npieces - 1
        while j >= 0 and signs[j] == -1:
            j -= 1
        if j < npieces - 1:
            wf[y, B1] = cuts[j + 1] + margin
    return nx0, nx1


@njit(cache=True, nogil=True)
def _relax(v, d, r, sc, heap, cnt):
    dist = sc[0]
    if d < dist[v]:
        if dist[v] == np.inf:
            sc[4][cnt[NTV]] = v
            cnt[NTV] += 1
        dist[v] = d
        sc[1][v] = r
        _hpush(heap, cnt, d, -(v + 1))


@njit(cache=True, nogil=True)
def _push_window(g, b0, b1, sx, sy, sigma, r, wf, wi, cnt, sc, heap, mesh):
    """Store a window on halfedge ``g`` unless nothing of it survives pruning."""
    he_src = mesh[0]
    he_dst = mesh[1]
    dist = sc[0]
    head = sc[3]
    L = mesh[3][g]
    if b0 < 0.0:
        b0 = 0.0
    if b1 > L:
        b1 = L
    b0, b1 = _trim(b0, b1, L, sx, sy, sigma, dist[he_src[g]], dist[he_dst[g]])
    if b1 - b0 <= MIN_WIDTH_RTOL * L:
        return
    if _dominated(g, b0, b1, sx, sy, sigma, mesh, dist):
        return

    prev = -1
    y = head[g]
    while y >= 0:
        nxt = wi[y, NEXT]
        if wi[y, ALIVE] == 0:
            if prev < 0:
                head[g] = nxt
            else:
                wi[prev, NEXT] = nxt
            y = nxt
            continue
        b0, b1 = _cut_by(b0, b1, sx, sy, sigma, y, wf, wi, L)
        if b1 - b0 <= MIN_WIDTH_RTOL * L:
            return
        if wf[y, B1] - wf[y, B0] <= MIN_WIDTH_RTOL * L:
            wi[y, ALIVE] = 0
        prev = y
        y = nxt

    nw = cnt[NW]
    cnt[NW] = nw + 1
    wf[nw, B0] = b0
    wf[nw, B1] = b1
    wf[nw, SX] = sx
    wf[nw, SY] = sy
    wf[nw, SIGMA] = sigma
    wi[nw, HE] = g
    wi[nw, ROOT] = r
    wi[nw, NEXT] = head[g]
    wi[nw, ALIVE] = 1
    if head[g] < 0:
        sc[5][cnt[NTH]] = g
        cnt[NTH] += 1
    head[g] = nw
    _hpush(heap, cnt, sigma + _segment_distance(b0, b1, sx, sy), nw)


@njit(cache=True, nogil=True)
def _child(g, px, py, qx, qy, ix, iy, sigma, r, ux, uy, wx, wy, wf, wi, cnt, sc, heap, mesh):
    """Carry the part [P, Q] of edge ``g`` of the current face into the neighbour face.

    ``(ux, uy)`` and ``(wx, wy)`` are the tail and head of ``g`` in the current
    frame; the opposite halfedge runs w -> u with the current face below it.
    """
    go = mesh[2][g]
    if go < 0:
        return
    L = mesh[3][g]
    dx = (ux - wx) / L
    dy = (uy - wy) / L
    x0 = (px - wx) * dx + (py - wy) * dy
    x1 = (qx - wx) * dx + (qy - wy) * dy
    nsx = (ix - wx) * dx + (iy - wy) * dy
    nsy = dx * (iy - wy) - dy * (ix - wx)
    if nsy > 0.0:
        nsy = 0.0
    if x0 > x1:
        x0, x1 = x1, x0
    _push_window(go, x0, x1, nsx, nsy, sigma, r, wf, wi, cnt, sc, heap, mesh)


@njit(cache=True, nogil=True)
def _emit_pseudosource(v, sigma, wf, wi, cnt, sc, heap, mesh):
    he_dst = mesh[1]
    he_opp = mesh[2]
    he_len = mesh[3]
    he_third = mesh[4]
    v_indptr = mesh[5]
    v_he = mesh[6]
    for idx in range(v_indptr[v], v_indptr[v + 1]):
        h = v_he[idx]
        base = 3 * (h // 3)
        hn = base + (h % 3 + 1) % 3  # edge a -> b opposite v in this face
        hp = base + (h % 3 + 2) % 3  # b -> v
        _relax(he_dst[h], sigma + he_len[h], v, sc, heap, cnt)
        _relax(he_dst[hn], sigma + he_len[hp], v, sc, heap, cnt)
        go = he_opp[hn]
        if go < 0:
            continue
        L = he_len[hn]
        # v in the frame of the reversed edge b -> a
        sx = L - he_third[hn, 0]
        sy = -he_third[hn, 1]
        _push_window(go, 0.0, L, sx, sy, sigma, v, wf, wi, cnt, sc, heap, mesh)


@njit(cache=True, nogil=True)
def _propagate_window(w, wf, wi, cnt, sc, heap, mesh):
    if wi[w, ALIVE] == 0:
        return
    he_src = mesh[0]
    he_dst = mesh[1]
    he_len = mesh[3]
    he_third = mesh[4]
    dist = sc[0]
    b0 = wf[w, B0]
    b1 = wf[w, B1]
    sx = wf[w, SX]
    sy = wf[w, SY]
    sigma = wf[w, SIGMA]
    h = wi[w, HE]
    r = wi[w, ROOT]
    L = he_len[h]
    b0, b1 = _trim(b0, b1, L, sx, sy, sigma, dist[he_src[h]], dist[he_dst[h]])
    if b1 - b0 <= MIN_WIDTH_RTOL * L or _dominated(h, b0, b1, sx, sy, sigma, mesh, dist):
        wi[w, ALIVE] = 0
        return
    wf[w, B0] = b0
    wf[w, B1] = b1
    cx = he_third[h, 0]
    cy = he_third[h, 1]
    base = 3 * (h // 3)
    hn = base + (h % 3 + 1) % 3  # b -> c
    hp = base + (h % 3 + 2) % 3  # c -> a
    c = he_dst[hn]

    # where the ray from the image through c crosses the window's edge
    xc = sx + (cx - sx) * (-sy) / (cy - sy)
    slack = VISIBILITY_RTOL * L
    if b0 - slack <= xc <= b1 + slack:
        _relax(c, sigma + math.hypot(cx - sx, cy - sy), r, sc, heap, cnt)

    # part of the window seen through edge a-c
    if xc > b0 + MIN_WIDTH_RTOL * L:
        hi = min(b1, xc)
        if b0 <= 0.0:
            px, py = 0.0, 0.0
        else:
            dx, dy = b0 - sx, -sy
            t = (sx * dy - sy * dx) / (cx * dy - cy * dx)
            t = min(max(t, 0.0), 1.0)
            px, py = t * cx, t * cy
        if hi >= xc:
            qx, qy = cx, cy
        else:
            dx, dy = hi - sx, -sy
            t = (sx * dy - sy * dx) / (cx * dy - cy * dx)
            t = min(max(t, 0.0), 1.0)
            qx, qy = t * cx, t * cy
        _child(hp, px, py, qx, qy, sx, sy, sigma, r, cx, cy, 0.0, 0.0, wf, wi, cnt, sc, heap,
               mesh)

    # part seen through edge c-b
    if xc < b1 - MIN_WIDTH_RTOL * L:
        lo = max(b0, xc)
        ex, ey = L - cx, -cy
        if lo <= xc:
            px, py = cx, cy
        else:
            dx, dy = lo - sx, -sy
            t = ((sx - cx) * dy - (sy - cy) * dx) / (ex * dy - ey * dx)
            t = min(max(t, 0.0), 1.0)
            px, py = cx + t * ex, cy + t * ey
        if b1 >= L:
            qx, qy = L, 0.0
        else:
            dx, dy = b1 - sx, -sy
            t = ((sx - cx) * dy - (sy - cy) * dx) / (ex * dy - ey * dx)
            t = min(max(t, 0.0), 1.0)
            qx, qy = cx + t * ex, cy + t * ey
        _child(hn, px, py, qx, qy, sx, sy, sigma, r, L, 0.0, cx, cy, wf, wi, cnt, sc, heap, mesh)


@njit(cache=True, nogil=True)
def new_scratch(n, nh):
    """Per-worker buffers: dist, root, final, head, touched vertices, touched halfedges."""
    return (np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros(n, dtype=np.bool_),
            np.full(nh, -1, dtype=np.int64), np.empty(n, dtype=np.int64),
            np.empty(nh, dtype=np.int64))


@njit(cache=True, nogil=True)
def _reset(sc, cnt):
    dist, root, final, head, tv, th = sc
    for i in range(cnt[NTV]):
        v = tv[i]
        dist[v] = np.inf
        root[v] = -1
        final[v] = False
    for i in range(cnt[NTH]):
        head[th[i]] = -1
    cnt[:] = 0


@njit(cache=True, nogil=True)
def _run(source, is_pseudo, is_saddle, max_direct, max_direct_saddle, mesh, sc, direct):
    """Propagate from ``source`` into the scratch buffers ``sc`` (which must be clean).

    Returns ``(n_direct, n_windows, cnt)``; the caller reads ``sc`` and must
    call ``_reset(sc, cnt)`` afterwards.
    """
    v_indptr = mesh[5]
    max_deg = 0
    for v in range(v_indptr.shape[0] - 1):
        max_deg = max(max_deg, v_indptr[v + 1] - v_indptr[v])
    # most pushes a single event can cause
    burst = 3 * max_deg + 3
    dist = sc[0]
    root = sc[1]
    final = sc[2]
    cnt = np.zeros(4, dtype=np.int64)
    wf = np.empty((1024, 5))
    wi = np.empty((1024, 4), dtype=np.int64)
    heap = np.empty((2048, 2))
    n_direct = 0
    n_saddle = 0

    _relax(source, 0.0, source, sc, heap, cnt)
    while cnt[HSIZE] > 0:
        wf = _grown(wf, cnt[NW] + burst)
        wi = _grown(wi, cnt[NW] + burst)
        heap = _grown(heap, cnt[HSIZE] + burst)
        key, eid = _hpop(heap, cnt)
        if eid < 0:
            v = -eid - 1
            if final[v] or key > dist[v]:
                continue
            final[v] = True
            if v != source and root[v] == source:
                direct[n_direct] = v
                n_direct += 1
                if is_saddle[v]:
                    n_saddle += 1
                if max_direct >= 0 and (n_direct >= max_direct or n_saddle >= max_direct_saddle):
                    break
            if v == source or is_pseudo[v]:
                _emit_pseudosource(v, dist[v], wf, wi, cnt, sc, heap, mesh)
        else:
            _propagate_window(eid, wf, wi, cnt, sc, heap, mesh)
    return n_direct, cnt[NW], cnt


@njit(cache=True, nogil=True)
def propagate(source, is_pseudo, is_saddle, max_direct, max_direct_saddle, mesh):
    """Run window propagation from ``source``.

    With ``max_direct < 0`` the whole mesh is covered. Otherwise propagation
    stops once ``max_direct`` direct vertices, or ``max_direct_saddle`` direct
    saddles, have been finalised.

    Returns ``(dist, root, direct, n_direct, n_windows)`` where
    ``direct[:n_direct]`` lists the finalised direct vertices (source
    excluded) by increasing distance. Labels of vertices not finalised
    before an early stop are upper bounds only.
    """
    n = mesh[5].shape[0] - 1
    sc = new_scratch(n, mesh[0].shape[0])
    direct = np.empty(n, dtype=np.int64)
    n_direct, nw, _ = _run(source, is_pseudo, is_saddle, max_direct, max_direct_saddle, mesh,
                           sc, direct)
    return sc[0], sc[1], direct, n_direct, nw


@njit(cache=True, nogil=True)
def all_distances(sources, is_pseudo, mesh, out):
    """Full single-source distances for each of ``sources`` into rows of ``out``."""
    n = mesh[5].shape[0] - 1
    sc = new_scratch(n, mesh[0].shape[0])
    direct = np.empty(n, dtype=np.int64)
    no_saddle = np.zeros(n, dtype=np.bool_)
    for i in range(sources.shape[0]):
        _, _, cnt = _run(sources[i], is_pseudo, no_saddle, -1, -1, mesh, sc, direct)
        out[i, :] = sc[0]
        _reset(sc, cnt)


@njit(cache=True, nogil=True)
def direct_neighbors_many(sources, is_pseudo, is_saddle, K, K_S, mesh, indptr_out):
    """Capped direct-neighbour lists for many sources, concatenated CSR-style."""
    n = mesh[5].shape[0] - 1
    sc = new_scratch(n, mesh[0].shape[0])
    direct = np.empty(n, dtype=np.int64)
    total = 0
    cap = sources.shape[0] * K
    nbr = np.empty(cap, dtype=np.int64)
    wgt = np.empty(cap)
    indptr_out[0] = 0
    for i in range(sources.shape[0]):
        cnt_direct, _, cnt = _run(sources[i], is_pseudo, is_saddle, K, K_S, mesh, sc, direct)
        for j in range(cnt_direct):
            nbr[total] = direct[j]
            wgt[total] = sc[0][direct[j]]
            total += 1
        indptr_out[i + 1] = total
        _reset(sc, cnt)
    return nbr[:total], wgt[:total]
