"""Compiled tree growing and traversal kernels.

Both growers consume the random generator in exactly the same order
(feature draw, threshold draw per accepted candidate, one tie-break draw per
split), visit nodes depth-first with the left child first, and score
candidates from integer counts through :func:`gini_gain`. Given the same
generator state, the rectangle grower therefore builds the same tree as the
sample grower run on the materialized pairs.

Virtual features: index ``f < p_r`` reads ``Xr[row, f]``; ``f >= p_r``
reads ``Xc[col, f - p_r]``.
"""
import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def gini_gain(n, n_left, pos, pos_left):
    """Gini reduction (summed over outputs) from positive counts."""
    n_right = n - n_left
    g = 0.0
    g_left = 0.0
    g_right = 0.0
    for o in range(pos.shape[0]):
        q = pos[o] / n
        g += 2.0 * q * (1.0 - q)
        q = pos_left[o] / n_left
        g_left += 2.0 * q * (1.0 - q)
        q = (pos[o] - pos_left[o]) / n_right
        g_right += 2.0 * q * (1.0 - q)
    gain = g - (n_left / n) * g_left - (n_right / n) * g_right
    if gain > 0.0:
        return gain
    return 0.0


@njit(cache=True)
def _draw_index(u, m):
    j = int(u * m)
    if j >= m:
        j = m - 1
    return j


@njit(cache=True)
def _draw_threshold(lo, hi, u):
    t = lo + u * (hi - lo)
    if t <= lo or t >= hi:
        t = 0.5 * lo + 0.5 * hi
        if t <= lo or t >= hi:
            # lo and hi are adjacent doubles; x < hi still separates them
            t = hi
    return t


@njit(cache=True)
def _select(scores, n_cand, u):
    best = scores[0]
    for k in range(1, n_cand):
        if scores[k] > best:
            best = scores[k]
    n_ties = 0
    for k in range(n_cand):
        if scores[k] == best:
            n_ties += 1
    pick = _draw_index(u, n_ties)
    for k in range(n_cand):
        if scores[k] == best:
            if pick == 0:
                return k
            pick -= 1
    return 0


@njit(cache=True)
def _grow(feature, threshold, left, right, value, n_samples, gain):
    cap = feature.shape[0]
    new = 2 * cap
    f2 = np.full(new, LEAF, np.int64)
    t2 = np.zeros(new)
    l2 = np.full(new, LEAF, np.int64)
    r2 = np.full(new, LEAF, np.int64)
    v2 = np.zeros((new, value.shape[1]))
    s2 = np.zeros(new, np.int64)
    g2 = np.zeros(new)
    f2[:cap] = feature
    t2[:cap] = threshold
    l2[:cap] = left
    r2[:cap] = right
    v2[:cap] = value
    s2[:cap] = n_samples
    g2[:cap] = gain
    return f2, t2, l2, r2, v2, s2, g2


@njit(cache=True)
def _empty_tree(cap, n_out):
    return (
        np.full(cap, LEAF, np.int64),
        np.zeros(cap),
        np.full(cap, LEAF, np.int64),
        np.full(cap, LEAF, np.int64),
        np.zeros((cap, n_out)),
        np.zeros(cap, np.int64),
        np.zeros(cap),
    )


@njit(cache=True)
def _xval(Xr, Xc, pr, pc, p_r, s, f):
    if f < p_r:
        return Xr[pr[s], f]
    return Xc[pc[s], f - p_r]


@njit(cache=True)
def grow_sample_tree(Xr, Xc, pr, pc, Y, K, n_min, rng):
    """Grow one tree on an explicit list of samples.

    Sample ``s`` has virtual features read through ``pr[s]``/``pc[s]`` and
    labels ``Y[s, :]``. Returns the node arrays plus a stats vector
    ``[split evaluation reads, label reads, live sample records, peak stack]``.
    """
    n = pr.shape[0]
    n_out = Y.shape[1]
    p_r = Xr.shape[1]
    p = p_r + Xc.shape[1]
    samples = np.arange(n)
    feature, threshold, left, right, value, n_samples, gain = _empty_tree(16, n_out)
    n_nodes = 0
    pos = np.zeros(n_out, np.int64)
    pos_left = np.zeros(n_out, np.int64)
    pool = np.empty(p, np.int64)
    cand_f = np.empty(K, np.int64)
    cand_t = np.empty(K)
    cand_s = np.empty(K)
    evals = 0
    label_reads = 0
    peak_stack = 1
    stack = [(0, n, -1, 0)]
    while len(stack) > 0:
        start, end, parent, is_left = stack.pop()
        if n_nodes == feature.shape[0]:
            feature, threshold, left, right, value, n_samples, gain = _grow(
                feature, threshold, left, right, value, n_samples, gain
            )
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node
        m_node = end - start
        pos[:] = 0
        for i in range(start, end):
            s = samples[i]
            for o in range(n_out):
                pos[o] += Y[s, o]
        label_reads += m_node * n_out
        constant = True
        for o in range(n_out):
            value[node, o] = pos[o] / m_node
            if pos[o] != 0 and pos[o] != m_node:
                constant = False
        n_samples[node] = m_node
        if m_node < 2 * n_min or constant:
            continue

        for j in range(p):
            pool[j] = j
        m = p
        n_cand = 0
        while n_cand < K and m > 0:
            j = _draw_index(rng.random(), m)
            f = pool[j]
            pool[j] = pool[m - 1]
            pool[m - 1] = f
            m -= 1
            lo = np.inf
            hi = -np.inf
            for i in range(start, end):
                x = _xval(Xr, Xc, pr, pc, p_r, samples[i], f)
                if x < lo:
                    lo = x
                if x > hi:
                    hi = x
            evals += m_node
            if not lo < hi:
                continue
            t = _draw_threshold(lo, hi, rng.random())
            n_left = 0
            pos_left[:] = 0
            for i in range(start, end):
                s = samples[i]
                if _xval(Xr, Xc, pr, pc, p_r, s, f) < t:
                    n_left += 1
                    for o in range(n_out):
                        pos_left[o] += Y[s, o]
            evals += m_node
            label_reads += n_left * n_out
            cand_f[n_cand] = f
            cand_t[n_cand] = t
            cand_s[n_cand] = gini_gain(m_node, n_left, pos, pos_left)
            n_cand += 1
        if n_cand == 0:
            continue
        k = _select(cand_s, n_cand, rng.random())
        f = cand_f[k]
        t = cand_t[k]
        i = start
        jj = end - 1
        while i <= jj:
            if _xval(Xr, Xc, pr, pc, p_r, samples[i], f) < t:
                i += 1
            else:
                tmp = samples[i]
                samples[i] = samples[jj]
                samples[jj] = tmp
                jj -= 1
        mid = i
        feature[node] = f
        threshold[node] = t
        gain[node] = cand_s[k]
        stack.append((mid, end, node, 0))
        stack.append((start, mid, node, 1))
        if len(stack) > peak_stack:
            peak_stack = len(stack)
    stats = np.array([evals, label_reads, n, peak_stack], np.int64)
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        n_samples[:n_nodes].copy(),
        gain[:n_nodes].copy(),
        stats,
    )


@njit(cache=True)
def _recount(Y, prow, pcol, rs, re, cs, ce, rowcnt, colcnt):
    for i in range(rs, re):
        rowcnt[i] = 0
    for j in range(cs, ce):
        colcnt[j] = 0
    for i in range(rs, re):
        r = prow[i]
        for j in range(cs, ce):
            v = Y[r, pcol[j]]
            rowcnt[i] += v
            colcnt[j] += v


@njit(cache=True)
def grow_rect_tree(Xr, Xc, row_feat, col_feat, Y, K, n_min, rng, check):
    """Grow one tree over all pairs of a complete label matrix, lazily.

    ``Y`` is the ``(R, C)`` label matrix over the training rows/cols;
    ``row_feat[i]``/``col_feat[j]`` locate their feature vectors. A tree node
    is a rectangle (row segment x col segment of two permutation arrays)
    with per-row positive counts over its columns and per-column counts over
    its rows. No per-pair record is ever stored.

    The child processed next inherits counts updated in place (moved rows'
    or columns' contributions subtracted); the pending sibling recounts when
    popped. With ``check`` every inherited state is verified by a full
    recount.
    """
    R = Y.shape[0]
    C = Y.shape[1]
    p_r = Xr.shape[1]
    p = p_r + Xc.shape[1]
    prow = np.arange(R)
    pcol = np.arange(C)
    rowcnt = np.zeros(R, np.int64)
    colcnt = np.zeros(C, np.int64)
    chk_r = np.zeros(R, np.int64)
    chk_c = np.zeros(C, np.int64)
    feature, threshold, left, right, value, n_samples, gain = _empty_tree(16, 1)
    n_nodes = 0
    pos = np.zeros(1, np.int64)
    pos_left = np.zeros(1, np.int64)
    pool = np.empty(p, np.int64)
    cand_f = np.empty(K, np.int64)
    cand_t = np.empty(K)
    cand_s = np.empty(K)
    evals = 0
    label_reads = 0
    peak_stack = 1
    stack = [(0, R, 0, C, -1, 0, 0)]
    while len(stack) > 0:
        rs, re, cs, ce, parent, is_left, carry = stack.pop()
        if n_nodes == feature.shape[0]:
            feature, threshold, left, right, value, n_samples, gain = _grow(
                feature, threshold, left, right, value, n_samples, gain
            )
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node
        nr = re - rs
        nc = ce - cs
        m_node = nr * nc
        if carry == 0:
            _recount(Y, prow, pcol, rs, re, cs, ce, rowcnt, colcnt)
            label_reads += m_node
        elif check:
            _recount(Y, prow, pcol, rs, re, cs, ce, chk_r, chk_c)
            for i in range(rs, re):
                if chk_r[i] != rowcnt[i]:
                    raise AssertionError("row count mismatch after split")
            for j in range(cs, ce):
                if chk_c[j] != colcnt[j]:
                    raise AssertionError("column count mismatch after split")
        total = 0
        for i in range(rs, re):
            total += rowcnt[i]
        if check:
            total_c = 0
            for j in range(cs, ce):
                total_c += colcnt[j]
            if total_c != total:
                raise AssertionError("row and column totals disagree")
        pos[0] = total
        value[node, 0] = total / m_node
        n_samples[node] = m_node
        if m_node < 2 * n_min or total == 0 or total == m_node:
            continue

        for j in range(p):
            pool[j] = j
        m = p
        n_cand = 0
        while n_cand < K and m > 0:
            j = _draw_index(rng.random(), m)
            f = pool[j]
            pool[j] = pool[m - 1]
            pool[m - 1] = f
            m -= 1
            lo = np.inf
            hi = -np.inf
            if f < p_r:
                for i in range(rs, re):
                    x = Xr[row_feat[prow[i]], f]
                    if x < lo:
                        lo = x
                    if x > hi:
                        hi = x
                evals += nr
            else:
                g = f - p_r
                for j2 in range(cs, ce):
                    x = Xc[col_feat[pcol[j2]], g]
                    if x < lo:
                        lo = x
                    if x > hi:
                        hi = x
                evals += nc
            if not lo < hi:
                continue
            t = _draw_threshold(lo, hi, rng.random())
            side_left = 0
            pos_left[0] = 0
            if f < p_r:
                for i in range(rs, re):
                    if Xr[row_feat[prow[i]], f] < t:
                        side_left += 1
                        pos_left[0] += rowcnt[i]
                n_left = side_left * nc
                evals += nr
            else:
                g = f - p_r
                for j2 in range(cs, ce):
                    if Xc[col_feat[pcol[j2]], g] < t:
                        side_left += 1
                        pos_left[0] += colcnt[j2]
                n_left = side_left * nr
                evals += nc
            cand_f[n_cand] = f
            cand_t[n_cand] = t
            cand_s[n_cand] = gini_gain(m_node, n_left, pos, pos_left)
            n_cand += 1
        if n_cand == 0:
            continue
        k = _select(cand_s, n_cand, rng.random())
        f = cand_f[k]
        t = cand_t[k]
        feature[node] = f
        threshold[node] = t
        gain[node] = cand_s[k]
        if f < p_r:
            i = rs
            jj = re - 1
            while i <= jj:
                if Xr[row_feat[prow[i]], f] < t:
                    i += 1
                else:
                    tmp = prow[i]
                    prow[i] = prow[jj]
                    prow[jj] = tmp
                    tmp = rowcnt[i]
                    rowcnt[i] = rowcnt[jj]
                    rowcnt[jj] = tmp
                    jj -= 1
            mid = i
            # per-column counts of the left child
            if mid - rs <= re - mid:
                for j2 in range(cs, ce):
                    acc = 0
                    c = pcol[j2]
                    for i2 in range(rs, mid):
                        acc += Y[prow[i2], c]
                    colcnt[j2] = acc
                label_reads += (mid - rs) * nc
            else:
                for j2 in range(cs, ce):
                    acc = 0
                    c = pcol[j2]
                    for i2 in range(mid, re):
                        acc += Y[prow[i2], c]
                    colcnt[j2] -= acc
                label_reads += (re - mid) * nc
            stack.append((mid, re, cs, ce, node, 0, 0))
            stack.append((rs, mid, cs, ce, node, 1, 1))
        else:
            g = f - p_r
            i = cs
            jj = ce - 1
            while i <= jj:
                if Xc[col_feat[pcol[i]], g] < t:
                    i += 1
                else:
                    tmp = pcol[i]
                    pcol[i] = pcol[jj]
                    pcol[jj] = tmp
                    tmp = colcnt[i]
                    colcnt[i] = colcnt[jj]
                    colcnt[jj] = tmp
                    jj -= 1
            mid = i
            if mid - cs <= ce - mid:
                for i2 in range(rs, re):
                    acc = 0
                    r = prow[i2]
                    for j2 in range(cs, mid):
                        acc += Y[r, pcol[j2]]
                    rowcnt[i2] = acc
                label_reads += (mid - cs) * nr
            else:
                for i2 in range(rs, re):
                    acc = 0
                    r = prow[i2]
                    for j2 in range(mid, ce):
                        acc += Y[r, pcol[j2]]
                    rowcnt[i2] -= acc
                label_reads += (ce - mid) * nr
            stack.append((rs, re, mid, ce, node, 0, 0))
            stack.append((rs, re, cs, mid, node, 1, 1))
        if len(stack) > peak_stack:
            peak_stack = len(stack)
    # state held per tree: two permutations and two count vectors
    records = 2 * (R + C)
    if check:
        records += R + C
    stats = np.array([evals, label_reads, records, peak_stack], np.int64)
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        n_samples[:n_nodes].copy(),
        gain[:n_nodes].copy(),
        stats,
    )


@njit(cache=True)
def predict_packed(Xr, Xc, pr, pc, feature, threshold, left, right, value, roots):
    """Mean leaf value over trees for each virtual sample."""
    n = pr.shape[0]
    n_trees = roots.shape[0]
    n_out = value.shape[1]
    p_r = Xr.shape[1]
    out = np.zeros((n, n_out))
    for s in range(n):
        for t in range(n_trees):
            node = roots[t]
            while feature[node] != LEAF:
                f = feature[node]
                if f < p_r:
                    x = Xr[pr[s], f]
                else:
                    x = Xc[pc[s], f - p_r]
                if x < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for o in range(n_out):
                out[s, o] += value[node, o]
        for o in range(n_out):
            out[s, o] /= n_trees
    return out


@njit(cache=True)
def apply_tree(Xr, Xc, pr, pc, feature, threshold, left, right):
    """Leaf index reached by each virtual sample in a single tree."""
    n = pr.shape[0]
    p_r = Xr.shape[1]
    out = np.empty(n, np.int64)
    for s in range(n):
        node = 0
        while feature[node] != LEAF:
            f = feature[node]
            if f < p_r:
                x = Xr[pr[s], f]
            else:
                x = Xc[pc[s], f - p_r]
            if x < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[s] = node
    return out
