"""Compiled inner loops for split search and tree routing."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grow_tree(Xt, is_cat, n_levels, orders, features, rows, g, h, max_depth, min_node,
              width, node_of, tree_node, sub, sub_val):
    """Greedy level-wise growth of one least-squares tree on ``rows``.

    ``Xt`` is the feature matrix transposed to (p, n). ``orders[j]`` is the
    full-data ascending order of numeric feature j; it is filtered to the
    in-play rows once (into the ``sub``/``sub_val`` workspaces), then every
    level is a single pass per feature over all active nodes. Splits need a
    strict gain improvement, so ties keep the earliest feature, the lowest
    threshold and the shortest ordered prefix. ``node_of`` and ``tree_node``
    are length-n workspaces.
    """
    n = Xt.shape[1]
    m = rows.shape[0]
    max_nodes = 2 ** (max_depth + 1) - 1
    feat = np.full(max_nodes, -1, dtype=np.int64)
    thr = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    imp = np.zeros(max_nodes)
    catmask = np.zeros((max_nodes, width), dtype=np.bool_)

    node_of[:] = -1
    for a in range(m):
        node_of[rows[a]] = 0
        tree_node[rows[a]] = 0

    for jj in range(features.shape[0]):
        j = features[jj]
        if is_cat[j]:
            continue
        c = 0
        xj = Xt[j]
        for pos in range(n):
            i = orders[j, pos]
            if node_of[i] == 0:
                sub[j, c] = i
                sub_val[j, c] = xj[i]
                c += 1

    active = np.zeros(max_nodes, dtype=np.int64)
    na = 1
    n_nodes = 1
    act = rows.copy()
    n_act = m

    for _depth in range(max_depth):
        if na == 0:
            break
        cnt = np.zeros(na)
        tot = np.zeros(na)
        ssq = np.zeros(na)
        for a in range(n_act):
            i = act[a]
            k = node_of[i]
            cnt[k] += 1.0
            tot[k] += g[i]
            ssq[k] += g[i] * g[i]
        # a split must beat rounding noise relative to the node's scale
        best = 1e-10 * ssq
        base = np.zeros(na)
        for k in range(na):
            base[k] = tot[k] * tot[k] / cnt[k]
        bfeat = np.full(na, -1, dtype=np.int64)
        bthr = np.zeros(na)
        bmask = np.zeros((na, width), dtype=np.bool_)

        for jj in range(features.shape[0]):
            j = features[jj]
            if is_cat[j]:
                L = n_levels[j]
                cc = np.zeros((na, L))
                ss = np.zeros((na, L))
                for a in range(n_act):
                    i = act[a]
                    k = node_of[i]
                    lv = np.int64(Xt[j, i])
                    cc[k, lv] += 1.0
                    ss[k, lv] += g[i]
                lv_order = np.empty(L, dtype=np.int64)
                means = np.empty(L)
                for k in range(na):
                    npres = 0
                    for lv in range(L):
                        if cc[k, lv] > 0:
                            mu = ss[k, lv] / cc[k, lv]
                            q = npres
                            # insertion sort on (mean, level index)
                            while q > 0 and means[q - 1] > mu:
                                means[q] = means[q - 1]
                                lv_order[q] = lv_order[q - 1]
                                q -= 1
                            means[q] = mu
                            lv_order[q] = lv
                            npres += 1
                    if npres < 2:
                        continue
                    cl = 0.0
                    sl = 0.0
                    for q in range(npres - 1):
                        cl += cc[k, lv_order[q]]
                        sl += ss[k, lv_order[q]]
                        nr = cnt[k] - cl
                        if cl < min_node or nr < min_node:
                            continue
                        sr = tot[k] - sl
                        gain = sl * sl / cl + sr * sr / nr - base[k]
                        if gain > best[k]:
                            best[k] = gain
                            bfeat[k] = j
                            bmask[k, :] = False
                            for q2 in range(q + 1):
                                bmask[k, lv_order[q2]] = True
            else:
                cnt_l = np.zeros(na)
                sum_l = np.zeros(na)
                last = np.zeros(na)
                for pos in range(m):
                    i = sub[j, pos]
                    k = node_of[i]
                    if k < 0:
                        continue
                    v = sub_val[j, pos]
                    nl = cnt_l[k]
                    if nl >= min_node and v != last[k]:
                        nr = cnt[k] - nl
                        if nr >= min_node:
                            sl = sum_l[k]
                            sr = tot[k] - sl
                            # division-free screen; the exact gain decides
                            lhs = sl * sl * nr + sr * sr * nl
                            if lhs >= (best[k] + base[k]) * nl * nr * (1.0 - 1e-12):
                                gain = sl * sl / nl + sr * sr / nr - base[k]
                            else:
                                gain = -1.0
                            if gain > best[k]:
                                best[k] = gain
                                bfeat[k] = j
                                t = 0.5 * (last[k] + v)
                                if t >= v:  # adjacent floats: midpoint rounds up
                                    t = last[k]
                                bthr[k] = t
                    cnt_l[k] = nl + 1.0
                    sum_l[k] += g[i]
                    last[k] = v

        child_l = np.full(na, -1, dtype=np.int64)
        child_r = np.full(na, -1, dtype=np.int64)
        new_active = np.zeros(max_nodes, dtype=np.int64)
        nn = 0
        for k in range(na):
            j = bfeat[k]
            if j < 0:
                continue
            node = active[k]
            lid = n_nodes
            n_nodes += 2
            feat[node] = j
            if is_cat[j]:
                catmask[node, :] = bmask[k, :]
            else:
                thr[node] = bthr[k]
            left[node] = lid
            right[node] = lid + 1
            imp[node] = best[k]
            child_l[k] = nn
            new_active[nn] = lid
            nn += 1
            child_r[k] = nn
            new_active[nn] = lid + 1
            nn += 1
        if nn == 0:
            break

        c2 = 0
        for a in range(n_act):
            i = act[a]
            k = node_of[i]
            j = bfeat[k]
            if j < 0:
                node_of[i] = -1
                continue
            v = Xt[j, i]
            if is_cat[j]:
                go_right = np.int64(not bmask[k, np.int64(v)])
            else:
                go_right = np.int64(v > bthr[k])
            nk = child_l[k] + go_right  # right child follows left
            node_of[i] = nk
            tree_node[i] = new_active[nk]
            act[c2] = i
            c2 += 1
        n_act = c2
        for k in range(nn):
            active[k] = new_active[k]
        na = nn

    n_rows = np.zeros(n_nodes, dtype=np.int64)
    sum_g = np.zeros(n_nodes)
    sum_h = np.zeros(n_nodes)
    for a in range(m):
        i = rows[a]
        t = tree_node[i]
        n_rows[t] += 1
        sum_g[t] += g[i]
        sum_h[t] += h[i]
    value = np.zeros(n_nodes)
    for node in range(n_nodes - 1, -1, -1):
        if feat[node] >= 0:
            n_rows[node] = n_rows[left[node]] + n_rows[right[node]]
        else:
            value[node] = sum_g[node] / (sum_h[node] + 1e-12)
    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value,
            imp[:n_nodes], n_rows, catmask[:n_nodes])


@njit(cache=True, nogil=True)
def route(X, is_cat, feat, thr, left, right, catmask, root, i):
    node = root
    while feat[node] >= 0:
        j = feat[node]
        v = X[i, j]
        if is_cat[j]:
            go_left = catmask[node, np.int64(v)]
        else:
            go_left = v <= thr[node]
        node = left[node] if go_left else right[node]
    return node


@njit(cache=True, nogil=True)
def predict_ensemble(X, is_cat, feat, thr, left, right, value, catmask, roots,
                     n_trees, f0, shrinkage, out):
    for i in range(X.shape[0]):
        f = f0
        for t in range(n_trees):
            node = route(X, is_cat, feat, thr, left, right, catmask, roots[t], i)
            f += shrinkage * value[node]
        out[i] = f


@njit(cache=True, nogil=True)
def predict_staged(X, is_cat, feat, thr, left, right, value, catmask, roots,
                   n_trees, f0, shrinkage, out):
    """``out[b, i]`` is the raw score of row i after b trees (row 0 is f0)."""
    for i in range(X.shape[0]):
        f = f0
        out[0, i] = f
        for t in range(n_trees):
            node = route(X, is_cat, feat, thr, left, right, catmask, roots[t], i)
            f += shrinkage * value[node]
            out[t + 1, i] = f


@njit(cache=True, nogil=True)
def leaf_index(X, is_cat, feat, thr, left, right, catmask, out):
    for i in range(X.shape[0]):
        out[i] = route(X, is_cat, feat, thr, left, right, catmask, 0, i)

