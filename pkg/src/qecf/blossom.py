"""Maximum-weight general matching (Edmonds' blossom algorithm) compiled with numba.

This is an array-based primal-dual implementation in O(n^3) for dense
graphs.  It is used for matching problems too large for the subset
dynamic program in :mod:`qecf.decode`.  Recursion in blossom expansion and
augmentation is replaced by explicit work stacks.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _slack(k, ei, ej, ew, dual):
    return dual[ei[k]] + dual[ej[k]] - 2.0 * ew[k]


@numba.njit(cache=True)
def _leaves(b, nv, childs, nchild, out):
    n = 0
    stack = [b]
    while len(stack) > 0:
        x = stack.pop()
        if x < nv:
            out[n] = x
            n += 1
        else:
            for t in range(nchild[x]):
                stack.append(childs[x, t])
    return n


@numba.njit(cache=True)
def _assign_label(w, t, p, nv, endpoint, mate, label, labelend, inblossom, blossombase, bestedge, childs, nchild, queue, buf):
    while True:
        b = inblossom[w]
        label[w] = t
        label[b] = t
        labelend[w] = p
        labelend[b] = p
        bestedge[w] = -1
        bestedge[b] = -1
        if t == 1:
            cnt = _leaves(b, nv, childs, nchild, buf)
            for i in range(cnt):
                queue.append(buf[i])
            return
        mb = mate[blossombase[b]]
        w = endpoint[mb]
        t = 1
        p = mb ^ 1


@numba.njit(cache=True)
def _scan_blossom(v, w, endpoint, mate, label, labelend, inblossom, blossombase):
    path = [0]
    path.pop()
    base = -1
    while v != -1 or w != -1:
        b = inblossom[v]
        if label[b] & 4:
            base = blossombase[b]
            break
        path.append(b)
        label[b] = 5
        if labelend[b] == -1:
            v = -1
        else:
            v = endpoint[labelend[b]]
            b = inblossom[v]
            v = endpoint[labelend[b]]
        if w != -1:
            v, w = w, v
    for b in path:
        label[b] = 1
    return base


@numba.njit(cache=True)
def _add_blossom(
    base, k, nv, ei, ej, ew, endpoint, nb_ptr, nb_list, label, labelend, inblossom, blossomparent,
    childs, nchild, endps, blossombase, bestedge, bbe, nbbe, unused, dual, queue, buf, bestto,
):
    v = ei[k]
    w = ej[k]
    bb = inblossom[base]
    bv = inblossom[v]
    bw = inblossom[w]
    b = unused.pop()
    blossombase[b] = base
    blossomparent[b] = -1
    blossomparent[bb] = b
    # walk from v down to the base, then reverse, then walk from w
    pth = [0]
    pth.pop()
    eps = [0]
    eps.pop()
    while bv != bb:
        blossomparent[bv] = b
        pth.append(bv)
        eps.append(labelend[bv])
        v = endpoint[labelend[bv]]
        bv = inblossom[v]
    pth.append(bb)
    pth.reverse()
    eps.reverse()
    eps.append(2 * k)
    while bw != bb:
        blossomparent[bw] = b
        pth.append(bw)
        eps.append(labelend[bw] ^ 1)
        w = endpoint[labelend[bw]]
        bw = inblossom[w]
    nchild[b] = len(pth)
    for i in range(len(pth)):
        childs[b, i] = pth[i]
        endps[b, i] = eps[i]
    label[b] = 1
    labelend[b] = labelend[bb]
    dual[b] = 0.0
    cnt = _leaves(b, nv, childs, nchild, buf)
    for i in range(cnt):
        x = buf[i]
        if label[inblossom[x]] == 2:
            queue.append(x)
        inblossom[x] = b
    bestto[:] = -1
    for bv in pth:
        if nbbe[bv] < 0:
            cnt = _leaves(bv, nv, childs, nchild, buf)
            for li in range(cnt):
                x = buf[li]
                for q in range(nb_ptr[x], nb_ptr[x + 1]):
                    kk = nb_list[q] // 2
                    i = ei[kk]
                    j = ej[kk]
                    if inblossom[j] == b:
                        i, j = j, i
                    bj = inblossom[j]
                    if bj != b and label[bj] == 1 and (
                        bestto[bj] == -1 or _slack(kk, ei, ej, ew, dual) < _slack(bestto[bj], ei, ej, ew, dual)
                    ):
                        bestto[bj] = kk
        else:
            for q in range(nbbe[bv]):
                kk = bbe[bv, q]
                i = ei[kk]
                j = ej[kk]
                if inblossom[j] == b:
                    i, j = j, i
                bj = inblossom[j]
                if bj != b and label[bj] == 1 and (
                    bestto[bj] == -1 or _slack(kk, ei, ej, ew, dual) < _slack(bestto[bj], ei, ej, ew, dual)
                ):
                    bestto[bj] = kk
        nbbe[bv] = -1
        bestedge[bv] = -1
    n = 0
    for x in range(bestto.shape[0]):
        if bestto[x] != -1:
            bbe[b, n] = bestto[x]
            n += 1
    nbbe[b] = n
    bestedge[b] = -1
    for q in range(n):
        kk = bbe[b, q]
        if bestedge[b] == -1 or _slack(kk, ei, ej, ew, dual) < _slack(bestedge[b], ei, ej, ew, dual):
            bestedge[b] = kk


@numba.njit(cache=True)
def _expand_blossom(
    b0, endstage, nv, endpoint, mate, label, labelend, inblossom, blossomparent, childs, nchild, endps,
    blossombase, bestedge, nbbe, unused, dual, allowedge, queue, buf,
):
    work = [b0]
    while len(work) > 0:
        b = work.pop()
        for ci in range(nchild[b]):
            s = childs[b, ci]
            blossomparent[s] = -1
            if s < nv:
                inblossom[s] = s
            elif endstage and dual[s] == 0.0:
                work.append(s)
            else:
                cnt = _leaves(s, nv, childs, nchild, buf)
                for i in range(cnt):
                    inblossom[buf[i]] = s
        if (not endstage) and label[b] == 2:
            L = nchild[b]
            entry = inblossom[endpoint[labelend[b] ^ 1]]
            j = 0
            while childs[b, j] != entry:
                j += 1
            if j & 1:
                j -= L
                jstep = 1
                trick = 0
            else:
                jstep = -1
                trick = 1
            p = labelend[b]
            while j != 0:
                label[endpoint[p ^ 1]] = 0
                label[endpoint[endps[b, (j - trick) % L] ^ trick ^ 1]] = 0
                _assign_label(endpoint[p ^ 1], 2, p, nv, endpoint, mate, label, labelend, inblossom, blossombase, bestedge, childs, nchild, queue, buf)
                allowedge[endps[b, (j - trick) % L] // 2] = True
                j += jstep
                p = endps[b, (j - trick) % L] ^ trick
                allowedge[p // 2] = True
                j += jstep
            bv = childs[b, j % L]
            label[endpoint[p ^ 1]] = 2
            label[bv] = 2
            labelend[endpoint[p ^ 1]] = p
            labelend[bv] = p
            bestedge[bv] = -1
            j += jstep
            while childs[b, j % L] != entry:
                bv = childs[b, j % L]
                if label[bv] == 1:
                    j += jstep
                    continue
                cnt = _leaves(bv, nv, childs, nchild, buf)
                hit = -1
                for i in range(cnt):
                    if label[buf[i]] != 0:
                        hit = buf[i]
                        break
                if hit != -1:
                    label[hit] = 0
                    label[endpoint[mate[blossombase[bv]]]] = 0
                    _assign_label(hit, 2, labelend[hit], nv, endpoint, mate, label, labelend, inblossom, blossombase, bestedge, childs, nchild, queue, buf)
                j += jstep
        label[b] = -1
        labelend[b] = -1
        nchild[b] = 0
        blossombase[b] = -1
        nbbe[b] = -1
        bestedge[b] = -1
        unused.append(b)


@numba.njit(cache=True)
def _augment_blossom(b0, v0, nv, endpoint, mate, blossomparent, childs, nchild, endps, blossombase, tmp):
    work = [(b0, v0)]
    while len(work) > 0:
        b, v = work.pop()
        t = v
        while blossomparent[t] != b:
            t = blossomparent[t]
        if t >= nv:
            work.append((t, v))
        L = nchild[b]
        i = 0
        while childs[b, i] != t:
            i += 1
        j = i
        if i & 1:
            j -= L
            jstep = 1
            trick = 0
        else:
            jstep = -1
            trick = 1
        while j != 0:
            j += jstep
            t = childs[b, j % L]
            p = endps[b, (j - trick) % L] ^ trick
            if t >= nv:
                work.append((t, endpoint[p]))
            j += jstep
            t = childs[b, j % L]
            if t >= nv:
                work.append((t, endpoint[p ^ 1]))
            mate[endpoint[p]] = p ^ 1
            mate[endpoint[p ^ 1]] = p
        for q in range(L):
            tmp[q] = childs[b, (q + i) % L]
        for q in range(L):
            childs[b, q] = tmp[q]
        for q in range(L):
            tmp[q] = endps[b, (q + i) % L]
        for q in range(L):
            endps[b, q] = tmp[q]
        # children may still be queued on the stack, but the new base is v either way
        blossombase[b] = v


@numba.njit(cache=True)
def max_weight_matching(w):
    """Maximum-weight matching of a dense symmetric weight matrix.

    Only entries with ``w[i, j] > 0`` (i < j) are edges.  Returns ``mate``
    with ``mate[i] = j`` for matched pairs and ``-1`` for unmatched vertices.
    """
    nv = w.shape[0]
    out = np.full(nv, -1, dtype=np.int64)
    ne = 0
    for i in range(nv):
        for j in range(i + 1, nv):
            if w[i, j] > 0:
                ne += 1
    if ne == 0:
        return out
    ei = np.empty(ne, dtype=np.int64)
    ej = np.empty(ne, dtype=np.int64)
    ew = np.empty(ne, dtype=np.float64)
    deg = np.zeros(nv + 1, dtype=np.int64)
    k = 0
    maxw = 0.0
    for i in range(nv):
        for j in range(i + 1, nv):
            if w[i, j] > 0:
                ei[k] = i
                ej[k] = j
                ew[k] = w[i, j]
                maxw = max(maxw, w[i, j])
                deg[i + 1] += 1
                deg[j + 1] += 1
                k += 1
    endpoint = np.empty(2 * ne, dtype=np.int64)
    for k in range(ne):
        endpoint[2 * k] = ei[k]
        endpoint[2 * k + 1] = ej[k]
    nb_ptr = np.cumsum(deg)
    fill = nb_ptr[:-1].copy()
    nb_list = np.empty(2 * ne, dtype=np.int64)
    for k in range(ne):
        nb_list[fill[ei[k]]] = 2 * k + 1
        fill[ei[k]] += 1
        nb_list[fill[ej[k]]] = 2 * k
        fill[ej[k]] += 1

    n2 = 2 * nv
    mate = np.full(nv, -1, dtype=np.int64)
    label = np.zeros(n2, dtype=np.int64)
    labelend = np.full(n2, -1, dtype=np.int64)
    inblossom = np.arange(nv)
    blossomparent = np.full(n2, -1, dtype=np.int64)
    childs = np.zeros((n2, nv + 1), dtype=np.int64)
    endps = np.zeros((n2, nv + 1), dtype=np.int64)
    nchild = np.zeros(n2, dtype=np.int64)
    blossombase = np.full(n2, -1, dtype=np.int64)
    blossombase[:nv] = np.arange(nv)
    bestedge = np.full(n2, -1, dtype=np.int64)
    bbe = np.zeros((n2, n2), dtype=np.int64)
    nbbe = np.full(n2, -1, dtype=np.int64)
    unused = [0]
    unused.pop()
    for b in range(nv, n2):
        unused.append(b)
    dual = np.zeros(n2)
    dual[:nv] = maxw
    allowedge = np.zeros(ne, dtype=np.bool_)
    buf = np.empty(nv, dtype=np.int64)
    bestto = np.empty(n2, dtype=np.int64)
    tmp = np.empty(nv + 1, dtype=np.int64)
    queue = [0]

    for _stage in range(nv):
        label[:] = 0
        bestedge[:] = -1
        nbbe[nv:] = -1
        allowedge[:] = False
        queue.clear()
        for v in range(nv):
            if mate[v] == -1 and label[inblossom[v]] == 0:
                _assign_label(v, 1, -1, nv, endpoint, mate, label, labelend, inblossom, blossombase, bestedge, childs, nchild, queue, buf)
        augmented = False
        while True:
            while len(queue) > 0 and not augmented:
                v = queue.pop()
                for q in range(nb_ptr[v], nb_ptr[v + 1]):
                    p = nb_list[q]
                    k = p // 2
                    x = endpoint[p]
                    if inblossom[v] == inblossom[x]:
                        continue
                    kslack = 0.0
                    if not allowedge[k]:
                        kslack = _slack(k, ei, ej, ew, dual)
                        if kslack <= 0:
                            allowedge[k] = True
                    if allowedge[k]:
                        if label[inblossom[x]] == 0:
                            _assign_label(x, 2, p ^ 1, nv, endpoint, mate, label, labelend, inblossom, blossombase, bestedge, childs, nchild, queue, buf)
                        elif label[inblossom[x]] == 1:
                            base = _scan_blossom(v, x, endpoint, mate, label, labelend, inblossom, blossombase)
                            if base >= 0:
                                _add_blossom(
                                    base, k, nv, ei, ej, ew, endpoint, nb_ptr, nb_list, label, labelend, inblossom,
                                    blossomparent, childs, nchild, endps, blossombase, bestedge, bbe, nbbe, unused,
                                    dual, queue, buf, bestto,
                                )
                            else:
                                _augment_matching(k, nv, ei, ej, endpoint, mate, label, labelend, inblossom, blossomparent, childs, nchild, endps, blossombase, tmp)
                                augmented = True
                                break
                        elif label[x] == 0:
                            label[x] = 2
                            labelend[x] = p ^ 1
                    elif label[inblossom[x]] == 1:
                        b = inblossom[v]
                        if bestedge[b] == -1 or kslack < _slack(bestedge[b], ei, ej, ew, dual):
                            bestedge[b] = k
                    elif label[x] == 0:
                        if bestedge[x] == -1 or kslack < _slack(bestedge[x], ei, ej, ew, dual):
                            bestedge[x] = k
            if augmented:
                break
            deltatype = 1
            delta = dual[0]
            for v in range(1, nv):
                delta = min(delta, dual[v])
            deltaedge = -1
            deltablossom = -1
            for v in range(nv):
                if label[inblossom[v]] == 0 and bestedge[v] != -1:
                    d = _slack(bestedge[v], ei, ej, ew, dual)
                    if d < delta:
                        delta = d
                        deltatype = 2
                        deltaedge = bestedge[v]
            for b in range(n2):
                if blossomparent[b] == -1 and label[b] == 1 and bestedge[b] != -1:
                    d = _slack(bestedge[b], ei, ej, ew, dual) / 2.0
                    if d < delta:
                        delta = d
                        deltatype = 3
                        deltaedge = bestedge[b]
            for b in range(nv, n2):
                if blossombase[b] >= 0 and blossomparent[b] == -1 and label[b] == 2 and dual[b] < delta:
                    delta = dual[b]
                    deltatype = 4
                    deltablossom = b
            for v in range(nv):
                lb = label[inblossom[v]]
                if lb == 1:
                    dual[v] -= delta
                elif lb == 2:
                    dual[v] += delta
            for b in range(nv, n2):
                if blossombase[b] >= 0 and blossomparent[b] == -1:
                    if label[b] == 1:
                        dual[b] += delta
                    elif label[b] == 2:
                        dual[b] -= delta
            if deltatype == 1:
                break
            elif deltatype == 2:
                allowedge[deltaedge] = True
                i = ei[deltaedge]
                j = ej[deltaedge]
                if label[inblossom[i]] == 0:
                    i, j = j, i
                queue.append(i)
            elif deltatype == 3:
                allowedge[deltaedge] = True
                queue.append(ei[deltaedge])
            else:
                _expand_blossom(
                    deltablossom, False, nv, endpoint, mate, label, labelend, inblossom, blossomparent, childs,
                    nchild, endps, blossombase, bestedge, nbbe, unused, dual, allowedge, queue, buf,
                )
        if not augmented:
            break
        for b in range(nv, n2):
            if blossomparent[b] == -1 and blossombase[b] >= 0 and label[b] == 1 and dual[b] == 0.0:
                _expand_blossom(
                    b, True, nv, endpoint, mate, label, labelend, inblossom, blossomparent, childs,
                    nchild, endps, blossombase, bestedge, nbbe, unused, dual, allowedge, queue, buf,
                )
    for v in range(nv):
        if mate[v] >= 0:
            out[v] = endpoint[mate[v]]
    return out


@numba.njit(cache=True)
def _augment_matching(k, nv, ei, ej, endpoint, mate, label, labelend, inblossom, blossomparent, childs, nchild, endps, blossombase, tmp):
    for side in range(2):
        if side == 0:
            s = ei[k]
            p = 2 * k + 1
        else:
            s = ej[k]
            p = 2 * k
        while True:
            bs = inblossom[s]
            if bs >= nv:
                _augment_blossom(bs, s, nv, endpoint, mate, blossomparent, childs, nchild, endps, blossombase, tmp)
            mate[s] = p
            if labelend[bs] == -1:
                break
            t = endpoint[labelend[bs]]
            bt = inblossom[t]
            s = endpoint[labelend[bt]]
            j = endpoint[labelend[bt] ^ 1]
            if bt >= nv:
                _augment_blossom(bt, j, nv, endpoint, mate, blossomparent, childs, nchild, endps, blossombase, tmp)
            mate[j] = labelend[bt]
            p = labelend[bt] ^ 1
