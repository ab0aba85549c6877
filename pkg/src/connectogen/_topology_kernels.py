"""Hot shortest-path and neighbourhood kernels, numba-jitted when enabled.

Everything here takes plain float64 arrays.  Edge lengths use np.inf for
absent edges and 0 on the diagonal; edge lengths are strictly positive.
The same statements run jitted or plain, so both paths agree bitwise.
"""

import numpy as np

from ._jit import maybe_jit

_TIE_TOL = 1e-12


@maybe_jit
def dijkstra_all(lengths):
    """All-pairs shortest path distances by per-source Dijkstra (dense scan)."""
    r = lengths.shape[0]
    dist = np.full((r, r), np.inf)
    for src in range(r):
        d = dist[src]
        d[src] = 0.0
        visited = np.zeros(r, np.bool_)
        while True:
            best = -1
            best_d = np.inf
            for i in range(r):
                if not visited[i] and d[i] < best_d:
                    best_d = d[i]
                    best = i
            if best < 0:
                break
            visited[best] = True
            for j in range(r):
                if visited[j]:
                    continue
                l = lengths[best, j]
                if l < np.inf:
                    nd = best_d + l
                    if nd < d[j]:
                        d[j] = nd
    return dist


@maybe_jit
def brandes_betweenness(lengths):
    """Unnormalized Brandes accumulation over ordered source-target pairs.

    Returns, per node, the sum over ordered pairs (s, t) of the fraction of
    shortest s-t paths passing through it (endpoints excluded).  Distance
    ties are matched within an absolute tolerance.
    """
    r = lengths.shape[0]
    bc = np.zeros(r)
    for src in range(r):
        d = np.full(r, np.inf)
        d[src] = 0.0
        sigma = np.zeros(r)
        sigma[src] = 1.0
        visited = np.zeros(r, np.bool_)
        order = np.empty(r, np.int64)
        n_settled = 0
        while True:
            best = -1
            best_d = np.inf
            for i in range(r):
                if not visited[i] and d[i] < best_d:
                    best_d = d[i]
                    best = i
            if best < 0:
                break
            visited[best] = True
            order[n_settled] = best
            n_settled += 1
            for j in range(r):
                if visited[j]:
                    continue
                l = lengths[best, j]
                if l == np.inf:
                    continue
                nd = best_d + l
                if nd < d[j] - _TIE_TOL:
                    d[j] = nd
                    sigma[j] = sigma[best]
                elif abs(nd - d[j]) <= _TIE_TOL:
                    sigma[j] += sigma[best]
        delta = np.zeros(r)
        for i in range(n_settled - 1, -1, -1):
            w = order[i]
            if d[w] == np.inf or sigma[w] == 0.0:
                continue
            for v in range(r):
                l = lengths[v, w]
                if l == np.inf or v == w:
                    continue
                if d[v] < np.inf and abs(d[v] + l - d[w]) <= _TIE_TOL:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != src:
                bc[w] += delta[w]
    return bc


@maybe_jit
def burt_effective_size(w):
    """Burt's effective size per node on a weighted undirected graph."""
    r = w.shape[0]
    out = np.zeros(r)
    for i in range(r):
        s_i = 0.0
        for u in range(r):
            s_i += w[i, u]
        if s_i <= 0.0:
            continue
        es = 0.0
        for j in range(r):
            if w[i, j] <= 0.0:
                continue
            m_j = 0.0
            for u in range(r):
                if w[j, u] > m_j:
                    m_j = w[j, u]
            redundancy = 0.0
            for q in range(r):
                if q == j or w[i, q] <= 0.0:
                    continue
                redundancy += (w[i, q] / s_i) * (w[j, q] / m_j)
            es += 1.0 - redundancy
        out[i] = es
    return out


@maybe_jit
def onnela_clustering(w):
    """Onnela weighted clustering coefficient, weights rescaled by the max."""
    r = w.shape[0]
    out = np.zeros(r)
    w_max = 0.0
    for i in range(r):
        for j in range(r):
            if w[i, j] > w_max:
                w_max = w[i, j]
    if w_max <= 0.0:
        return out
    wh = np.cbrt(w / w_max)
    for i in range(r):
        k_i = 0
        for j in range(r):
            if w[i, j] > 0.0:
                k_i += 1
        if k_i < 2:
            continue
        total = 0.0
        for j in range(r):
            if wh[i, j] <= 0.0:
                continue
            for q in range(r):
                if q == j:
                    continue
                total += wh[i, j] * wh[i, q] * wh[j, q]
        out[i] = total / (k_i * (k_i - 1))
    return out
