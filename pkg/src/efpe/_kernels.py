"""Compiled inner loops.

Simplex ids are topologically ordered (a parent sequence always belongs to a
simplex with a smaller id), so bottom-up passes walk ids in reverse and
top-down passes walk them forward.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def smoothed_br(g, start, size, parent, beta, xi, mu, q):
    """Writes the maximiser of ``<g,q> - mu d(q)`` into ``q``; returns the
    value."""
    m = start.shape[0]
    n = g.shape[0]
    gg = g.copy()
    b = np.empty(n)
    total = 0.0
    for j in range(m - 1, -1, -1):
        s0 = start[j]
        k = size[j]
        c = 1.0 - k * xi
        sc = mu * beta[j]
        top = -np.inf
        zs = 0.0
        for i in range(s0, s0 + k):
            z = gg[i] / sc
            zs += z
            if c * z > top:
                top = c * z
        ssum = 0.0
        for i in range(s0, s0 + k):
            e = math.exp(c * gg[i] / sc - top)
            b[i] = e
            ssum += e
        for i in range(s0, s0 + k):
            b[i] = c * b[i] / ssum + xi
        val = sc * (top + math.log(ssum) + xi * zs)
        if parent[j] >= 0:
            gg[parent[j]] += val
        else:
            total += val
    for j in range(m):
        pm = 1.0 if parent[j] < 0 else q[parent[j]]
        for i in range(start[j], start[j] + size[j]):
            q[i] = b[i] * pm
    return total


@njit(cache=True)
def csr_matvec(indptr, indices, data, v, out):
    for r in range(indptr.shape[0] - 1):
        acc = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            acc += data[p] * v[indices[p]]
        out[r] = acc
    return out


@njit(cache=True)
def to_sequence(b, start, size, parent, q):
    for j in range(start.shape[0]):
        pm = 1.0 if parent[j] < 0 else q[parent[j]]
        for i in range(start[j], start[j] + size[j]):
            q[i] = b[i] * pm
    return q


@njit(cache=True)
def regret_matching_plus(regrets, start, size, b):
    for j in range(start.shape[0]):
        s = 0.0
        for i in range(start[j], start[j] + size[j]):
            if regrets[i] > 0.0:
                s += regrets[i]
        for i in range(start[j], start[j] + size[j]):
            if s > 0.0:
                b[i] = max(regrets[i], 0.0) / s
            else:
                b[i] = 1.0 / size[j]
    return b


@njit(cache=True)
def cfr_plus_update(regrets, b, g, start, size, parent):
    """Counterfactual values bottom-up, then ``R+ <- max(R+ + u - v, 0)``."""
    gg = g.copy()
    for j in range(start.shape[0] - 1, -1, -1):
        v = 0.0
        for i in range(start[j], start[j] + size[j]):
            v += b[i] * gg[i]
        for i in range(start[j], start[j] + size[j]):
            r = regrets[i] + gg[i] - v
            regrets[i] = r if r > 0.0 else 0.0
        if parent[j] >= 0:
            gg[parent[j]] += v
