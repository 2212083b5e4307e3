"""Adaptive cubature over hyper-rectangles.

Regions are integrated with the Genz-Malik degree-7 rule, whose embedded
degree-5 rule supplies an error estimate (Gauss-Kronrod 7/15 in one
dimension). The region with the largest scaled error is bisected along the
axis with the largest fourth divided difference until every component of
the (vector) integral meets the relative tolerance or the evaluation budget
runs out.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np


@dataclass
class CubatureResult:
    value: np.ndarray
    error: np.ndarray
    neval: int
    budget_exceeded: bool
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None


class _Rule(NamedTuple):
    nodes: np.ndarray  # (n_nodes, dim) on [-1, 1]^dim
    w_hi: np.ndarray  # weights scaled so sum(w) == 1 for a unit-volume region
    w_lo: np.ndarray
    axis_in: np.ndarray | None  # (dim, 2) node indices at +-lambda2 e_i
    axis_out: np.ndarray | None  # (dim, 2) node indices at +-lambda4 e_i


_GK_X = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_GK_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_GK_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])


@lru_cache(maxsize=None)
def _rule(dim: int) -> _Rule:
    if dim == 1:
        x = np.concatenate([-_GK_X[:-1], _GK_X[::-1]])
        wk = np.concatenate([_GK_WK[:-1], _GK_WK[::-1]]) / 2.0
        wg_full = np.zeros(15)
        # Gauss nodes are the odd-indexed Kronrod abscissae
        g_idx_pos = [1, 3, 5]
        for gi, ki in enumerate(g_idx_pos):
            wg_full[ki] = _GK_WG[gi] / 2.0
            wg_full[14 - ki] = _GK_WG[gi] / 2.0
        wg_full[7] = _GK_WG[3] / 2.0
        return _Rule(x[:, None], wk, wg_full, None, None)

    l2 = np.sqrt(9.0 / 70.0)
    l4 = np.sqrt(9.0 / 10.0)
    l5 = np.sqrt(9.0 / 19.0)
    n = dim
    nodes = [np.zeros(n)]
    axis_in = np.zeros((n, 2), dtype=int)
    axis_out = np.zeros((n, 2), dtype=int)
    for i in range(n):
        for s, col in ((1.0, 0), (-1.0, 1)):
            v = np.zeros(n)
            v[i] = s * l2
            axis_in[i, col] = len(nodes)
            nodes.append(v)
    for i in range(n):
        for s, col in ((1.0, 0), (-1.0, 1)):
            v = np.zeros(n)
            v[i] = s * l4
            axis_out[i, col] = len(nodes)
            nodes.append(v)
    n_pair_start = len(nodes)
    for i, j in itertools.combinations(range(n), 2):
        for si, sj in itertools.product((1.0, -1.0), repeat=2):
            v = np.zeros(n)
            v[i], v[j] = si * l4, sj * l4
            nodes.append(v)
    n_corner_start = len(nodes)
    for signs in itertools.product((1.0, -1.0), repeat=n):
        nodes.append(l5 * np.asarray(signs))
    nodes = np.array(nodes)

    w_hi = np.empty(len(nodes))
    w_lo = np.zeros(len(nodes))
    w_hi[0] = (12824.0 - 9120.0 * n + 400.0 * n * n) / 19683.0
    w_hi[1 : 2 * n + 1] = 980.0 / 6561.0
    w_hi[2 * n + 1 : n_pair_start] = (1820.0 - 400.0 * n) / 19683.0
    w_hi[n_pair_start:n_corner_start] = 200.0 / 19683.0
    w_hi[n_corner_start:] = 6859.0 / 19683.0 / 2.0**n
    w_lo[0] = (729.0 - 950.0 * n + 50.0 * n * n) / 729.0
    w_lo[1 : 2 * n + 1] = 245.0 / 486.0
    w_lo[2 * n + 1 : n_pair_start] = (265.0 - 100.0 * n) / 1458.0
    w_lo[n_pair_start:n_corner_start] = 25.0 / 729.0
    return _Rule(nodes, w_hi, w_lo, axis_in, axis_out)


def rule_size(dim: int) -> int:
    return len(_rule(dim).nodes)


def _eval_regions(f, rule: _Rule, centers: np.ndarray, halfw: np.ndarray):
    """Integrate over several regions at once.

    Returns (estimate (r, c), error (r, c), split axis (r,)).
    """
    r, dim = centers.shape
    pts = centers[:, None, :] + halfw[:, None, :] * rule.nodes[None, :, :]
    vals = np.asarray(f(pts.reshape(-1, dim)), dtype=float)
    vals = vals.reshape(r, len(rule.nodes), -1)
    vol = np.prod(2.0 * halfw, axis=1)[:, None]
    hi = vol * np.einsum("k,rkc->rc", rule.w_hi, vals)
    lo = vol * np.einsum("k,rkc->rc", rule.w_lo, vals)
    err = np.abs(hi - lo)
    if rule.axis_in is None:
        axis = np.zeros(r, dtype=int)
    else:
        ratio = (9.0 / 70.0) / (9.0 / 10.0)
        f0 = vals[:, 0, :]
        d2 = vals[:, rule.axis_in[:, 0], :] + vals[:, rule.axis_in[:, 1], :] - 2 * f0[:, None, :]
        d4 = vals[:, rule.axis_out[:, 0], :] + vals[:, rule.axis_out[:, 1], :] - 2 * f0[:, None, :]
        diff = np.abs(d2 - ratio * d4).sum(axis=2)  # (r, dim)
        # ties (e.g. separable or flat integrands) go to the widest axis
        top = diff.max(axis=1, keepdims=True)
        near = diff >= top * (1.0 - 1e-10) - 1e-300
        axis = np.argmax(np.where(near, halfw, -np.inf), axis=1)
    return hi, err, axis


def adaptive_cubature(
    f: Callable[[np.ndarray], np.ndarray],
    lower,
    upper,
    reltol: float = 1e-4,
    max_evals: int = 1_000_000,
    abstol: float = 0.0,
    return_rule: bool = False,
) -> CubatureResult:
    """Integrate a vector-valued function over the box [lower, upper].

    Args:
        f: maps an (n, dim) array of nodes to an (n,) or (n, c) array.
        lower, upper: box corners.
        reltol: componentwise relative tolerance.
        max_evals: evaluation budget; when exhausted the current estimate is
            returned with ``budget_exceeded=True``.
        abstol: absolute tolerance floor per component.
        return_rule: also return the final leaf nodes and their degree-7
            weights, a fixed rule that reproduces ``value`` for ``f``.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    dim = lower.size
    rule = _rule(dim)
    nn = len(rule.nodes)

    center = 0.5 * (lower + upper)
    halfw = 0.5 * (upper - lower)
    hi, err, axis = _eval_regions(f, rule, center[None], halfw[None])
    neval = nn
    total = hi[0].copy()
    total_err = err[0].copy()
    # fixed per-component scale for region priorities
    scale = np.maximum(np.abs(total), 1e-12 * np.max(np.abs(total)))
    scale = np.where(scale > 0, scale, 1.0)

    counter = itertools.count()
    heap = [(-float(np.max(err[0] / scale)), next(counter), center, halfw, hi[0], err[0], int(axis[0]))]

    def done() -> bool:
        # components that vanish analytically only need roundoff-level error
        floor = max(abstol, 1e-13 * float(np.max(np.abs(total))))
        tol = np.maximum(reltol * np.abs(total), floor)
        return bool(np.all(total_err <= tol))

    exceeded = False
    while not done():
        if neval + 2 * nn > max_evals:
            exceeded = True
            break
        _, _, c, h, v, e, ax = heapq.heappop(heap)
        h2 = h.copy()
        h2[ax] *= 0.5
        c_lo, c_hi = c.copy(), c.copy()
        c_lo[ax] -= h2[ax]
        c_hi[ax] += h2[ax]
        cs = np.vstack([c_lo, c_hi])
        hs = np.vstack([h2, h2])
        v2, e2, ax2 = _eval_regions(f, rule, cs, hs)
        neval += 2 * nn
        total += v2.sum(axis=0) - v
        total_err += e2.sum(axis=0) - e
        for t in range(2):
            heapq.heappush(
                heap, (-float(np.max(e2[t] / scale)), next(counter), cs[t], hs[t], v2[t], e2[t], int(ax2[t]))
            )
    # re-sum from the leaves to shed accumulated update round-off
    leaves = sorted(heap, key=lambda it: it[1])
    total = np.sum([item[4] for item in leaves], axis=0)
    total_err = np.sum([item[5] for item in leaves], axis=0)
    res = CubatureResult(total, total_err, neval, exceeded)
    if return_rule:
        cs = np.array([item[2] for item in leaves])
        hs = np.array([item[3] for item in leaves])
        res.nodes = (cs[:, None, :] + hs[:, None, :] * rule.nodes[None]).reshape(-1, dim)
        vol = np.prod(2.0 * hs, axis=1)
        res.weights = (vol[:, None] * rule.w_hi[None, :]).ravel()
    return res
