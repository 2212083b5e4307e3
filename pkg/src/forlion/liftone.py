"""Lift-one weight optimisation for D-optimality over a fixed point set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, solve_triangular
from scipy.optimize import brentq

from .design import cholesky, log_det
from .errors import SingularDesignError, ValidationError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class LiftOneProblem:
    """Weight optimisation over m fixed information matrices.

    Attributes:
        matrices: (m, p, p) per-point information matrices.
        start: starting weights.
        reltol: stop when one full sweep improves log det by less than
            ``reltol * |log det|``.
        maxit: maximum number of sweeps.
        random_order: visit coordinates in a shuffled order each sweep.
        nram: number of runs; runs after the first start from random
            allocations (normalised exponential spacings).
        mode: ``"log"`` (golden section on log det) or ``"poly"``
            (polynomial interpolation of det along the path).
        epsilon: weights below this are set to zero at the end.
        seed: seed for shuffling and random starts.
        polish: alternate the sweeps with projected Newton steps on the
            support weights; much faster when points nearly coincide.
    """

    matrices: np.ndarray
    start: np.ndarray | None = None
    reltol: float = 1e-5
    maxit: int = 100
    random_order: bool = False
    nram: int = 1
    mode: str = "log"
    epsilon: float = 1e-12
    seed: int | np.random.SeedSequence | None = 0
    z_tol: float = 1e-10
    polish: bool = False

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValidationError("matrices must have shape (m, p, p)")
        m = self.matrices.shape[0]
        if m < 1:
            raise ValidationError("need at least one matrix")
        if self.start is None:
            self.start = np.full(m, 1.0 / m)
        self.start = np.asarray(self.start, dtype=float)
        if self.start.shape != (m,) or np.any(self.start < 0) or abs(self.start.sum() - 1) > 1e-9:
            raise ValidationError("start must be a valid weight vector")
        if self.reltol <= 0:
            raise ValidationError("reltol must be positive")
        if self.mode not in ("log", "poly"):
            raise ValidationError(f"unknown lift-one mode {self.mode!r}")


def lift_path(w, i: int, z: float) -> np.ndarray:
    """Set weight i to z and rescale the others proportionally."""
    w = np.asarray(w, dtype=float)
    if w[i] >= 1.0:
        raise ValidationError(f"cannot lift coordinate {i}: its weight is 1")
    out = w * ((1.0 - z) / (1.0 - w[i]))
    out[i] = z
    return out


def _path_coefs(wi: float, z: float) -> tuple[float, float]:
    # M(z) = c1 M + c2 F_i
    c1 = (1.0 - z) / (1.0 - wi)
    return c1, z - wi * c1


def _golden(g, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _INVPHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INVPHI * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def _along_log(F: np.ndarray, M: np.ndarray, wi: float, tol: float):
    L = cholesky(M)
    if L is None:
        return None
    ldM = 2.0 * float(np.sum(np.log(np.diagonal(L))))
    A = solve_triangular(L, F, lower=True)
    S = solve_triangular(L, A.T, lower=True)
    mu = np.clip(eigh(0.5 * (S + S.T), eigvals_only=True), 0.0, None)
    um1 = mu - 1.0
    # along the path the eigenvalues are v_j(z) = (1 - w_i mu_j + z (mu_j - 1)) / (1 - w_i),
    # linear in z, so the nonsingular stretch is an explicit interval (zl, zu)
    base = 1.0 - wi * mu
    with np.errstate(divide="ignore", invalid="ignore"):
        up, dn = um1 > 0, um1 < 0
        zl = float(np.max(-base[up] / um1[up], initial=-math.inf))
        zu = float(np.min(-base[dn] / um1[dn], initial=math.inf))

    def v(z: float) -> np.ndarray:
        return (base + z * um1) / (1.0 - wi)

    def g(z: float) -> float:
        vz = v(z)
        if np.any(vz <= 0.0):
            return -math.inf
        return float(np.sum(np.log(vz)))

    def dg(z: float) -> float:
        # derivative up to the positive factor 1/(1 - w_i); g is concave
        vz = v(z)
        if np.any(vz <= 0.0):
            return math.inf if z <= wi else -math.inf
        return float(np.sum(um1 / vz))

    lo_open, hi_open = zl >= 0.0, zu <= 1.0  # singular at or beyond that end
    a, b = max(zl, 0.0), min(zu, 1.0)
    if not lo_open and dg(0.0) <= 0.0:
        z = 0.0
    elif not hi_open and dg(1.0) >= 0.0:
        z = 1.0
    else:
        span = b - a
        lo = a + 1e-13 * span if lo_open else a
        hi = b - 1e-13 * span if hi_open else b
        if dg(lo) <= 0.0:
            z = lo
        elif dg(hi) >= 0.0:
            z = hi
        else:
            z = brentq(dg, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    return z, ldM + g(z)


def _along_direct(F: np.ndarray, M: np.ndarray, wi: float, tol: float):
    # no usable factorisation of M: golden section on direct log determinants
    def g(z: float) -> float:
        c1, c2 = _path_coefs(wi, z)
        return log_det(c1 * M + c2 * F)

    z = _golden(g, 0.0, 1.0, tol)
    best = max(((g(t), t) for t in (0.0, z, 1.0)), key=lambda v: v[0])
    return best[1], best[0]


def _along_poly(F: np.ndarray, M: np.ndarray, wi: float, tol: float):
    p = M.shape[0]
    nodes = 0.5 * (1.0 - np.cos(np.pi * (np.arange(p + 1) + 0.5) / (p + 1)))
    mats = np.array([c1 * M + c2 * F for c1, c2 in (_path_coefs(wi, z) for z in nodes)])
    sign, ld = np.linalg.slogdet(mats)
    ref = np.max(ld[np.isfinite(ld)]) if np.any(np.isfinite(ld)) else 0.0
    vals = sign * np.exp(ld - ref)
    poly = np.polynomial.Chebyshev.fit(nodes, vals, deg=p, domain=[0.0, 1.0])
    dpoly = poly.deriv()
    grid = np.linspace(0.0, 1.0, 64 * p + 1)
    dv = dpoly(grid)
    cands = [0.0, 1.0]
    for a, b, da, db in zip(grid[:-1], grid[1:], dv[:-1], dv[1:]):
        if da == 0.0:
            cands.append(float(a))
        elif da * db < 0.0:
            lo, hi, dlo = a, b, da
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                dm = dpoly(mid)
                if dm * dlo > 0:
                    lo, dlo = mid, dm
                else:
                    hi = mid
            cands.append(0.5 * (lo + hi))
    best_z, best_ld = None, -np.inf
    for z in cands:
        c1, c2 = _path_coefs(wi, z)
        ldz = log_det(c1 * M + c2 * F)
        if ldz > best_ld:
            best_z, best_ld = z, ldz
    if best_z is None:
        return None
    return best_z, best_ld


def maximize_along_path(matrices, w, i: int, mode: str = "log", tol: float = 1e-10):
    """Maximise log det along the lift-one path of coordinate i.

    Returns ``(z*, log det at z*)``.

    Raises:
        SingularDesignError: the information is singular for every z.
    """
    matrices = np.asarray(matrices, dtype=float)
    w = np.asarray(w, dtype=float)
    if w[i] >= 1.0:
        raise ValidationError(f"cannot lift coordinate {i}: its weight is 1")
    M = np.einsum("n,nij->ij", w, matrices)
    M = 0.5 * (M + M.T)
    F = matrices[i]
    if mode == "poly":
        res = _along_poly(F, M, w[i], tol)
    else:
        res = _along_log(F, M, w[i], tol)
        if res is None:
            res = _along_direct(F, M, w[i], tol)
    if res is None or res[1] == -np.inf:
        raise SingularDesignError(f"information singular along the whole path of point {i}")
    return float(res[0]), float(res[1])


def _sensitivities(F: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    M = np.einsum("n,nij->ij", w, F)
    L = cholesky(0.5 * (M + M.T))
    if L is None:
        return None
    p = M.shape[0]
    A = solve_triangular(L, F.transpose(1, 0, 2).reshape(p, -1), lower=True)
    A = A.reshape(p, -1, p).transpose(1, 0, 2)  # L^-1 F_i
    B = solve_triangular(L, A.transpose(2, 0, 1).reshape(p, -1), lower=True)
    return np.einsum("ijj->i", B.reshape(p, -1, p).transpose(1, 2, 0))


def _sweeps(F, w, reltol, maxit, order_rng, mode, tol):
    m, p = len(w), F.shape[1]
    M = np.einsum("n,nij->ij", w, F)
    ld = log_det(M)
    if ld == -np.inf:
        return w, ld, 0
    sweeps = 0
    for sweeps in range(1, maxit + 1):
        ld_start = ld
        order = order_rng.permutation(m) if order_rng is not None else range(m)
        d = None  # sensitivities, refreshed only when needed
        for i in order:
            if m == 1:
                break
            if w[i] >= 1.0:
                continue  # vertex: no path; the other coordinates can still move off it
            if w[i] == 0.0:
                # z = 0 stays optimal for an absent point with d_i <= p
                if d is None:
                    d = _sensitivities(F, w)
                if d is not None and d[i] <= p:
                    continue
            try:
                z, ldz = maximize_along_path(F, w, int(i), mode, tol)
            except SingularDesignError:
                continue
            if ldz > ld:
                w = lift_path(w, int(i), z)
                ld = log_det(np.einsum("n,nij->ij", w, F))
                d = None
        if ld - ld_start <= reltol * max(abs(ld_start), 1e-300):
            break
    return w, ld, sweeps


def _newton_polish(F: np.ndarray, w: np.ndarray, maxit: int = 50) -> np.ndarray:
    """Projected Newton ascent of log det over the weights with w > 0.

    Steps stay in the simplex; a step that reaches the boundary zeroes that
    weight. Only improving steps are taken.
    """
    p = F.shape[1]
    ld = log_det(np.einsum("n,nij->ij", w, F))
    for _ in range(maxit):
        idx = np.flatnonzero(w > 0)
        n = idx.size
        if n < 2:
            break
        M = np.einsum("n,nij->ij", w, F)
        L = cholesky(0.5 * (M + M.T))
        if L is None:
            break
        Fa = F[idx]
        A = solve_triangular(L, Fa.transpose(1, 0, 2).reshape(p, -1), lower=True)
        A = A.reshape(p, n, p).transpose(1, 0, 2)
        B = solve_triangular(L, A.transpose(2, 0, 1).reshape(p, -1), lower=True)
        B = B.reshape(p, n, p).transpose(1, 2, 0)  # L^-1 F_i L^-T
        g = np.trace(B, axis1=1, axis2=2)
        H = -np.einsum("aij,bij->ab", B, B)
        # orthonormal basis of {s : sum s = 0}
        Q = np.linalg.qr(np.eye(n) - 1.0 / n, mode="reduced")[0][:, : n - 1]
        lam, V = np.linalg.eigh(Q.T @ H @ Q)
        floor = 1e-12 * max(np.max(np.abs(lam)), 1e-300)
        gr = V.T @ (Q.T @ g)
        s = Q @ (V @ (gr / np.maximum(-lam, floor)))
        if float(g @ s) <= 1e-15 * max(abs(ld), 1.0):
            break
        neg = s < 0
        tmax = float(np.min(w[idx][neg] / -s[neg])) if np.any(neg) else np.inf
        t = min(1.0, tmax)
        improved = False
        for _ in range(40):
            wn = w.copy()
            wn[idx] = np.maximum(w[idx] + t * s, 0.0)
            if t == tmax:
                wn[idx[np.argmin(np.where(neg, w[idx] / np.where(neg, -s, 1.0), np.inf))]] = 0.0
            wn /= wn.sum()
            ldn = log_det(np.einsum("n,nij->ij", wn, F))
            if ldn > ld:
                w, ld, improved = wn, ldn, True
                break
            t *= 0.5
        if not improved:
            break
    return w


def liftone_optimize(problem: LiftOneProblem) -> tuple[np.ndarray, float]:
    """Run lift-one sweeps to convergence; returns ``(weights, log det)``.

    Raises:
        SingularDesignError: no start with nonsingular information was found.
    """
    F = problem.matrices
    m = F.shape[0]
    rng = np.random.default_rng(problem.seed)
    best_w, best_ld = None, -np.inf
    for run in range(max(1, problem.nram)):
        if run == 0:
            w0 = problem.start.copy()
        else:
            e = rng.exponential(size=m)
            w0 = e / e.sum()
        order_rng = np.random.default_rng(rng.integers(2**63)) if problem.random_order else None
        chunk = min(problem.maxit, 10) if problem.polish else problem.maxit
        w, ld, _ = _sweeps(F, w0, problem.reltol, chunk, order_rng, problem.mode, problem.z_tol)
        if problem.polish and ld > -np.inf:
            for _ in range(max(1, problem.maxit // chunk)):
                w = _newton_polish(F, w)
                w, ld_new, _ = _sweeps(F, w, problem.reltol, chunk, order_rng, problem.mode, problem.z_tol)
                done = ld_new - ld <= problem.reltol * max(abs(ld), 1e-300)
                ld = ld_new
                if done:
                    break
        if ld > best_ld:
            best_w, best_ld = w, ld
    if best_w is None:
        raise SingularDesignError(f"no nonsingular starting allocation found in {problem.nram} attempts")
    w = np.where(best_w < problem.epsilon, 0.0, best_w)
    w = w / w.sum()
    return w, log_det(np.einsum("n,nij->ij", w, F))
