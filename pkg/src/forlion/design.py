"""Approximate and exact designs, design information, sensitivity and merging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve

from .errors import SingularDesignError, ValidationError

PIVOT_FLOOR = 1e-300
# squared pivot relative to its diagonal entry; below this M is treated as singular
REL_PIVOT = 1e-12


@dataclass
class ApproximateDesign:
    """Design points (m x d) with real weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape[0] != self.weights.size:
            raise ValidationError(
                f"{self.points.shape[0]} points but {self.weights.size} weights"
            )
        if np.any(self.weights < 0):
            raise ValidationError("design weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"design weights sum to {self.weights.sum()!r}, not 1")

    @property
    def m(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, points) -> ApproximateDesign:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points, np.full(len(points), 1.0 / len(points)))


@dataclass
class ExactDesign:
    """Design points with integer unit counts."""

    points: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.counts = np.asarray(self.counts, dtype=np.int64).ravel()
        if self.points.shape[0] != self.counts.size:
            raise ValidationError(f"{self.points.shape[0]} points but {self.counts.size} counts")
        if np.any(self.counts < 0):
            raise ValidationError("counts must be nonnegative")

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    def as_approximate(self) -> ApproximateDesign:
        return ApproximateDesign(self.points, self.counts / self.N)


def _as_approx(xi) -> ApproximateDesign:
    return xi.as_approximate() if isinstance(xi, ExactDesign) else xi


def design_info(provider, xi) -> np.ndarray:
    """Weighted sum of per-point information matrices."""
    xi = _as_approx(xi)
    F = provider.info(xi.points)
    return np.einsum("n,nij->ij", xi.weights, F)


def cholesky(M: np.ndarray) -> np.ndarray | None:
    """Lower Cholesky factor, or None when M is not numerically positive definite."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    d = np.diagonal(L)
    if not np.all(np.isfinite(d)) or np.any(d**2 <= np.maximum(PIVOT_FLOOR, REL_PIVOT * np.diagonal(M))):
        return None
    return L


def log_det(M: np.ndarray) -> float:
    """log|M| through a Cholesky factorisation; -inf when M is not positive definite."""
    M = 0.5 * (M + M.T)
    L = cholesky(M)
    if L is None:
        return -np.inf
    return float(2.0 * np.sum(np.log(np.diagonal(L))))


def sensitivity_from_info(M: np.ndarray, F) -> np.ndarray:
    """tr(M^{-1} F) for one F (p x p) or a batch (n x p x p)."""
    L = cholesky(0.5 * (M + M.T))
    if L is None:
        raise SingularDesignError("design information matrix is singular")
    F = np.asarray(F, dtype=float)
    single = F.ndim == 2
    Fb = F[None] if single else F
    n, p, _ = Fb.shape
    # M Y = [F_1 | F_2 | ...]; trace of each p x p block of Y
    Y = cho_solve((L, True), np.moveaxis(Fb, 0, 1).reshape(p, n * p))
    Y = Y.reshape(p, n, p)
    d = np.einsum("ini->n", Y)
    return d[0] if single else d


def sensitivity(provider, xi, x) -> np.ndarray | float:
    """Sensitivity tr(F(xi)^{-1} F_x) at one point or a batch of points."""
    M = design_info(provider, xi)
    x = np.asarray(x, dtype=float)
    d = sensitivity_from_info(M, provider.info(np.atleast_2d(x)))
    return float(d[0]) if x.ndim == 1 else d


def pairwise_closest(points: np.ndarray) -> tuple[float, tuple[int, int] | None]:
    """Minimum Euclidean distance and the index pair attaining it (lowest indices on ties)."""
    points = np.atleast_2d(points)
    m = len(points)
    if m < 2:
        return np.inf, None
    diff = points[:, None, :] - points[None, :, :]
    D = np.sqrt(np.sum(diff**2, axis=-1))
    iu = np.triu_indices(m, k=1)
    k = int(np.argmin(D[iu]))
    return float(D[iu][k]), (int(iu[0][k]), int(iu[1][k]))


def merge_design(
    xi: ApproximateDesign, delta: float, k: int, provider=None, exclude: tuple[int, ...] = ()
) -> ApproximateDesign:
    """Merge close design points.

    Repeatedly takes the closest pair with distance below ``delta`` whose
    discrete coordinates (columns ``k:``) agree, replaces it by the
    weight-averaged continuous location carrying the summed weight, and
    keeps the merge only if the merged design stays nonsingular under
    ``provider`` (when given). Rejected pairs are not retried.
    Points whose indices are in ``exclude`` take no part in merging.
    """
    if delta <= 0 or xi.m < 2:
        return xi
    pts = xi.points.copy()
    w = xi.weights.copy()
    frozen = np.zeros(xi.m, dtype=bool)
    frozen[list(exclude)] = True
    rejected: set[tuple[bytes, bytes]] = set()
    while len(w) > 1:
        m = len(w)
        diff = pts[:, None, :] - pts[None, :, :]
        D = np.sqrt(np.sum(diff**2, axis=-1))
        same_disc = np.all(pts[:, None, k:] == pts[None, :, k:], axis=-1)
        best = None
        for i in range(m):
            for j in range(i + 1, m):
                if D[i, j] < delta and same_disc[i, j]:
                    if frozen[i] or frozen[j]:
                        continue
                    key = (pts[i].tobytes(), pts[j].tobytes())
                    if key in rejected:
                        continue
                    if best is None or D[i, j] < best[0]:
                        best = (D[i, j], i, j)
        if best is None:
            break
        _, i, j = best
        wi, wj = w[i], w[j]
        merged = pts[i].copy()
        tot = wi + wj
        if tot > 0:
            merged[:k] = (wi * pts[i, :k] + wj * pts[j, :k]) / tot
        # merged point takes slot i, slot j is removed
        new_pts = np.delete(pts, j, axis=0)
        new_pts[i] = merged
        new_w = np.delete(w, j)
        new_w[i] = tot
        new_frozen = np.delete(frozen, j)
        if provider is not None:
            cand = ApproximateDesign(new_pts, new_w / new_w.sum())
            if log_det(design_info(provider, cand)) == -np.inf:
                rejected.add((pts[i].tobytes(), pts[j].tobytes()))
                continue
        pts, w, frozen = new_pts, new_w, new_frozen
    return ApproximateDesign(pts, w / w.sum())


def relative_efficiency(provider, num, den, p: int) -> float:
    """(|F(num)| / |F(den)|)^(1/p); exact designs are used with weights n_i/N."""
    ld_den = log_det(design_info(provider, den))
    if ld_den == -np.inf:
        raise SingularDesignError("reference design for relative efficiency is singular")
    ld_num = log_det(design_info(provider, num))
    if ld_num == -np.inf:
        return 0.0
    return float(np.exp((ld_num - ld_den) / p))
