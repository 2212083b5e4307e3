"""Rounding an approximate design to a grid-feasible exact design."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .design import ApproximateDesign, ExactDesign, log_det, merge_design
from .errors import SingularDesignError, ValidationError
from .space import DesignSpace

# guards floor(N * w) and x / L against representation error (0.29 * 100 < 29)
_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class RoundingConfig:
    """delta2: merge threshold; grid: step L_j per continuous factor; N: units."""

    delta2: float
    grid: tuple[float, ...]
    N: int

    def __post_init__(self):
        if not self.delta2 >= 0:
            raise ValidationError(f"delta2 must be >= 0, got {self.delta2!r}", key="rounding.delta2")
        if any(not (L > 0) for L in self.grid):
            raise ValidationError(f"grid steps must be positive, got {self.grid!r}", key="rounding.grid")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"N must be a positive integer, got {self.N!r}", key="rounding.N")

    @classmethod
    def from_mapping(cls, space: DesignSpace, delta2: float, grid, N: int) -> RoundingConfig:
        """Build from a grid given as a scalar, a sequence or a {factor: L} mapping."""
        names = [f.name for f in space.continuous_factors]
        if isinstance(grid, Mapping):
            unknown = set(grid) - set(names)
            if unknown:
                raise ValidationError(f"unknown continuous factor(s) {sorted(unknown)}", key="rounding.grid")
            missing = [n for n in names if n not in grid]
            if missing:
                raise ValidationError(f"no grid step for {missing}", key="rounding.grid")
            steps = tuple(float(grid[n]) for n in names)
        elif isinstance(grid, Sequence) and not isinstance(grid, str):
            steps = tuple(float(v) for v in grid)
            if len(steps) != len(names):
                raise ValidationError(f"need {len(names)} grid steps, got {len(steps)}", key="rounding.grid")
        else:
            steps = (float(grid),) * len(names)
        return cls(float(delta2), steps, int(N))


@dataclass
class RoundingReport:
    exact: ExactDesign
    merged: ApproximateDesign
    rounded: ApproximateDesign
    log_det: float
    relative_efficiency: float

    @property
    def det(self) -> float:
        return float(np.exp(self.log_det))


def round_to_grid(x: float, L: float, lower: float, upper: float) -> float:
    """Nearest multiple of L (exact halves away from zero), kept inside [lower, upper]."""
    t = round(x / L, 9)
    r = math.copysign(math.floor(abs(t) + 0.5), t)
    lo = math.ceil(round(lower / L, 9))
    hi = math.floor(round(upper / L, 9))
    if lo > hi:
        raise ValidationError(f"no multiple of {L} inside [{lower}, {upper}]", key="rounding.grid")
    r = min(max(r, lo), hi)
    return float(np.round(r * L, 12)) + 0.0


def _combine(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse identical rows; returns (points, summed weights, row -> group)."""
    out_p: list[np.ndarray] = []
    out_w: list[float] = []
    group = np.empty(len(points), dtype=np.int64)
    for r, (x, w) in enumerate(zip(points, weights)):
        for i, y in enumerate(out_p):
            if np.array_equal(x, y):
                out_w[i] += w
                group[r] = i
                break
        else:
            group[r] = len(out_p)
            out_p.append(x)
            out_w.append(w)
    return np.array(out_p), np.array(out_w), group


def greedy_counts(F: np.ndarray, weights: np.ndarray, N: int) -> np.ndarray:
    """floor(N w_i) units each, then the remaining units one at a time to the
    point whose increment maximises log det of sum (n_j / N) F_j.

    Ties go to the lowest index.
    """
    n = np.floor(N * np.asarray(weights) + _FLOOR_SLACK).astype(np.int64)
    n = np.minimum(n, N)
    while n.sum() > N:  # only possible through the slack
        n[np.argmax(n)] -= 1
    M = np.einsum("n,nij->ij", n / N, F)
    for _ in range(int(N - n.sum())):
        gains = np.array([log_det(M + Fi / N) for Fi in F])
        i = int(np.argmax(gains))
        n[i] += 1
        M = M + F[i] / N
    return n


def largest_remainder_counts(weights: np.ndarray, N: int) -> np.ndarray:
    """floor(N w_i), then one unit each to the largest fractional parts (ties to lowest index)."""
    nw = N * np.asarray(weights)
    n = np.floor(nw + _FLOOR_SLACK).astype(np.int64)
    rest = int(N - n.sum())
    order = np.argsort(-(nw - n), kind="stable")
    n[order[:rest]] += 1
    return n


def round_design(
    provider,
    xi: ApproximateDesign,
    space: DesignSpace,
    config: RoundingConfig,
    allocate_on: str = "merged",
    allocation: str = "greedy",
) -> RoundingReport:
    """Merge, snap to the grid, and allocate N units.

    ``allocate_on`` picks the information used by the unit allocation:
    ``"merged"`` (default) allocates on the merged points before grid
    snapping and carries the counts over to the snapped points, so the
    allocation does not depend on the grid; ``"rounded"`` allocates on the
    snapped points. ``allocation="largest-remainder"`` replaces the greedy
    log det allocation by the largest fractional parts of N w_i.

    Raises:
        SingularDesignError: the input or the rounded exact design is singular.
    """
    if allocate_on not in ("merged", "rounded"):
        raise ValidationError(f"unknown allocation basis {allocate_on!r}", key="rounding.allocate_on")
    if allocation not in ("greedy", "largest-remainder"):
        raise ValidationError(f"unknown allocation rule {allocation!r}", key="rounding.allocation")
    p = provider.p
    k = space.k
    if len(config.grid) != k:
        raise ValidationError(f"need {k} grid steps, got {len(config.grid)}", key="rounding.grid")
    ld_in = log_det(np.einsum("n,nij->ij", xi.weights, provider.info(xi.points)))
    if ld_in == -np.inf:
        raise SingularDesignError("input design is singular; nothing to round")

    merged = merge_design(xi, config.delta2, k, provider)
    pts = merged.points.copy()
    for j in range(k):
        a, b = space.lower[j], space.upper[j]
        pts[:, j] = [round_to_grid(v, config.grid[j], a, b) for v in pts[:, j]]
    pts, w, group = _combine(pts, merged.weights)
    rounded = ApproximateDesign(pts, w / w.sum())
    F = provider.info(rounded.points)

    if allocation == "largest-remainder":
        if allocate_on == "merged":
            n_merged = largest_remainder_counts(merged.weights, config.N)
            n = np.bincount(group, weights=n_merged, minlength=rounded.m).astype(np.int64)
        else:
            n = largest_remainder_counts(rounded.weights, config.N)
    elif allocate_on == "merged":
        n_merged = greedy_counts(provider.info(merged.points), merged.weights, config.N)
        n = np.bincount(group, weights=n_merged, minlength=rounded.m).astype(np.int64)
    else:
        n = greedy_counts(F, rounded.weights, config.N)
    keep = n > 0
    exact = ExactDesign(rounded.points[keep], n[keep])
    ld = log_det(np.einsum("n,nij->ij", exact.counts / config.N, F[keep]))
    if ld == -np.inf:
        raise SingularDesignError(
            f"rounded exact design with N={config.N} is singular; use a finer grid or a larger N"
        )
    eff = float(np.exp((ld - ld_in) / p))
    return RoundingReport(exact, merged, rounded, ld, eff)
