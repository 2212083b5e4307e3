"""Expected Fisher information under a box prior or a parameter sample."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cubature import adaptive_cubature
from .errors import InfeasibleParameterError, NumericalError, ValidationError
from .model import ModelSpec, core_info, predictor_rows, sandwich


class CubatureBudgetWarning(RuntimeWarning):
    """Adaptive cubature stopped at its evaluation budget before reaching tolerance."""


@dataclass
class BoxPrior:
    """Prior supported on a box of parameter vectors.

    ``density`` is ``"uniform-product"``, a list of per-coordinate tables
    ``{"x": [...], "pdf": [...]}`` (linearly interpolated and renormalised
    over the coordinate's range), or a callable mapping an (n, p) array of
    parameter vectors to their joint density. Coordinates with
    ``lower == upper`` are held fixed and excluded from integration.
    """

    lower: np.ndarray
    upper: np.ndarray
    density: str | list | Callable = "uniform-product"
    cubature_reltol: float = 1e-4
    cubature_max_evals: int = 1_000_000
    _tables: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape:
            raise ValidationError("prior bounds have different lengths", key="parameters.prior")
        if np.any(self.lower > self.upper):
            bad = int(np.argmax(self.lower > self.upper))
            raise ValidationError(
                f"prior lower bound exceeds upper bound at coordinate {bad}",
                key="parameters.prior",
            )
        if self.cubature_reltol <= 0:
            raise ValidationError("cubature_reltol must be positive", key="parameters.prior.cubature_reltol")
        if isinstance(self.density, (list, tuple)):
            if len(self.density) != self.lower.size:
                raise ValidationError(
                    f"{len(self.density)} density tables for {self.lower.size} coordinates",
                    key="parameters.prior.density",
                )
            tables = []
            for j, tab in enumerate(self.density):
                xs = np.asarray(tab["x"], dtype=float)
                ps = np.asarray(tab["pdf"], dtype=float)
                if xs.shape != ps.shape or xs.size < 2 or np.any(np.diff(xs) <= 0) or np.any(ps < 0):
                    raise ValidationError(
                        f"density table {j} needs increasing x and nonnegative pdf of equal length",
                        key="parameters.prior.density",
                    )
                if self.lower[j] < self.upper[j]:
                    grid = np.linspace(self.lower[j], self.upper[j], 2001)
                    mass = np.trapezoid(np.interp(grid, xs, ps, left=0.0, right=0.0), grid)
                    if not mass > 0:
                        raise ValidationError(
                            f"density table {j} has no mass on the prior range",
                            key="parameters.prior.density",
                        )
                else:
                    mass = 1.0
                tables.append((xs, ps / mass))
            self._tables = tables
        elif not (self.density == "uniform-product" or callable(self.density)):
            raise ValidationError(f"unknown density {self.density!r}", key="parameters.prior.density")

    @property
    def p(self) -> int:
        return self.lower.size

    @property
    def active(self) -> np.ndarray:
        return self.lower < self.upper

    def pdf(self, theta: np.ndarray) -> np.ndarray:
        """Joint density over the active coordinates at an (n, p) array of parameters."""
        theta = np.atleast_2d(theta)
        act = self.active
        if callable(self.density):
            return np.asarray(self.density(theta), dtype=float).reshape(len(theta))
        if self._tables is not None:
            out = np.ones(len(theta))
            for j in np.flatnonzero(act):
                xs, ps = self._tables[j]
                out *= np.interp(theta[:, j], xs, ps, left=0.0, right=0.0)
            return out
        vol = np.prod(self.upper[act] - self.lower[act])
        return np.full(len(theta), 1.0 / vol)

    def sample(self, rng: np.random.Generator, B: int) -> np.ndarray:
        """B x p draws (independent coordinates; callable densities unsupported)."""
        if callable(self.density):
            raise ValidationError("cannot sample from a callable density", key="parameters.prior.density")
        out = np.tile(self.lower, (B, 1))
        for j in np.flatnonzero(self.active):
            u = rng.uniform(size=B)
            if self._tables is None:
                out[:, j] = self.lower[j] + u * (self.upper[j] - self.lower[j])
            else:
                xs, ps = self._tables[j]
                grid = np.linspace(self.lower[j], self.upper[j], 4001)
                pdf = np.interp(grid, xs, ps, left=0.0, right=0.0)
                cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
                out[:, j] = np.interp(u * cdf[-1], cdf, grid)
        return out


@dataclass
class ParameterSample:
    """B x p matrix of parameter vectors (bootstrap estimates or prior draws)."""

    rows: np.ndarray
    names: list[str] | None = None

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.shape[0] < 1:
            raise ValidationError("parameter sample has no rows", key="parameters.samples")
        if not np.all(np.isfinite(self.rows)):
            bad = int(np.argwhere(~np.isfinite(self.rows))[0, 0])
            raise ValidationError(f"parameter sample row {bad} is not finite", key="parameters.samples")

    @property
    def B(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


def read_parameter_sample(path, p: int | None = None, names: Sequence[str] | None = None) -> ParameterSample:
    """Read a CSV with one header row and B rows of p coefficients.

    The column count of every row is checked against the header (and
    against ``p`` when given).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty sample file", key="parameters.samples") from None
        if p is not None and len(header) != p:
            raise ValidationError(
                f"{path}: header has {len(header)} columns, model has p={p}", key="parameters.samples"
            )
        if names is not None and list(names) != header:
            raise ValidationError(
                f"{path}: header {header} does not match coefficients {list(names)}",
                key="parameters.samples",
            )
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: {len(rec)} columns, expected {len(header)}",
                    key="parameters.samples",
                )
            try:
                rows.append([float(c) for c in rec])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}", key="parameters.samples") from None
    if not rows:
        raise ValidationError(f"{path}: no data rows", key="parameters.samples")
    return ParameterSample(np.array(rows), header)


def write_parameter_sample(path, sample: ParameterSample | np.ndarray, names: Sequence[str]) -> None:
    rows = sample.rows if isinstance(sample, ParameterSample) else np.atleast_2d(sample)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names))
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def _upper_index(q: int):
    return np.triu_indices(q)


def _expected_core_sample(m: ModelSpec, X: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Mean over rows of ``thetas`` of U(X theta); X (n, q, p) -> (n, q, q)."""
    eta = np.einsum("nqp,bp->nbq", X, thetas)
    if m.link == "cumulative" and m.J > 2:
        bad = np.any(np.diff(eta, axis=-1) <= 0, axis=(0, 2))
        if np.any(bad):
            raise InfeasibleParameterError(
                f"parameter sample row {int(np.argmax(bad))} gives non-increasing cumulative logits"
            )
    U = core_info(m, eta)  # (n, B, q, q)
    # numpy sums a contiguous last axis pairwise, which keeps large B accurate
    return np.ascontiguousarray(np.moveaxis(U, 1, -1)).mean(axis=-1)


def ew_info_sample(m: ModelSpec, sample: ParameterSample | np.ndarray, x) -> np.ndarray:
    """Mean Fisher information over the sample rows, at one point or a batch."""
    thetas = sample.rows if isinstance(sample, ParameterSample) else np.atleast_2d(sample)
    x = np.asarray(x, dtype=float)
    X = predictor_rows(m, x)
    F = sandwich(X, _expected_core_sample(m, X, thetas))
    return F[0] if x.ndim == 1 else F


def _integral_one(m: ModelSpec, prior: BoxPrior, X: np.ndarray, integrand: str):
    act = prior.active
    q, p = X.shape
    if not np.any(act):
        U = core_info(m, (X @ prior.lower)[None])[0]
        return X.T @ U @ X, False
    iu = _upper_index(p if integrand == "entries" else q)

    def f(nodes: np.ndarray) -> np.ndarray:
        theta = np.tile(prior.lower, (len(nodes), 1))
        theta[:, act] = nodes
        U = core_info(m, theta @ X.T)  # (n, q, q)
        if integrand == "entries":
            U = np.einsum("qi,nqr,rj->nij", X, U, X)
        return U[:, iu[0], iu[1]] * prior.pdf(theta)[:, None]

    res = adaptive_cubature(
        f, prior.lower[act], prior.upper[act], prior.cubature_reltol, prior.cubature_max_evals
    )
    k = iu[0].max() + 1
    A = np.zeros((k, k))
    A[iu] = res.value
    A = A + np.triu(A, 1).T
    if integrand == "entries":
        return A, res.budget_exceeded
    return X.T @ A @ X, res.budget_exceeded


def ew_info_integral(m: ModelSpec, prior: BoxPrior, x, integrand: str = "core") -> np.ndarray:
    """Prior expectation of the Fisher information by adaptive cubature.

    ``integrand="core"`` integrates the q(q+1)/2 entries of the linear-
    predictor information U (q = 1 for a GLM, J-1 for an MLM) and maps the
    result through the parameter-free model matrix; ``"entries"`` integrates
    all p(p+1)/2 upper-triangle entries of F(x, theta) directly. Both are the
    same integral.

    Raises:
        InfeasibleParameterError: the box contains parameters without a
            valid probability model (cumulative MLM); use a sample instead.
    """
    if integrand not in ("core", "entries"):
        raise ValueError(f"unknown integrand mode {integrand!r}")
    x = np.asarray(x, dtype=float)
    Xs = predictor_rows(m, x)
    out = np.empty((len(Xs), m.p, m.p))
    for i, X in enumerate(Xs):
        try:
            F, exceeded = _integral_one(m, prior, X, integrand)
        except InfeasibleParameterError as exc:
            raise InfeasibleParameterError(
                f"integral-based expectation impossible: {exc}; use a parameter sample"
            ) from None
        if exceeded:
            warnings.warn(
                f"cubature budget of {prior.cubature_max_evals} evaluations exceeded at x={np.atleast_2d(x)[i]}",
                CubatureBudgetWarning,
                stacklevel=2,
            )
        out[i] = 0.5 * (F + F.T)
    return out[0] if x.ndim == 1 else out
