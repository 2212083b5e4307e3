"""ForLion outer loop: locally optimal and EW D-optimal approximate designs."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .design import (
    ApproximateDesign,
    cholesky,
    design_info,
    log_det,
    merge_design,
    pairwise_closest,
    sensitivity_from_info,
)
from .errors import NumericalError, SingularDesignError, ValidationError
from .liftone import LiftOneProblem, lift_path, liftone_optimize, maximize_along_path
from .providers import InfoProvider, IntegralEWProvider, SampleEWProvider
from .space import DesignSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForLionConfig:
    """Tuning parameters of the ForLion loop.

    ``liftone_reltol`` and ``liftone_maxit`` control the inner weight
    optimisation; it must converge much more tightly than ``reltol`` for the
    sensitivity check at the support points to be meaningful.
    """

    delta0: float = 1e-5
    delta: float = 0.0
    epsilon: float = 1e-12
    reltol: float = 1e-5
    maxit: int = 100
    random: bool = False
    nram: int = 3
    random_initial: bool = False
    nram_initial: int = 3
    optim_grad: bool = False
    rowmax: int | None = None
    seed: int = 0
    multistart_count: int = 3
    glm_adapted: bool | None = None
    liftone_mode: str = "log"
    liftone_reltol: float = 1e-12
    liftone_maxit: int = 500
    liftone_polish: bool = True
    initial_points: tuple | None = None

    def __post_init__(self):
        checks = {
            "delta0": self.delta0 > 0,
            "delta": self.delta >= 0,
            "epsilon": self.epsilon > 0,
            "reltol": self.reltol > 0,
            "maxit": self.maxit >= 1,
            "nram": self.nram >= 1,
            "nram_initial": self.nram_initial >= 1,
            "multistart_count": self.multistart_count >= 0,
            "liftone_reltol": self.liftone_reltol > 0,
            "liftone_maxit": self.liftone_maxit >= 1,
            "rowmax": self.rowmax is None or self.rowmax >= 1,
            "liftone_mode": self.liftone_mode in ("log", "poly"),
        }
        for key, ok in checks.items():
            if not ok:
                raise ValidationError(f"invalid value {getattr(self, key)!r}", key=f"algorithm.{key}")


@dataclass
class ForLionResult:
    design: ApproximateDesign
    det: float
    log_det: float
    convergence: bool
    min_diff: float
    x_close: np.ndarray | None
    itmax: int
    max_sensitivity: float

    @property
    def m(self) -> int:
        return self.design.m


# --------------------------------------------------------------------------
# initial designs


def _far_enough(x: np.ndarray, pts: list[np.ndarray], delta0: float) -> bool:
    return all(np.linalg.norm(x - q) >= delta0 for q in pts)


def initial_design(
    space: DesignSpace,
    provider: InfoProvider,
    config: ForLionConfig,
    glm_adapted: bool = False,
    rng: np.random.Generator | None = None,
) -> ApproximateDesign:
    """Random nonsingular starting design with points at least ``delta0`` apart.

    The general mode grows a random point list until the uniform design on
    it is nonsingular; the GLM mode draws exactly p points (a minimally
    supported uniform design) and redraws until nonsingular.

    Raises:
        SingularDesignError: no nonsingular design within the attempt budget.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    p = provider.p
    if config.initial_points is not None:
        pts = np.atleast_2d(np.asarray(config.initial_points, dtype=float))
        xi = ApproximateDesign.uniform(pts)
        if log_det(design_info(provider, xi)) == -np.inf:
            raise SingularDesignError("initial_points give a singular design")
        return xi

    def draw(existing: list[np.ndarray], tries: int = 1000) -> np.ndarray | None:
        for _ in range(tries):
            x = space.sample(rng)[0]
            if _far_enough(x, existing, config.delta0):
                return x
        return None

    if glm_adapted:
        for _ in range(100):
            pts: list[np.ndarray] = []
            for _ in range(p):
                x = draw(pts)
                if x is None:
                    break
                pts.append(x)
            if len(pts) < p:
                continue
            xi = ApproximateDesign.uniform(np.array(pts))
            if log_det(design_info(provider, xi)) > -np.inf:
                return xi
        raise SingularDesignError(
            "no nonsingular minimally supported initial design in 100 attempts; "
            "try another seed"
        )

    cap = config.rowmax if config.rowmax is not None else max(100 * p, 1000)
    pts = []
    infos = []
    while len(pts) < cap:
        x = draw(pts)
        if x is None:
            break
        pts.append(x)
        infos.append(provider.info(x[None])[0])
        M = np.mean(infos, axis=0)
        if log_det(M) > -np.inf:
            return ApproximateDesign.uniform(np.array(pts))
    raise SingularDesignError(
        f"initial design still singular with {len(pts)} points; "
        "increase rowmax or change the seed"
    )


# --------------------------------------------------------------------------
# new point search


def _starts(space: DesignSpace, config: ForLionConfig, rng: np.random.Generator) -> np.ndarray:
    k = space.k
    lo, hi = space.lower, space.upper
    starts = [0.5 * (lo + hi)]
    if 2**k <= 64:
        for corner in itertools.product((0, 1), repeat=k):
            starts.append(np.where(np.array(corner) == 1, hi, lo))
    else:
        lhs = qmc.LatinHypercube(d=k, seed=rng).random(64)
        starts.extend(qmc.scale(lhs, lo, hi))
    if config.multistart_count:
        starts.extend(rng.uniform(lo, hi, size=(config.multistart_count, k)))
    return np.array(starts)


class _Sensitivity:
    """Batched sensitivity (and gradient) evaluation on one design."""

    def __init__(self, provider: InfoProvider, M: np.ndarray, space: DesignSpace, analytic: bool):
        self.provider = provider
        self.M = M
        self.k = space.k
        self.lo, self.hi = space.lower, space.upper
        self.analytic = analytic
        self.neval = 0

    def value(self, X: np.ndarray) -> np.ndarray:
        self.neval += len(X)
        return sensitivity_from_info(self.M, self.provider.info(X))

    def value_grad(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.k
        if self.analytic:
            F, dF = self.provider.info_grad(X, k)
            self.neval += len(X)
            n, p = F.shape[0], F.shape[1]
            d = sensitivity_from_info(self.M, F)
            dd = sensitivity_from_info(self.M, dF.reshape(n * k, p, p)).reshape(n, k)
            return d, dd
        d = self.value(X)
        h = 1e-6 * (self.hi - self.lo)
        grad = np.empty((len(X), k))
        for j in range(k):
            up, dn = X.copy(), X.copy()
            up[:, j] = np.minimum(X[:, j] + h[j], self.hi[j])
            dn[:, j] = np.maximum(X[:, j] - h[j], self.lo[j])
            both = self.value(np.vstack([up, dn]))
            grad[:, j] = (both[: len(X)] - both[len(X) :]) / (up[:, j] - dn[:, j])
        return d, grad


def _projected_ascent(sens: _Sensitivity, X0: np.ndarray, max_iter: int = 200, xtol: float = 1e-10):
    """Lock-step projected gradient ascent with backtracking for all starts.

    Coordinates are rescaled to the unit box; X0 holds full design points,
    only the first k columns move.
    """
    k = sens.k
    span = sens.hi - sens.lo
    X = X0.copy()
    d, g = sens.value_grad(X)
    gu = g * span
    step = 0.1 / np.maximum(np.max(np.abs(gu), axis=1), 1e-300)
    active = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        u = (X[idx, :k] - sens.lo) / span
        u_new = np.clip(u + step[idx, None] * gu[idx], 0.0, 1.0)
        move = u_new - u
        stuck = np.max(np.abs(move), axis=1) <= xtol
        Xt = X[idx].copy()
        Xt[:, :k] = sens.lo + u_new * span
        # exact bounds where the projection clipped
        Xt[:, :k] = np.where(u_new <= 0.0, sens.lo, np.where(u_new >= 1.0, sens.hi, Xt[:, :k]))
        dt = sens.value(Xt)
        ok = dt >= d[idx] + 1e-4 * np.sum(gu[idx] * move, axis=1)
        ok &= ~stuck
        acc = idx[ok]
        if acc.size:
            X[acc] = Xt[ok]
            dn, gn = sens.value_grad(X[acc])
            small = np.max(np.abs(move[ok]), axis=1) <= xtol
            d[acc], gu[acc] = dn, gn * span
            step[acc] *= 2.0
            active[acc[small]] = False
        rej = idx[~ok]
        step[rej] *= 0.5
        active[idx[stuck]] = False
        active[rej[step[rej] * np.max(np.abs(gu[rej]), axis=1) <= xtol]] = False
    return X, d


def new_point_search(
    space: DesignSpace,
    provider: InfoProvider,
    xi: ApproximateDesign,
    config: ForLionConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float]:
    """Maximise the sensitivity function over the design space.

    Each discrete combination gets a multistart projected-gradient ascent
    over the continuous box (box centre, corners or a Latin hypercube, plus
    ``multistart_count`` uniform draws); the global best is returned.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    M = design_info(provider, xi)
    if cholesky(0.5 * (M + M.T)) is None:
        raise SingularDesignError("cannot search for a new point: design information is singular")
    analytic = config.optim_grad and not isinstance(provider, IntegralEWProvider)
    sens = _Sensitivity(provider, M, space, analytic)
    combos = space.discrete_combinations() if space.d > space.k else [()]
    k = space.k
    if k == 0:
        X = np.array(combos, dtype=float)
        d = sens.value(X)
    else:
        starts = _starts(space, config, rng)
        X0 = np.array([np.concatenate([s, c]) for c in combos for s in starts])
        X, d = _projected_ascent(sens, X0)
    best = int(np.argmax(d))
    return X[best].copy(), float(d[best])


# --------------------------------------------------------------------------
# outer loop


def _drop_small(xi: ApproximateDesign, eps: float) -> ApproximateDesign:
    keep = xi.weights >= eps
    w = xi.weights[keep]
    return ApproximateDesign(xi.points[keep], w / w.sum())


def _liftone(provider, xi, config, rng) -> ApproximateDesign:
    F = provider.info(xi.points)
    prob = LiftOneProblem(
        F,
        start=xi.weights,
        reltol=config.liftone_reltol,
        maxit=config.liftone_maxit,
        random_order=True,
        nram=config.nram if config.random else 1,
        mode=config.liftone_mode,
        epsilon=config.epsilon,
        seed=int(rng.integers(2**63)),
        polish=config.liftone_polish,
    )
    w, _ = liftone_optimize(prob)
    return ApproximateDesign(xi.points, w)


def _merge_stable(xi: ApproximateDesign, delta: float, k: int, provider) -> bool:
    return merge_design(xi, delta, k, provider).m == xi.m


def _finish(provider, xi, converged, it, d_star) -> ForLionResult:
    ld = log_det(design_info(provider, xi))
    min_diff, pair = pairwise_closest(xi.points)
    x_close = None if pair is None else xi.points[list(pair)]
    return ForLionResult(
        design=xi,
        det=float(np.exp(ld)),
        log_det=ld,
        convergence=converged,
        min_diff=min_diff,
        x_close=x_close,
        itmax=it,
        max_sensitivity=d_star,
    )


def _single_run(space, provider, config, glm_adapted, rng) -> ForLionResult:
    p = provider.p
    k = space.k
    xi = initial_design(space, provider, config, glm_adapted, rng)
    d_star = np.inf
    certified = None
    fresh: tuple[int, ...] = ()
    it = 0
    for it in range(1, config.maxit + 1):
        # a point added last round first gets a lift-one weight, then may merge
        xi = merge_design(xi, config.delta, k, provider, exclude=fresh)
        fresh = ()
        xi = _liftone(provider, xi, config, rng)
        xi = _drop_small(xi, config.epsilon)
        x_star, d_star = new_point_search(space, provider, xi, config, rng)
        log.debug("iteration %d: m=%d d*=%.10g", it, xi.m, d_star)
        if d_star <= p * (1.0 + config.reltol):
            if _merge_stable(xi, config.delta, k, provider):
                return _finish(provider, xi, True, it, d_star)
            # certified but still holds mergeable points: keep it as a
            # fallback and let the next round merge and re-certify
            if certified is None or xi.m <= certified[0].m:
                certified = (xi, it, d_star)
            continue
        if np.any(np.all(xi.points == x_star, axis=1)):
            # already a support point: more lift-one sweeps next round
            continue
        pts = np.vstack([xi.points, x_star])
        w = np.append(xi.weights, 0.0)
        if glm_adapted:
            F = provider.info(pts)
            try:
                z, _ = maximize_along_path(F, w, len(w) - 1, config.liftone_mode)
                w = lift_path(w, len(w) - 1, z)
            except SingularDesignError:
                pass
        xi = ApproximateDesign(pts, w)
        fresh = (xi.m - 1,)
    if certified is not None:
        return _finish(provider, certified[0], True, it, certified[2])
    return _finish(provider, xi, False, it, d_star)


def forlion_optimize(
    space: DesignSpace,
    provider: InfoProvider,
    config: ForLionConfig | None = None,
    glm_adapted: bool | None = None,
) -> ForLionResult:
    """Find a D-optimal approximate design for ``provider`` over ``space``.

    ``glm_adapted`` (default: ``config.glm_adapted``, else True for GLMs)
    selects the minimally supported start and the lifted initial weight for
    new points.
    """
    config = config or ForLionConfig()
    if glm_adapted is None:
        glm_adapted = config.glm_adapted
    if glm_adapted is None:
        glm_adapted = provider.model.is_glm
    if hasattr(provider, "prepare"):
        provider.prepare(space)
    root = np.random.SeedSequence(config.seed)
    runs = config.nram_initial if config.random_initial else 1
    best = None
    for child in root.spawn(runs):
        res = _single_run(space, provider, config, glm_adapted, np.random.default_rng(child))
        if best is None or res.log_det > best.log_det:
            best = res
    return best


def ew_forlion_optimize(
    space: DesignSpace,
    provider: InfoProvider,
    config: ForLionConfig | None = None,
    glm_adapted: bool | None = None,
) -> ForLionResult:
    """EW D-optimal design: the ForLion loop on expected information."""
    if not isinstance(provider, (IntegralEWProvider, SampleEWProvider)):
        raise ValidationError("EW designs need a prior or a parameter sample", key="parameters")
    return forlion_optimize(space, provider, config, glm_adapted)
