"""Information providers: point -> information matrix under one objective regime."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ValidationError
from .expectation import (
    BoxPrior,
    CubatureBudgetWarning,
    ParameterSample,
    _expected_core_sample,
    ew_info_integral,
)
from .cubature import adaptive_cubature
from .formula import eval_predictor_grad
from .model import ModelSpec, core_info, predictor_rows, sandwich


class InfoProvider:
    """Maps design points to (expected) Fisher information matrices.

    Subclasses implement :meth:`core`, the (expected) linear-predictor
    information; the point information is ``X' core X``.
    """

    kind = "base"

    def __init__(self, model: ModelSpec):
        self.model = model

    @property
    def p(self) -> int:
        return self.model.p

    def core(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def info(self, points) -> np.ndarray:
        """Information for an (n, d) array of points, shape (n, p, p)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        X = predictor_rows(self.model, points)
        return sandwich(X, self.core(X))

    def info_grad(self, points, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Information and its derivatives in the first ``k`` coordinates.

        Returns ``(F, dF)`` with shapes (n, p, p) and (n, k, p, p). Model
        matrix derivatives are exact; derivatives of the core information
        with respect to the linear predictors use central differences.
        """
        raise NotImplementedError(f"{type(self).__name__} has no analytic gradient")


def _core_and_grad(model: ModelSpec, X: np.ndarray, dX: np.ndarray, thetas: np.ndarray):
    """Mean over thetas of U(X theta) and of its derivative along dX.

    X: (n, q, p); dX: (n, k, q, p); thetas: (B, p).
    Returns U (n, q, q) and dU (n, k, q, q).
    """
    eta = np.einsum("nqp,bp->nbq", X, thetas)
    deta = np.einsum("nkqp,bp->nbkq", dX, thetas)
    U = core_info(model, eta)
    q = X.shape[1]
    dU = np.zeros(U.shape[:2] + (dX.shape[1], q, q))
    for l in range(q):
        h = 1e-6 * np.maximum(1.0, np.abs(eta[..., l]))
        up, dn = eta.copy(), eta.copy()
        up[..., l] += h
        dn[..., l] -= h
        dUl = (core_info(model, up) - core_info(model, dn)) / (2.0 * h[..., None, None])
        dU += deta[..., l, None, None] * dUl[:, :, None]
    return U.mean(axis=1), dU.mean(axis=1)


class _SampleBased(InfoProvider):
    thetas: np.ndarray

    def core(self, X):
        return _expected_core_sample(self.model, X, self.thetas)

    def info_grad(self, points, k):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        X = predictor_rows(self.model, points)
        G = eval_predictor_grad(self.model.formula, points)[:, :k]
        dX = G[:, :, None, :] if self.model.is_glm else G[:, :, : self.model.J - 1, :]
        U, dU = _core_and_grad(self.model, X, dX, self.thetas)
        F = sandwich(X, U)
        XtU = np.einsum("nqi,nqr->nir", X, U)
        dF = np.einsum("nir,nkrj->nkij", XtU, dX)
        dF = dF + np.swapaxes(dF, -1, -2)
        dF += np.einsum("nqi,nkqr,nrj->nkij", X, dU, X)
        return F, dF


class LocalProvider(_SampleBased):
    """Information at a fixed parameter vector."""

    kind = "local"

    def __init__(self, model: ModelSpec, theta):
        super().__init__(model)
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != model.p:
            raise ValidationError(
                f"theta has {theta.size} entries, model has p={model.p}", key="parameters.theta"
            )
        self.theta = theta
        self.thetas = theta[None, :]


class SampleEWProvider(_SampleBased):
    """Mean information over a B x p parameter sample."""

    kind = "sample-ew"

    def __init__(self, model: ModelSpec, sample: ParameterSample | np.ndarray):
        super().__init__(model)
        if not isinstance(sample, ParameterSample):
            sample = ParameterSample(sample)
        if sample.p != model.p:
            raise ValidationError(
                f"parameter sample has {sample.p} columns, model has p={model.p}",
                key="parameters.samples",
            )
        self.sample = sample
        self.thetas = sample.rows


class IntegralEWProvider(InfoProvider):
    """Prior-expected information by adaptive cubature.

    Two evaluation modes:

    * ``"per-point"``: every new point gets its own adaptive cubature
      (memoised by exact coordinates).
    * ``"frozen"`` (default): after :meth:`prepare` an adaptive subdivision
      is built once for a reference grid over the design space, with all
      their information entries as one vector integrand, and its leaf nodes
      and weights are reused for every point. The expected information is
      then a smooth function of x and much cheaper to evaluate. Before
      ``prepare`` is called the provider works per point.
    """

    kind = "integral-ew"

    def __init__(self, model: ModelSpec, prior: BoxPrior, integrand: str = "core", mode: str = "frozen"):
        super().__init__(model)
        if prior.p != model.p:
            raise ValidationError(
                f"prior has {prior.p} coordinates, model has p={model.p}", key="parameters.prior"
            )
        if mode not in ("frozen", "per-point"):
            raise ValidationError(f"unknown integral mode {mode!r}", key="parameters.prior.mode")
        self.prior = prior
        self.integrand = integrand
        self.mode = mode
        self._cache: dict[bytes, np.ndarray] = {}
        self.budget_exceeded = False
        self.rule_nodes: np.ndarray | None = None  # full theta vectors
        self.rule_weights: np.ndarray | None = None  # cubature weight x density

    # frozen rule -------------------------------------------------------

    def prepare(self, space, max_reference: int = 512) -> None:
        """Build the frozen rule from a reference grid over ``space``."""
        if self.mode != "frozen" or self.rule_nodes is not None:
            return
        self.build_rule(reference_points(space, max_reference))

    def build_rule(self, points: np.ndarray) -> None:
        prior, m = self.prior, self.model
        act = prior.active
        if not np.any(act):
            self.rule_nodes = prior.lower[None].copy()
            self.rule_weights = np.ones(1)
            return
        X = predictor_rows(m, np.atleast_2d(points))  # (n, q, p)
        q = X.shape[1]
        iu = np.triu_indices(q)

        def f(nodes: np.ndarray) -> np.ndarray:
            theta = np.tile(prior.lower, (len(nodes), 1))
            theta[:, act] = nodes
            U = core_info(m, np.einsum("nqp,bp->bnq", X, theta))  # (b, n, q, q)
            return U[:, :, iu[0], iu[1]].reshape(len(nodes), -1) * prior.pdf(theta)[:, None]

        res = adaptive_cubature(
            f,
            prior.lower[act],
            prior.upper[act],
            prior.cubature_reltol,
            prior.cubature_max_evals,
            return_rule=True,
        )
        if res.budget_exceeded:
            self.budget_exceeded = True
            warnings.warn(
                f"cubature budget of {prior.cubature_max_evals} evaluations exceeded "
                "while building the integration rule",
                CubatureBudgetWarning,
                stacklevel=2,
            )
        theta = np.tile(prior.lower, (len(res.nodes), 1))
        theta[:, act] = res.nodes
        self.rule_nodes = theta
        self.rule_weights = res.weights * prior.pdf(theta)

    def _frozen_core(self, X: np.ndarray) -> np.ndarray:
        out = []
        step = max(1, 2_000_000 // len(self.rule_weights))
        for s in range(0, len(X), step):
            Xs = X[s : s + step]
            U = core_info(self.model, np.einsum("nqp,bp->nbq", Xs, self.rule_nodes))
            out.append(np.einsum("b,nbij->nij", self.rule_weights, U))
        return np.concatenate(out, axis=0)

    # evaluation --------------------------------------------------------

    def info(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.rule_nodes is not None:
            X = predictor_rows(self.model, points)
            return sandwich(X, self._frozen_core(X))
        out = np.empty((len(points), self.p, self.p))
        for i, x in enumerate(points):
            key = x.tobytes()
            F = self._cache.get(key)
            if F is None:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", CubatureBudgetWarning)
                    F = ew_info_integral(self.model, self.prior, x, self.integrand)
                if any(issubclass(w.category, CubatureBudgetWarning) for w in caught):
                    self.budget_exceeded = True
                self._cache[key] = F
            out[i] = F
        return out


def reference_points(space, max_points: int = 512) -> np.ndarray:
    """Grid over the design space: every discrete combination times an
    equally spaced grid on the continuous box, at most about ``max_points``."""
    combos = space.discrete_combinations() if space.d > space.k else [()]
    k = space.k
    if k == 0:
        return np.array(combos, dtype=float)
    per = max(2, min(9, int((max_points / len(combos)) ** (1.0 / k))))
    axes = [np.linspace(a, b, per) for a, b in zip(space.lower, space.upper)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    return np.array([np.concatenate([g, c]) for c in combos for g in grid])


def make_provider(model: ModelSpec, theta=None, prior: BoxPrior | None = None, sample=None) -> InfoProvider:
    given = [v is not None for v in (theta, prior, sample)]
    if sum(given) != 1:
        raise ValidationError("give exactly one of theta, prior, samples", key="parameters")
    if theta is not None:
        return LocalProvider(model, theta)
    if prior is not None:
        return IntegralEWProvider(model, prior)
    return SampleEWProvider(model, sample)
