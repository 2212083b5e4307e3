"""Brute-force reference computations for testing.

Nothing in the production path imports this module. Everything here is
deliberately simple and slow: information matrices from finite differences
of the log-likelihood, designs from exhaustive or grid searches, integrals
from tensor Gauss-Legendre rules and plain Monte Carlo.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre
from scipy.stats import norm

from .design import ApproximateDesign, log_det
from .errors import InfeasibleParameterError, SingularDesignError, ValidationError
from .formula import eval_predictor
from .liftone import LiftOneProblem, liftone_optimize


@dataclass(frozen=True)
class OracleConfig:
    fd_step: float = 1e-4
    grid_resolution: float | tuple[float, ...] = 0.1

    def __post_init__(self):
        steps = np.atleast_1d(self.grid_resolution)
        if self.fd_step <= 0 or np.any(steps <= 0):
            raise ValidationError("oracle steps must be positive")


# --------------------------------------------------------------------------
# Fisher information from the log-likelihood


def _binary_mean(link: str, eta: float) -> float:
    if link == "logit":
        return 1.0 / (1.0 + np.exp(-eta))
    if link == "probit":
        return float(norm.cdf(eta))
    if link == "cloglog":
        return 1.0 - np.exp(-np.exp(eta))
    if link == "loglog":
        return np.exp(-np.exp(eta))
    if link == "cauchit":
        return 0.5 + np.arctan(eta) / np.pi
    raise ValidationError(f"no binary likelihood for link {link!r}")


def _glm_expected_loglik(link: str, eta0: float):
    """theta -> E_{theta0} log f(y; theta) as a function of eta = h'theta."""
    if link == "identity":
        return lambda eta: -0.5 * (eta0 - eta) ** 2  # sigma^2 = 1, constant dropped
    if link == "log":
        mu0 = np.exp(eta0)
        return lambda eta: mu0 * eta - np.exp(eta)
    mu0 = _binary_mean(link, eta0)

    def ell(eta: float) -> float:
        mu = _binary_mean(link, eta)
        return mu0 * np.log(mu) + (1.0 - mu0) * np.log1p(-mu)

    return ell


def _categorical_probs(link: str, eta: np.ndarray) -> np.ndarray:
    """Category probabilities written out one category at a time."""
    J = eta.size + 1
    if link == "baseline":
        e = np.append(np.exp(eta), 1.0)
        return e / e.sum()
    if link == "adjacent":
        # pi_j / pi_{j+1} = exp(eta_j)
        r = np.ones(J)
        for j in range(J - 2, -1, -1):
            r[j] = r[j + 1] * np.exp(eta[j])
        return r / r.sum()
    if link == "cumulative":
        if np.any(np.diff(eta) <= 0):
            raise InfeasibleParameterError("cumulative logits must increase")
        gam = np.append(1.0 / (1.0 + np.exp(-eta)), 1.0)
        return np.diff(np.concatenate([[0.0], gam]))
    if link == "continuation":
        pi = np.empty(J)
        rest = 1.0
        for j in range(J - 1):
            stop = 1.0 / (1.0 + np.exp(-eta[j]))
            pi[j] = rest * stop
            rest *= 1.0 - stop
        pi[-1] = rest
        return pi
    raise ValidationError(f"no categorical likelihood for link {link!r}")


def fd_fisher(m, theta, x, config: OracleConfig | None = None) -> np.ndarray:
    """Negative Hessian of the expected log-likelihood at theta.

    The outcome expectation is taken in closed form under theta itself and
    the Hessian by central second differences. The step for coefficient i
    is ``fd_step`` divided by the largest |model-matrix entry| of that
    coefficient, so every step moves the linear predictors by about
    ``fd_step``.

    Raises:
        InfeasibleParameterError: theta (or a perturbed theta) gives no
            valid probability model.
    """
    config = config or OracleConfig()
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(eval_predictor(m.formula, x))  # (q, p)
    p = theta.size
    if m.is_glm:
        h = X[0]
        G0 = _glm_expected_loglik(m.link, float(h @ theta))

        def G(t):
            return G0(float(h @ t))

    else:
        eta0 = X @ theta
        pi0 = _categorical_probs(m.link, eta0[: m.J - 1])
        if np.any(pi0 <= 0):
            raise InfeasibleParameterError("zero category probability at theta")

        def G(t):
            pi = _categorical_probs(m.link, (X @ t)[: m.J - 1])
            return float(pi0 @ np.log(pi))

    scale = np.maximum(np.max(np.abs(X), axis=0), 1.0)
    step = config.fd_step / scale
    E = np.diag(step)
    H = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            if i == j:
                v = (G(theta + E[i]) - 2.0 * G(theta) + G(theta - E[i])) / step[i] ** 2
            else:
                v = (
                    G(theta + E[i] + E[j])
                    - G(theta + E[i] - E[j])
                    - G(theta - E[i] + E[j])
                    + G(theta - E[i] - E[j])
                ) / (4.0 * step[i] * step[j])
            H[i, j] = H[j, i] = v
    return -0.5 * (H + H.T)


# --------------------------------------------------------------------------
# designs


def candidate_grid(space, resolution) -> np.ndarray:
    """Every discrete combination times a regular grid on the continuous box."""
    combos = space.discrete_combinations() if space.d > space.k else [()]
    k = space.k
    if k == 0:
        return np.array(combos, dtype=float)
    res = np.broadcast_to(np.atleast_1d(np.asarray(resolution, dtype=float)), (k,))
    axes = []
    for a, b, s in zip(space.lower, space.upper, res):
        n = int(round((b - a) / s))
        axes.append(np.linspace(a, b, n + 1))
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    return np.array([np.concatenate([g, c]) for c in combos for g in grid])


def grid_fedorov(provider, space, grid_resolution=0.1, reltol: float = 1e-12) -> ApproximateDesign:
    """Discretise the continuous factors, then optimise the weights over the
    whole grid with lift-one.

    Raises:
        SingularDesignError: the information is singular on the whole grid.
    """
    pts = candidate_grid(space, grid_resolution)
    F = provider.info(pts)
    p = F.shape[1]
    w = np.full(len(pts), 1.0 / len(pts))
    if log_det(F.mean(axis=0)) == -np.inf:
        raise SingularDesignError("information singular on the whole candidate grid")
    # multiplicative warm start (w_i <- w_i d_i / p), then lift-one on the full grid
    for _ in range(200):
        M = np.einsum("n,nij->ij", w, F)
        d = np.trace(np.linalg.solve(M[None], F), axis1=1, axis2=2)
        w = w * d / p
        w /= w.sum()
    w = np.where(w < 1e-6 * w.max(), 0.0, w)
    w /= w.sum()
    w, _ = liftone_optimize(LiftOneProblem(F, start=w, reltol=reltol, maxit=1000, polish=True))
    keep = w > 0
    return ApproximateDesign(pts[keep], w[keep] / w[keep].sum())


def _compositions(n: int, m: int) -> np.ndarray:
    """All nonnegative integer vectors of length m summing to n (stars and bars)."""
    if m == 1:
        return np.array([[n]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(n + m - 1), m - 1)), dtype=np.int64).reshape(-1, m - 1)
    edges = np.column_stack([np.full(len(bars), -1), bars, np.full(len(bars), n + m - 1)])
    return np.diff(edges, axis=1) - 1


def _batch_log_det(F: np.ndarray, W: np.ndarray, chunk: int = 200_000) -> np.ndarray:
    out = np.empty(len(W))
    for s in range(0, len(W), chunk):
        M = np.einsum("bn,nij->bij", W[s : s + chunk], F)
        sign, ld = np.linalg.slogdet(M)
        out[s : s + chunk] = np.where(sign > 0, ld, -np.inf)
    return out


def simplex_grid_search(matrices, step: float = 0.005) -> tuple[np.ndarray, float]:
    """Best log det over all weight vectors on the simplex lattice with the given step."""
    F = np.asarray(matrices, dtype=float)
    n = int(round(1.0 / step))
    W = _compositions(n, F.shape[0]) / n
    ld = _batch_log_det(F, W)
    i = int(np.argmax(ld))
    return W[i], float(ld[i])


def exhaustive_counts(matrices, weights, N: int) -> tuple[np.ndarray, float]:
    """Best log det of sum (n_i / N) F_i over all count vectors with sum N
    and n_i >= floor(N w_i)."""
    F = np.asarray(matrices, dtype=float)
    base = np.floor(N * np.asarray(weights) + 1e-9).astype(int)
    rest = N - int(base.sum())
    m = len(base)
    best_n, best = None, -np.inf
    for c in itertools.combinations_with_replacement(range(m), rest):
        n = base + np.bincount(np.array(c, dtype=int), minlength=m)
        ld = log_det(np.einsum("n,nij->ij", n / N, F))
        if ld > best:
            best_n, best = n, ld
    return best_n, best


# --------------------------------------------------------------------------
# integrals


def tensor_gauss_legendre(f, lower, upper, n: int = 200) -> np.ndarray:
    """Tensor-product Gauss-Legendre rule with n nodes per axis."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    x, w = roots_legendre(n)
    half = 0.5 * (upper - lower)
    mid = 0.5 * (upper + lower)
    nodes = [mid[i] + half[i] * x for i in range(lower.size)]
    weights = [half[i] * w for i in range(lower.size)]
    grid = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1).reshape(-1, lower.size)
    wt = np.ones(1)
    for wi in weights:
        wt = np.multiply.outer(wt, wi).ravel()
    vals = np.asarray(f(grid), dtype=float)
    return np.tensordot(wt, vals, axes=(0, 0))


def monte_carlo_ew_info(
    m, prior, x, n: int, rng: np.random.Generator, chunk: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean of F(x, theta) over prior draws, with standard errors.

    Draws are uniform on the box and weighted by the prior density times the
    box volume.
    """
    from .model import core_info, predictor_rows  # local: keeps the import graph one-way

    lo, hi = prior.lower, prior.upper
    act = lo < hi
    vol = float(np.prod((hi - lo)[act]))
    X = predictor_rows(m, np.asarray(x, dtype=float))[0]  # (q, p)
    p = X.shape[1]
    s1 = np.zeros((p, p))
    s2 = np.zeros((p, p))
    done = 0
    while done < n:
        b = min(chunk, n - done)
        theta = np.tile(lo, (b, 1))
        theta[:, act] = rng.uniform(lo[act], hi[act], size=(b, int(act.sum())))
        U = core_info(m, theta @ X.T)  # (b, q, q)
        F = np.einsum("qi,bqr,rj->bij", X, U, X) * (prior.pdf(theta) * vol)[:, None, None]
        s1 += F.sum(axis=0)
        s2 += (F**2).sum(axis=0)
        done += b
    mean = s1 / n
    var = (s2 - n * mean**2) / (n - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / n)
