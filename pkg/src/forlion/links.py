"""Link functions: GLM information weights and MLM category probabilities."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, logsumexp, ndtr

from .errors import InfeasibleParameterError, ValidationError

GLM_LINKS = ("identity", "logit", "probit", "cloglog", "loglog", "cauchit", "log")
MLM_LINKS = ("baseline", "cumulative", "adjacent", "continuation")

_TINY = 1e-300
_LOG_2PI = np.log(2.0 * np.pi)


def _log_one_minus_exp_neg(t: np.ndarray) -> np.ndarray:
    # log(1 - exp(-t)) for t >= 0, accurate near 0 and at large t
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        small = t < 1e-8
        out = np.log(-np.expm1(-np.where(small, 1.0, t)))
        return np.where(small, np.log(np.where(small, t, 1.0)) - t / 2.0, out)


def glm_weight(link: str, eta) -> np.ndarray:
    """GLM information weight nu(eta) = (dmu/deta)^2 / Var(Y).

    Vectorised over ``eta``. Saturating tails return 0 instead of NaN.
    """
    eta = np.asarray(eta, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        if link == "identity":
            nu = np.ones_like(eta)
        elif link == "logit":
            nu = expit(eta) * expit(-eta)
        elif link == "probit":
            lognu = -(eta**2) - _LOG_2PI - log_ndtr(eta) - log_ndtr(-eta)
            nu = np.exp(lognu)
        elif link in ("cloglog", "loglog"):
            # mu = 1 - exp(-e^eta) (cloglog) or exp(-e^eta) (loglog); mu(1-mu) is
            # the same for both so the weights coincide
            t = np.exp(np.minimum(eta, 700.0))
            lognu = 2.0 * eta - t - _log_one_minus_exp_neg(t)
            nu = np.where(t > 745.0, 0.0, np.exp(lognu))
        elif link == "cauchit":
            tail = np.arctan2(1.0, np.abs(eta)) / np.pi
            nu = (np.pi * (1.0 + eta**2)) ** -2 / (tail * (1.0 - tail))
        elif link == "log":
            nu = np.exp(np.minimum(eta, 700.0))
        else:
            raise ValidationError(f"unknown GLM link {link!r}", key="model.link")
    nu = np.where(np.isfinite(nu) & (nu >= _TINY), nu, 0.0)
    return nu


def glm_mean(link: str, eta) -> np.ndarray:
    """Inverse link mu(eta)."""
    eta = np.asarray(eta, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        if link == "identity":
            return eta.copy()
        if link == "logit":
            return expit(eta)
        if link == "probit":
            return ndtr(eta)
        if link == "cloglog":
            return -np.expm1(-np.exp(eta))
        if link == "loglog":
            return np.exp(-np.exp(eta))
        if link == "cauchit":
            return 0.5 + np.arctan(eta) / np.pi
        if link == "log":
            return np.exp(eta)
    raise ValidationError(f"unknown GLM link {link!r}", key="model.link")


def mlm_probabilities(link: str, eta, J: int) -> np.ndarray:
    """Category probabilities from the first J-1 linear predictors.

    ``eta`` has shape (..., m) with m >= J-1; extra trailing entries are
    ignored. Returns an array of shape (..., J).

    Raises:
        InfeasibleParameterError: cumulative link with non-increasing
            cumulative logits.
    """
    eta = np.asarray(eta, dtype=float)[..., : J - 1]
    zeros = np.zeros(eta.shape[:-1] + (1,))
    if link == "baseline":
        logits = np.concatenate([eta, zeros], axis=-1)
        return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
    if link == "cumulative":
        if J > 2 and np.any(np.diff(eta, axis=-1) <= 0):
            raise InfeasibleParameterError(
                "cumulative link needs strictly increasing cumulative logits; got "
                f"{np.array2string(eta, precision=6)}"
            )
        gam = np.concatenate([expit(eta), np.ones_like(zeros)], axis=-1)
        pi = np.diff(gam, axis=-1, prepend=0.0)
        # upper tail computed directly to keep precision when gamma ~ 1
        pi[..., -1] = expit(-eta[..., -1])
        return pi
    if link == "adjacent":
        # log(pi_j / pi_J) = sum_{l >= j} eta_l
        tail = np.flip(np.cumsum(np.flip(eta, axis=-1), axis=-1), axis=-1)
        logits = np.concatenate([tail, zeros], axis=-1)
        return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
    if link == "continuation":
        log_stop = log_expit(eta)
        log_go = log_expit(-eta)
        reach = np.concatenate([zeros, np.cumsum(log_go, axis=-1)], axis=-1)
        logpi = reach.copy()
        logpi[..., :-1] += log_stop
        return np.exp(logpi)
    raise ValidationError(f"unknown MLM link {link!r}", key="model.link")


def mlm_linear_predictors(link: str, pi) -> np.ndarray:
    """Forward link: the J-1 linear predictors implied by probabilities ``pi``."""
    pi = np.asarray(pi, dtype=float)
    J = pi.shape[-1]
    logpi = np.log(pi)
    if link == "baseline":
        return logpi[..., :-1] - logpi[..., -1:]
    if link == "cumulative":
        cum = np.cumsum(pi, axis=-1)[..., :-1]
        upper = np.flip(np.cumsum(np.flip(pi, axis=-1), axis=-1), axis=-1)[..., 1:]
        return np.log(cum) - np.log(upper)
    if link == "adjacent":
        return logpi[..., :-1] - logpi[..., 1:]
    if link == "continuation":
        upper = np.flip(np.cumsum(np.flip(pi, axis=-1), axis=-1), axis=-1)[..., 1:]
        return logpi[..., : J - 1] - np.log(upper)
    raise ValidationError(f"unknown MLM link {link!r}", key="model.link")


def mlm_jacobian(link: str, eta, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and d pi_{1:J-1} / d eta_{1:J-1}.

    Analytic for baseline and continuation links, central differences for
    cumulative and adjacent. Returns ``(pi, D)`` with D of shape
    (..., J-1, J-1), D[..., i, l] = d pi_i / d eta_l.
    """
    eta = np.asarray(eta, dtype=float)[..., : J - 1]
    pi = mlm_probabilities(link, eta, J)
    q = J - 1
    if link == "baseline":
        pr = pi[..., :q]
        D = -pr[..., :, None] * pr[..., None, :]
        idx = np.arange(q)
        D[..., idx, idx] += pr
        return pi, D
    if link == "continuation":
        s = expit(eta)
        pr = pi[..., :q]
        lower = np.tril(np.ones((q, q)), k=-1)
        D = -pr[..., :, None] * s[..., None, :] * lower
        idx = np.arange(q)
        D[..., idx, idx] = pr * (1.0 - s)
        return pi, D
    D = np.empty(eta.shape[:-1] + (q, q))
    for l in range(q):
        h = 1e-6 * np.maximum(1.0, np.abs(eta[..., l]))
        up, dn = eta.copy(), eta.copy()
        up[..., l] += h
        dn[..., l] -= h
        diff = mlm_probabilities(link, up, J) - mlm_probabilities(link, dn, J)
        D[..., :, l] = diff[..., :q] / (2.0 * h[..., None])
    return pi, D
