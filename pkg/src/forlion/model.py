"""Model specifications and per-point Fisher information matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProbabilityError, ValidationError
from .formula import PredictorFormula, eval_predictor
from .links import GLM_LINKS, MLM_LINKS, glm_weight, mlm_jacobian

_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class ModelSpec:
    """A GLM or multinomial logit model with a monomial predictor.

    For ``family="glm"`` the formula has a single row; for ``family="mlm"``
    it has exactly ``J`` rows (the last one is usually empty).
    """

    family: str
    link: str
    formula: PredictorFormula
    J: int = 2

    def __post_init__(self):
        if self.family == "glm":
            if self.link not in GLM_LINKS:
                raise ValidationError(f"unknown GLM link {self.link!r}", key="model.link")
            if self.formula.multi or self.formula.J != 1:
                raise ValidationError("a GLM needs a single-row formula", key="model.formula")
        elif self.family == "mlm":
            if self.link not in MLM_LINKS:
                raise ValidationError(f"unknown MLM link {self.link!r}", key="model.link")
            if self.J < 2:
                raise ValidationError("J must be at least 2", key="model.J")
            if self.formula.J != self.J:
                raise ValidationError(
                    f"MLM formula has {self.formula.J} rows but J={self.J}", key="model.formula"
                )
        else:
            raise ValidationError(f"unknown family {self.family!r}", key="model.family")

    @property
    def p(self) -> int:
        return self.formula.p

    @property
    def is_glm(self) -> bool:
        return self.family == "glm"

    def predictor(self, x) -> np.ndarray:
        return eval_predictor(self.formula, x)

    def info(self, theta, x) -> np.ndarray:
        """Fisher information at one point (p x p) or a batch (n x p x p)."""
        if self.is_glm:
            return fisher_info_glm(self, theta, x)
        return fisher_info_mlm(self, theta, x)


def predictor_rows(m: ModelSpec, x) -> np.ndarray:
    """Model matrix rows that carry information: (n, q, p) with q = 1 (GLM) or J-1."""
    X = m.predictor(np.atleast_2d(np.asarray(x, dtype=float)))
    if m.is_glm:
        return X[:, None, :]
    return X[:, : m.J - 1, :]


def core_info(m: ModelSpec, eta: np.ndarray) -> np.ndarray:
    """Information of the linear predictors, U(eta), shape (..., q, q).

    The point information is X' U(X theta) X, where X holds the first q
    model-matrix rows. For a GLM, U is the scalar weight nu(eta); for an
    MLM it is D' Sigma^{-1} D with D = d pi_{1:J-1} / d eta_{1:J-1} and
    Sigma the covariance of the first J-1 category indicators.
    """
    eta = np.asarray(eta, dtype=float)
    if m.is_glm:
        return glm_weight(m.link, eta[..., 0])[..., None, None]
    J, q = m.J, m.J - 1
    pi, D = mlm_jacobian(m.link, eta, J)
    if np.any(pi < _PROB_FLOOR) or not np.all(np.isfinite(pi)):
        bad = np.argwhere(~(pi >= _PROB_FLOOR))[0]
        raise DegenerateProbabilityError(
            f"category probability {pi[tuple(bad)]:.3g} at the simplex boundary; "
            "the multinomial covariance is singular"
        )
    # inverse of diag(pi') - pi' pi'^T is diag(1/pi') + 11^T / pi_J
    U = np.einsum("...ki,...kl->...il", D / pi[..., :q, None], D)
    g = D.sum(axis=-2)
    U += g[..., :, None] * g[..., None, :] / pi[..., -1, None, None]
    return 0.5 * (U + np.swapaxes(U, -1, -2))


def sandwich(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """X' U X batched over the leading axis."""
    F = np.einsum("nqi,nqr,nrj->nij", X, U, X)
    return 0.5 * (F + np.swapaxes(F, 1, 2))


def fisher_info_glm(m: ModelSpec, theta, x) -> np.ndarray:
    """nu(h(x)'theta) h(x) h(x)' for one point or a batch of points."""
    if not m.is_glm:
        raise ValidationError("fisher_info_glm needs a GLM", key="model.family")
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    H = np.atleast_2d(m.predictor(x))
    nu = glm_weight(m.link, H @ theta)
    F = nu[:, None, None] * H[:, :, None] * H[:, None, :]
    return F[0] if x.ndim == 1 else F


def fisher_info_mlm(m: ModelSpec, theta, x) -> np.ndarray:
    """G' Sigma^{-1} G with G = d pi_{1:J-1} / d theta at one point or a batch."""
    if m.is_glm:
        raise ValidationError("fisher_info_mlm needs an MLM", key="model.family")
    x = np.asarray(x, dtype=float)
    X = predictor_rows(m, x)
    U = core_info(m, X @ np.asarray(theta, dtype=float))
    F = sandwich(X, U)
    return F[0] if x.ndim == 1 else F
