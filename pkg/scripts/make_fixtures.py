"""Regenerate the parameter-sample fixtures under tests/fixtures.

* house_flies_bootstrap.csv: 1000 bootstrap refits of the continuation-ratio
  model. Each replicate redraws 500 pupae per dose from the observed
  category frequencies and refits the two stopping-ratio logits by IRLS.
* esd_prior_sample.csv: 1000 draws from the uniform box prior of the
  electrostatic-discharge example.

Run from the repository root: python3 scripts/make_fixtures.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from forlion import BoxPrior, write_parameter_sample

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

DOSES = np.array([80.0, 100.0, 120.0, 140.0, 160.0, 180.0, 200.0])
# unopened, opened but died, emerged (out of 500 per dose)
COUNTS = np.array([
    [62, 5, 433], [94, 24, 382], [179, 60, 261], [335, 80, 85],
    [432, 46, 22], [487, 11, 2], [498, 2, 0],
])
FLY_NAMES = ["1:1", "x:1", "x^2:1", "1:2", "x:2"]

ESD_NAMES = ["Vol", "LotA", "LotB", "ESD", "Pul", "ESD*Pul", "1"]
ESD_LOWER = [0.25, 1.0, -0.3, -0.3, 0.1, 0.35, -8.0]
ESD_UPPER = [0.45, 2.0, -0.1, 0.0, 0.4, 0.45, -7.0]


def logistic_irls(X: np.ndarray, y: np.ndarray, n: np.ndarray, tol: float = 1e-12, maxit: int = 100) -> np.ndarray:
    """Binomial logit MLE for y successes out of n, by IRLS on standardised columns."""
    keep = n > 0
    X, y, n = X[keep], y[keep], n[keep]
    scale = np.abs(X).max(axis=0)
    Z = X / scale
    beta = np.zeros(Z.shape[1])
    for _ in range(maxit):
        eta = Z @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        W = n * mu * (1.0 - mu)
        step = np.linalg.solve(Z.T @ (W[:, None] * Z), Z.T @ (y - n * mu))
        beta = beta + step
        if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(beta))):
            break
    return beta / scale


def fit_continuation(counts: np.ndarray) -> np.ndarray:
    """(b10, b11, b12, b20, b21): logit P(Y=1) on (1, x, x^2), logit P(Y=2 | Y>=2) on (1, x)."""
    X1 = np.column_stack([np.ones_like(DOSES), DOSES, DOSES**2])
    b1 = logistic_irls(X1, counts[:, 0], counts.sum(axis=1))
    X2 = np.column_stack([np.ones_like(DOSES), DOSES])
    b2 = logistic_irls(X2, counts[:, 1], counts[:, 1] + counts[:, 2])
    return np.concatenate([b1, b2])


def house_flies_bootstrap(B: int = 1000, seed: int = 2024) -> np.ndarray:
    rng = np.random.default_rng(seed)
    probs = COUNTS / COUNTS.sum(axis=1, keepdims=True)
    out = np.empty((B, 5))
    for b in range(B):
        draw = np.array([rng.multinomial(500, p) for p in probs])
        out[b] = fit_continuation(draw)
    return out


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    write_parameter_sample(OUT / "house_flies_bootstrap.csv", house_flies_bootstrap(), FLY_NAMES)
    prior = BoxPrior(ESD_LOWER, ESD_UPPER)
    write_parameter_sample(OUT / "esd_prior_sample.csv", prior.sample(np.random.default_rng(2024), 1000), ESD_NAMES)
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
