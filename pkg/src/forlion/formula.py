"""Monomial predictor formulas.

Grammar (whitespace insignificant)::

    row       := "0" | term ("+" term)*
    term      := "1" | factor_pow ("*" factor_pow)*
    factor_pow:= IDENT ("^" UINT)?

A GLM formula has one row and yields a predictor vector h(x). An MLM
formula has one row per response category and yields a J x p model
matrix whose row j carries the coefficients of row j's terms; an empty
row (``"0"`` or blank) gives an all-zero predictor row.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormulaError
from .space import DesignSpace

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_UINT = re.compile(r"[0-9]+\Z")


@dataclass(frozen=True)
class PredictorFormula:
    """Exponent-vector representation of a predictor.

    Attributes:
        rows: per-row tuples of exponent vectors (one entry per factor).
        factor_names: factor names, in design-space order.
        multi: True for MLM (matrix valued), False for GLM (vector valued).
    """

    rows: tuple[tuple[tuple[int, ...], ...], ...]
    factor_names: tuple[str, ...]
    multi: bool = False

    @property
    def p(self) -> int:
        return sum(len(r) for r in self.rows)

    @property
    def J(self) -> int:
        return len(self.rows)

    @property
    def d(self) -> int:
        return len(self.factor_names)

    @property
    def exponents(self) -> np.ndarray:
        """(p, d) integer matrix of exponents in coefficient order."""
        terms = [t for r in self.rows for t in r]
        return np.array(terms, dtype=int).reshape(len(terms), self.d)

    @property
    def row_of_coef(self) -> np.ndarray:
        return np.array([j for j, r in enumerate(self.rows) for _ in r], dtype=int)

    def term_labels(self) -> list[str]:
        labels = []
        for j, r in enumerate(self.rows):
            for t in r:
                parts = [
                    n if e == 1 else f"{n}^{e}"
                    for n, e in zip(self.factor_names, t)
                    if e > 0
                ]
                lab = "*".join(parts) or "1"
                labels.append(f"{lab}:{j + 1}" if self.multi else lab)
        return labels


def _parse_term(text: str, names: Sequence[str], where: str) -> tuple[int, ...]:
    if text == "1":
        return (0,) * len(names)
    exps = [0] * len(names)
    for piece in text.split("*"):
        piece = piece.strip()
        if "^" in piece:
            name, _, power = piece.partition("^")
            name, power = name.strip(), power.strip()
            if not _UINT.match(power):
                raise FormulaError(f"{where}: bad exponent {power!r} in {text!r}")
            e = int(power)
            if e <= 0:
                raise FormulaError(f"{where}: exponent must be positive in {text!r}")
        else:
            name, e = piece, 1
        if not _IDENT.match(name):
            raise FormulaError(f"{where}: malformed factor {piece!r} in term {text!r}")
        if name not in names:
            raise FormulaError(f"{where}: unknown factor {name!r}")
        exps[names.index(name)] += e
    return tuple(exps)


def _parse_row(text: str, names: Sequence[str], where: str) -> tuple[tuple[int, ...], ...]:
    compact = "".join(text.split())
    if compact in ("", "0"):
        return ()
    terms: list[tuple[int, ...]] = []
    for raw in compact.split("+"):
        if not raw:
            raise FormulaError(f"{where}: empty term in {text!r}")
        t = _parse_term(raw, names, where)
        if t in terms:
            raise FormulaError(f"{where}: duplicate term {raw!r} in {text!r}")
        terms.append(t)
    return tuple(terms)


def parse_formula(
    text: str | Sequence[str], space: DesignSpace | Sequence[str], multi: bool | None = None
) -> PredictorFormula:
    """Parse one row (GLM) or a list of rows (MLM) into a :class:`PredictorFormula`.

    A plain string is a GLM formula; a list of strings is an MLM formula
    unless ``multi=False`` is given for a one-element list.
    """
    names = space.names if isinstance(space, DesignSpace) else list(space)
    if isinstance(text, str):
        texts, is_multi = [text], False if multi is None else multi
    else:
        texts = list(text)
        is_multi = True if multi is None else multi
        if not is_multi and len(texts) != 1:
            raise FormulaError("a GLM formula has exactly one row")
    rows = tuple(
        _parse_row(t, names, f"row {i + 1}" if is_multi else "formula")
        for i, t in enumerate(texts)
    )
    f = PredictorFormula(rows, tuple(names), is_multi)
    if f.p == 0:
        raise FormulaError("formula has no terms")
    return f


def _monomials(f: PredictorFormula, x: np.ndarray) -> np.ndarray:
    # x: (n, d) -> (n, p)
    E = f.exponents
    return np.prod(x[:, None, :] ** E[None, :, :], axis=2)


def eval_predictor(f: PredictorFormula, x) -> np.ndarray:
    """Model matrix at one point or a batch of points.

    Returns h(x) with shape (p,) for GLM, the J x p matrix for MLM; a
    leading batch axis is kept when ``x`` is 2-D.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    mono = _monomials(f, X)
    if f.multi:
        out = np.zeros((X.shape[0], f.J, f.p))
        out[:, f.row_of_coef, np.arange(f.p)] = mono
    else:
        out = mono
    return out[0] if single else out


def eval_predictor_grad(f: PredictorFormula, x) -> np.ndarray:
    """Derivatives of the model matrix with respect to each coordinate.

    Shape is (n, d, p) for GLM and (n, d, J, p) for MLM (batch axis dropped
    for a single point).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    E = f.exponents
    n, d = X.shape
    grads = np.zeros((n, d, f.p))
    for j in range(d):
        Ej = E.copy()
        coef = Ej[:, j].astype(float)
        Ej[:, j] = np.maximum(Ej[:, j] - 1, 0)
        grads[:, j, :] = coef[None, :] * np.prod(X[:, None, :] ** Ej[None, :, :], axis=2)
    if f.multi:
        out = np.zeros((n, d, f.J, f.p))
        out[:, :, f.row_of_coef, np.arange(f.p)] = grads
    else:
        out = grads
    return out[0] if single else out
