"""Factors and design spaces with continuous and discrete coordinates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Factor:
    """One experimental factor.

    A continuous factor carries ``lower``/``upper`` bounds, a discrete
    factor carries a tuple of at least two distinct ``levels``.
    """

    name: str
    kind: str  # "continuous" | "discrete"
    lower: float | None = None
    upper: float | None = None
    levels: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "continuous":
            if self.lower is None or self.upper is None:
                raise ValidationError(f"factor {self.name!r} needs lower and upper bounds")
            if not float(self.lower) < float(self.upper):
                raise ValidationError(
                    f"factor {self.name!r}: lower ({self.lower}) must be < upper ({self.upper})"
                )
            object.__setattr__(self, "lower", float(self.lower))
            object.__setattr__(self, "upper", float(self.upper))
        elif self.kind == "discrete":
            if self.levels is None:
                raise ValidationError(f"factor {self.name!r} needs a list of levels")
            levels = tuple(float(v) for v in self.levels)
            if len(set(levels)) < 2:
                raise ValidationError(
                    f"factor {self.name!r}: a discrete factor needs at least 2 distinct levels"
                )
            object.__setattr__(self, "levels", levels)
        else:
            raise ValidationError(f"factor {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def continuous(cls, name: str, lower: float, upper: float) -> Factor:
        return cls(name, "continuous", lower=lower, upper=upper)

    @classmethod
    def discrete(cls, name: str, levels: Sequence[float]) -> Factor:
        return cls(name, "discrete", levels=tuple(levels))

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"


@dataclass(frozen=True)
class DesignSpace:
    """Ordered factors, continuous ones first.

    ``fixed_discrete_list`` optionally restricts the discrete part to an
    explicit list of level combinations instead of the full product.
    """

    factors: tuple[Factor, ...]
    fixed_discrete_list: tuple[tuple[float, ...], ...] | None = field(default=None)

    def __post_init__(self):
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise ValidationError("design space needs at least one factor")
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate factor names in {names}")
        seen_discrete = False
        for f in factors:
            if f.is_continuous and seen_discrete:
                raise ValidationError(
                    f"continuous factor {f.name!r} declared after a discrete factor; "
                    "continuous factors must come first"
                )
            seen_discrete |= not f.is_continuous
        if self.fixed_discrete_list is not None:
            disc = self.discrete_factors
            combos = []
            for combo in self.fixed_discrete_list:
                combo = tuple(float(v) for v in combo)
                if len(combo) != len(disc):
                    raise ValidationError(
                        f"discrete combination {combo} has {len(combo)} entries, "
                        f"expected {len(disc)}"
                    )
                for f, v in zip(disc, combo):
                    if v not in f.levels:
                        raise ValidationError(
                            f"discrete combination {combo}: {v} is not a level of {f.name!r}"
                        )
                combos.append(combo)
            if not combos:
                raise ValidationError("fixed_discrete_list is empty")
            object.__setattr__(self, "fixed_discrete_list", tuple(combos))

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def k(self) -> int:
        """Number of continuous factors."""
        return sum(f.is_continuous for f in self.factors)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.factors]

    @property
    def continuous_factors(self) -> tuple[Factor, ...]:
        return self.factors[: self.k]

    @property
    def discrete_factors(self) -> tuple[Factor, ...]:
        return self.factors[self.k :]

    @property
    def lower(self) -> np.ndarray:
        return np.array([f.lower for f in self.continuous_factors], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([f.upper for f in self.continuous_factors], dtype=float)

    def discrete_combinations(self) -> list[tuple[float, ...]]:
        if self.fixed_discrete_list is not None:
            return list(self.fixed_discrete_list)
        return list(itertools.product(*(f.levels for f in self.discrete_factors)))

    def contains(self, x: Sequence[float], atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            return False
        k = self.k
        if np.any(x[:k] < self.lower - atol) or np.any(x[:k] > self.upper + atol):
            return False
        return tuple(x[k:]) in set(self.discrete_combinations()) if self.d > k else True

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Uniform random points: box-uniform continuous part, uniform level choice."""
        out = np.empty((n, self.d))
        k = self.k
        if k:
            out[:, :k] = rng.uniform(self.lower, self.upper, size=(n, k))
        if self.d > k:
            if self.fixed_discrete_list is not None:
                combos = np.array(self.fixed_discrete_list)
                out[:, k:] = combos[rng.integers(len(combos), size=n)]
            else:
                for j, f in enumerate(self.discrete_factors):
                    out[:, k + j] = np.asarray(f.levels)[rng.integers(len(f.levels), size=n)]
        return out
