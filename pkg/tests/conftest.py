from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from forlion import (
    DesignSpace,
    Factor,
    ForLionConfig,
    LocalProvider,
    ModelSpec,
    forlion_optimize,
    parse_formula,
)

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

FIXTURES = Path(__file__).parent / "fixtures"

# house flies: continuation-ratio npo model, J=3, radiation dose in [0, 200]
HF_THETA = np.array([-1.935, -0.02642, 0.0003174, -9.159, 0.06386])
HF_POINTS = np.array([[0.0], [103.53], [149.2116]])
HF_WEIGHTS = np.array([0.2027, 0.3981, 0.3992])
HF_DET = 54016299.0

# electrostatic discharge: logistic model, Vol in [25, 45] and four binary factors
ESD_THETA = np.array([0.35, 1.50, -0.2, -0.15, 0.25, 0.4, -7.5])
ESD_LOWER = np.array([0.25, 1.0, -0.3, -0.3, 0.1, 0.35, -8.0])
ESD_UPPER = np.array([0.45, 2.0, -0.1, 0.0, 0.4, 0.45, -7.0])
ESD_DET = 1.256089e-5
ESD_EW_DET = 4.372488e-6
ESD_SEW_DET = 4.038136e-6


def hf_space() -> DesignSpace:
    return DesignSpace((Factor.continuous("x", 0, 200),))


def hf_model() -> ModelSpec:
    sp = hf_space()
    return ModelSpec("mlm", "continuation", parse_formula(["1 + x + x^2", "1 + x", ""], sp), 3)


def esd_space() -> DesignSpace:
    return DesignSpace(
        (Factor.continuous("Vol", 25, 45),)
        + tuple(Factor.discrete(n, (-1, 1)) for n in ("LotA", "LotB", "ESD", "Pul"))
    )


def esd_model() -> ModelSpec:
    return ModelSpec("glm", "logit", parse_formula("Vol + LotA + LotB + ESD + Pul + ESD*Pul + 1", esd_space()))


HF_CONFIG = ForLionConfig(
    delta0=1e-6, epsilon=1e-12, reltol=1e-8, delta=0.15, maxit=1000,
    random=True, nram=3, random_initial=True, nram_initial=3, seed=123,
)
ESD_CONFIG = ForLionConfig(delta0=1e-6, reltol=1e-5, delta=0.1, maxit=1000, glm_adapted=True, seed=123)


@pytest.fixture(scope="session")
def hf_provider():
    return LocalProvider(hf_model(), HF_THETA)


@pytest.fixture(scope="session")
def esd_provider():
    return LocalProvider(esd_model(), ESD_THETA)


@pytest.fixture(scope="session")
def hf_result(hf_provider):
    return forlion_optimize(hf_space(), hf_provider, HF_CONFIG)


@pytest.fixture(scope="session")
def esd_result(esd_provider):
    return forlion_optimize(esd_space(), esd_provider, ESD_CONFIG)


def verification_grid(space: DesignSpace, step) -> np.ndarray:
    """Continuous grid at the given step crossed with every discrete combination."""
    from forlion.oracle import candidate_grid

    return candidate_grid(space, step)


# acceptance verdicts, printed once at the end of the session
CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        verdict, title = CRITERIA[n]
        terminalreporter.write_line(f"{verdict} criterion {n:2d}: {title}")
