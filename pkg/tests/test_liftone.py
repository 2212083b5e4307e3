from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forlion import LiftOneProblem, ValidationError, liftone_optimize, maximize_along_path
from forlion.design import log_det
from forlion.errors import SingularDesignError
from forlion.liftone import lift_path
from forlion.oracle import simplex_grid_search

from conftest import HF_POINTS, HF_WEIGHTS


def _ld(F, w):
    return log_det(np.einsum("n,nij->ij", w, F))


def _random_problem(seed: int):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 4))
    m = int(rng.integers(p, 5))
    F = []
    for _ in range(m):
        r = int(rng.integers(1, p + 1))
        A = rng.normal(size=(p, r))
        F.append(A @ A.T)
    F = np.array(F)
    if _ld(F, np.full(m, 1.0 / m)) == -np.inf:
        return None
    return F


def test_lift_path_examples():
    w = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(lift_path(w, 1, 0.3), w)
    out = lift_path(w, 1, 0.0)
    np.testing.assert_allclose(out, [0.2 / 0.7, 0.0, 0.5 / 0.7])
    np.testing.assert_allclose(lift_path([0.5, 0.5], 0, 0.2), [0.2, 0.8])
    with pytest.raises(ValidationError):
        lift_path([1.0, 0.0], 0, 0.5)


def test_saturated_path_optimum_is_uniform():
    p = 3
    F = np.array([np.outer(e, e) for e in np.eye(p) * [1.0, 4.0, 9.0]])
    w = np.array([0.5, 0.3, 0.2])
    for i in range(p):
        z, _ = maximize_along_path(F, w, i)
        # det is proportional to w_i * (1 - w_i)^(p-1): maximised at 1/p
        assert z == pytest.approx(1.0 / p, abs=1e-8)


def test_scalar_path_goes_to_larger_information():
    F = np.array([[[2.0]], [[1.0]]])
    z, ld = maximize_along_path(F, np.array([0.5, 0.5]), 0)
    assert z == pytest.approx(1.0, abs=1e-9)
    assert ld == pytest.approx(np.log(2.0))


def test_modes_agree_on_house_flies_candidates(hf_provider):
    F = hf_provider.info(np.array([[0.0], [60.0], [103.53], [149.2116], [200.0]]))
    w = np.array([0.3, 0.1, 0.25, 0.25, 0.1])
    for i in range(5):
        z_log, ld_log = maximize_along_path(F, w, i, mode="log")
        z_poly, ld_poly = maximize_along_path(F, w, i, mode="poly")
        assert z_log == pytest.approx(z_poly, abs=1e-6)
        assert ld_log == pytest.approx(ld_poly, rel=1e-10)


def test_path_singular_everywhere():
    F = np.array([np.diag([1.0, 0.0]), np.diag([1.0, 0.0])])
    with pytest.raises(SingularDesignError):
        maximize_along_path(F, np.array([0.5, 0.5]), 0)


@pytest.mark.parametrize("mode", ["log", "poly"])
def test_saturated_design_gets_uniform_weights(mode):
    rng = np.random.default_rng(3)
    p = 4
    vecs = rng.normal(size=(p, p))
    F = np.array([np.outer(v, v) for v in vecs])
    w, _ = liftone_optimize(LiftOneProblem(F, start=rng.dirichlet(np.ones(p)), reltol=1e-12, maxit=500, mode=mode))
    np.testing.assert_allclose(w, 0.25, atol=1e-6)


def test_house_flies_weights(hf_provider):
    F = hf_provider.info(HF_POINTS)
    w, ld = liftone_optimize(LiftOneProblem(F, reltol=1e-10, maxit=500))
    np.testing.assert_allclose(w, HF_WEIGHTS, atol=2e-3)


@pytest.mark.parametrize("polish", [False, True])
def test_output_is_fixed_point(hf_provider, polish):
    F = hf_provider.info(np.array([[0.0], [50.0], [103.53], [149.2116], [180.0], [200.0]]))
    reltol = 1e-10
    w, ld = liftone_optimize(LiftOneProblem(F, reltol=reltol, maxit=1000, polish=polish))
    for i in range(len(w)):
        if w[i] >= 1.0:
            continue
        _, ld_i = maximize_along_path(F, w, i)
        assert ld_i - ld <= max(reltol * abs(ld), 1e-9)


@given(st.integers(0, 100_000))
def test_sweeps_never_decrease_log_det(seed):
    F = _random_problem(seed)
    if F is None:
        return
    m = len(F)
    prev = _ld(F, np.full(m, 1.0 / m))
    for k in range(1, 6):
        _, ld = liftone_optimize(LiftOneProblem(F, reltol=1e-300, maxit=k, epsilon=0.0))
        assert ld >= prev - 1e-12 * max(1.0, abs(prev))
        prev = ld


@settings(max_examples=20)
@given(st.integers(0, 100_000))
def test_matches_simplex_grid_oracle(seed):
    F = _random_problem(seed)
    if F is None:
        return
    _, ld = liftone_optimize(LiftOneProblem(F, reltol=1e-10, maxit=500, polish=True))
    _, grid_ld = simplex_grid_search(F, step=0.005)
    assert np.exp(ld) >= np.exp(grid_ld) - 1e-6


def test_deterministic_given_seed(hf_provider):
    F = hf_provider.info(np.linspace(0, 200, 7)[:, None])
    prob = dict(reltol=1e-8, maxit=200, random_order=True, nram=3, seed=11)
    a = liftone_optimize(LiftOneProblem(F, **prob))
    b = liftone_optimize(LiftOneProblem(F, **prob))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_small_weights_snap_to_zero():
    F = np.array([np.eye(2), np.eye(2) * 1e-9, np.diag([2.0, 2.0])])
    w, _ = liftone_optimize(LiftOneProblem(F, reltol=1e-12, maxit=500, epsilon=1e-6))
    assert w[1] == 0.0 and w.sum() == pytest.approx(1.0)


def test_problem_validation():
    with pytest.raises(ValidationError):
        LiftOneProblem(np.ones((2, 2)))
    with pytest.raises(ValidationError):
        LiftOneProblem(np.array([np.eye(2)]), start=np.array([0.5]))
    with pytest.raises(ValidationError):
        LiftOneProblem(np.array([np.eye(2)]), mode="bisect")
