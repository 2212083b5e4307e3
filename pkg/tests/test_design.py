from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from forlion import ApproximateDesign, ExactDesign, LocalProvider, ValidationError
from forlion.design import (
    cholesky,
    design_info,
    log_det,
    merge_design,
    pairwise_closest,
    relative_efficiency,
    sensitivity,
)

from conftest import ESD_DET, HF_DET, HF_POINTS, HF_WEIGHTS, esd_space
from esd_reference import ESD_REFERENCE


class MatrixProvider:
    """Provider over a fixed table: point (i,) -> matrices[i]."""

    def __init__(self, matrices):
        self.matrices = np.asarray(matrices, dtype=float)
        self.p = self.matrices.shape[1]

    def info(self, points):
        idx = np.atleast_2d(points)[:, 0].astype(int)
        return self.matrices[idx]


def test_design_validation():
    with pytest.raises(ValidationError):
        ApproximateDesign([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValidationError):
        ApproximateDesign([[0.0], [1.0]], [1.2, -0.2])
    with pytest.raises(ValidationError):
        ExactDesign([[0.0]], [-1])
    assert ExactDesign([[0.0], [1.0]], [3, 1]).as_approximate().weights.tolist() == [0.75, 0.25]


def test_single_point_and_duplicates(hf_provider):
    F = hf_provider.info([[50.0]])[0]
    np.testing.assert_allclose(design_info(hf_provider, ApproximateDesign([[50.0]], [1.0])), F)
    dup = ApproximateDesign([[50.0], [50.0]], [0.3, 0.7])
    np.testing.assert_allclose(design_info(hf_provider, dup), F, rtol=1e-14)


def test_house_flies_reference_design_det(hf_provider):
    M = design_info(hf_provider, ApproximateDesign(HF_POINTS, HF_WEIGHTS / HF_WEIGHTS.sum()))
    assert np.exp(log_det(M)) == pytest.approx(HF_DET, rel=1e-3)


def test_log_det_simple():
    assert log_det(np.eye(5)) == 0.0
    assert log_det(np.diag([2.0, 3.0])) == pytest.approx(np.log(6.0))
    assert log_det(np.zeros((2, 2))) == -np.inf
    assert log_det(np.array([[1.0, 1.0], [1.0, 1.0]])) == -np.inf
    assert cholesky(np.diag([1.0, -1.0])) is None


def test_log_det_rejects_tiny_relative_pivot():
    # rank one up to roundoff: must count as singular
    v = np.array([1.0, 1e-3, 1e3])
    M = np.outer(v, v) + 1e-20 * np.eye(3)
    assert log_det(M) == -np.inf


@given(st.integers(0, 10_000))
def test_log_det_matches_slogdet_and_is_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 6))
    M = A @ A.T
    s, ld = np.linalg.slogdet(M)
    assert s > 0 and log_det(M) == pytest.approx(ld, rel=1e-10, abs=1e-10)
    Fs = np.array([np.outer(a, a) for a in rng.normal(size=(6, 3))])
    w = rng.dirichlet(np.ones(6))
    perm = rng.permutation(6)
    a = log_det(np.einsum("n,nij->ij", w, Fs))
    b = log_det(np.einsum("n,nij->ij", w[perm], Fs[perm]))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_design_info_linear_in_weights(seed, alpha):
    rng = np.random.default_rng(seed)
    P = MatrixProvider([np.outer(a, a) for a in rng.normal(size=(5, 3))])
    pts = np.arange(5.0)[:, None]
    w1, w2 = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    mix = ApproximateDesign(pts, alpha * w1 + (1 - alpha) * w2)
    expect = alpha * design_info(P, ApproximateDesign(pts, w1)) + (1 - alpha) * design_info(
        P, ApproximateDesign(pts, w2)
    )
    np.testing.assert_allclose(design_info(P, mix), expect, rtol=1e-12, atol=1e-14)


def test_sensitivity_at_sole_support_point():
    P = MatrixProvider([np.diag([1.0, 2.0, 3.0])])
    xi = ApproximateDesign([[0.0]], [1.0])
    assert sensitivity(P, xi, [0.0]) == pytest.approx(3.0)


def test_sensitivity_house_flies(hf_result, hf_provider):
    xi = hf_result.design
    x_mid = xi.points[np.argmin(np.abs(xi.points[:, 0] - 103.53))]
    assert sensitivity(hf_provider, xi, x_mid) == pytest.approx(5.0, abs=1e-3)
    assert sensitivity(hf_provider, xi, [50.0]) < 5.0
    grid = np.linspace(0, 200, 2001)[:, None]
    assert sensitivity(hf_provider, xi, grid).max() <= 5 * (1 + 1e-3)


def test_merge_zero_delta_is_identity():
    xi = ApproximateDesign([[1.0], [1.0001], [3.0]], [0.2, 0.3, 0.5])
    out = merge_design(xi, 0.0, 1)
    np.testing.assert_array_equal(out.points, xi.points)
    np.testing.assert_array_equal(out.weights, xi.weights)


def test_merge_weighted_mean():
    xi = ApproximateDesign([[148.7592], [149.5954], [0.0]], [0.2598, 0.1394, 0.6008])
    out = merge_design(xi, 1.0, 1)
    assert out.m == 2
    expect = (0.2598 * 148.7592 + 0.1394 * 149.5954) / 0.3992
    i = int(np.argmax(out.points[:, 0]))
    assert out.points[i, 0] == pytest.approx(expect, abs=1e-12)
    assert out.points[i, 0] == pytest.approx(149.05, abs=0.01)
    assert out.weights[i] == pytest.approx(0.3992, abs=1e-12)


def test_merge_requires_equal_discrete_coordinates():
    xi = ApproximateDesign([[30.0, -1, 1, 1, -1], [30.0, 1, 1, 1, -1]], [0.5, 0.5])
    assert merge_design(xi, 3.0, esd_space().k).m == 2


def test_merge_rejected_when_result_is_singular():
    from forlion import DesignSpace, Factor, ModelSpec, parse_formula

    sp = DesignSpace((Factor.continuous("x", 0, 1),))
    P = LocalProvider(ModelSpec("glm", "logit", parse_formula("1 + x", sp)), [0.0, 1.0])
    xi = ApproximateDesign([[0.0], [0.5]], [0.5, 0.5])
    assert merge_design(xi, 1.0, 1).m == 1  # no provider: geometric merge only
    out = merge_design(xi, 1.0, 1, P)
    assert out.m == 2
    assert log_det(design_info(P, out)) > -np.inf


def test_merge_excluded_point_is_kept():
    xi = ApproximateDesign([[1.0], [1.2], [5.0]], [0.4, 0.2, 0.4])
    out = merge_design(xi, 1.0, 1, exclude=(1,))
    assert out.m == 3


@given(st.integers(0, 10_000), st.floats(0.01, 3.0))
def test_merge_preserves_mass(seed, delta):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    pts = np.column_stack([rng.uniform(0, 5, n), rng.choice([-1.0, 1.0], n)])
    xi = ApproximateDesign(pts, rng.dirichlet(np.ones(n)))
    out = merge_design(xi, delta, 1)
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert out.m <= xi.m
    # mass on each discrete level is preserved
    for lev in (-1.0, 1.0):
        assert out.weights[out.points[:, 1] == lev].sum() == pytest.approx(
            xi.weights[pts[:, 1] == lev].sum(), abs=1e-12
        )


def test_pairwise_closest():
    d, pair = pairwise_closest(np.array([[0.0], [5.0], [5.5]]))
    assert d == pytest.approx(0.5) and pair == (1, 2)
    d, pair = pairwise_closest(np.array([[1.0]]))
    assert d == np.inf and pair is None


def test_relative_efficiency_identities(hf_provider):
    a = ApproximateDesign(HF_POINTS, HF_WEIGHTS / HF_WEIGHTS.sum())
    b = ApproximateDesign([[0.0], [100.0], [150.0], [200.0]], [0.25] * 4)
    assert relative_efficiency(hf_provider, a, a, 5) == pytest.approx(1.0, abs=1e-14)
    ab = relative_efficiency(hf_provider, a, b, 5)
    ba = relative_efficiency(hf_provider, b, a, 5)
    assert ab * ba == pytest.approx(1.0, abs=1e-10)
    assert ab > 1


def test_relative_efficiency_of_reference_exact_designs(hf_provider):
    xi = ApproximateDesign(HF_POINTS, HF_WEIGHTS / HF_WEIGHTS.sum())
    counts = [710, 1393, 1397]
    e01 = relative_efficiency(hf_provider, ExactDesign([[0.0], [103.5], [149.2]], counts), xi, 5)
    e20 = relative_efficiency(hf_provider, ExactDesign([[0.0], [100.0], [140.0]], counts), xi, 5)
    assert e01 == pytest.approx(0.9999989, abs=1e-6)
    assert e20 == pytest.approx(0.9465724, abs=1e-5)


def test_esd_log_det(esd_provider):
    xi = ApproximateDesign(ESD_REFERENCE[:, :5], ESD_REFERENCE[:, 5] / ESD_REFERENCE[:, 5].sum())
    ld = log_det(design_info(esd_provider, xi))
    assert np.exp(ld) == pytest.approx(ESD_DET, rel=5e-3)
