from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forlion import ApproximateDesign, RoundingConfig, ValidationError, round_design
from forlion.design import log_det
from forlion.oracle import exhaustive_counts
from forlion.rounding import greedy_counts, largest_remainder_counts, round_to_grid

from conftest import HF_POINTS, HF_WEIGHTS, esd_space, hf_space
from esd_reference import ESD_REFERENCE

TABLE = {  # grid step -> (rounded support in input order, efficiency in %)
    0.1: ([103.5, 0.0, 149.2], 99.99989),
    1.0: ([104.0, 0.0, 149.0], 99.98448),
    5.0: ([105.0, 0.0, 150.0], 99.93424),
    10.0: ([100.0, 0.0, 150.0], 99.48902),
    20.0: ([100.0, 0.0, 140.0], 94.65724),
}
HF_INPUT = ApproximateDesign(np.array([[103.53], [0.0], [149.2116]]), np.array([0.3981, 0.2027, 0.3992]))


@pytest.mark.parametrize(
    "x,L,lo,hi,expect",
    [
        (149.2116, 0.1, 0, 200, 149.2),
        (103.53, 1, 0, 200, 104.0),
        (103.53, 20, 0, 200, 100.0),
        (0.25, 0.5, -1, 1, 0.5),
        (-0.25, 0.5, -1, 1, -0.5),
        (0.35, 0.1, 0, 1, 0.4),
        (45.04, 0.1, 25, 45, 45.0),
        (44.99, 0.1, 25, 44.97, 44.9),
        (25.0, 0.1, 25, 45, 25.0),
    ],
)
def test_round_to_grid(x, L, lo, hi, expect):
    assert round_to_grid(x, L, lo, hi) == expect


def test_round_to_grid_without_feasible_multiple():
    with pytest.raises(ValidationError):
        round_to_grid(1.05, 1.0, 1.01, 1.2)


@pytest.mark.parametrize("L", sorted(TABLE))
def test_house_flies_grid_levels(hf_provider, L):
    support, pct = TABLE[L]
    cfg = RoundingConfig.from_mapping(hf_space(), 1.0, {"x": L}, 3500)
    rep = round_design(hf_provider, HF_INPUT, hf_space(), cfg)
    np.testing.assert_array_equal(rep.exact.points[:, 0], support)
    assert rep.exact.counts.tolist() == [1393, 710, 1397]
    assert 100 * rep.relative_efficiency == pytest.approx(pct, abs=1e-4)


def test_esd_exact_design(esd_provider):
    xi = ApproximateDesign(ESD_REFERENCE[:, :5], ESD_REFERENCE[:, 5] / ESD_REFERENCE[:, 5].sum())
    sp = esd_space()
    rep = round_design(esd_provider, xi, sp, RoundingConfig.from_mapping(sp, 0.5, {"Vol": 0.1}, 500))
    assert rep.exact.m == 14
    assert sorted(rep.exact.counts.tolist()) == sorted([22, 41, 55, 37, 43, 17, 7, 46, 66, 1, 7, 51, 43, 64])
    assert rep.relative_efficiency == pytest.approx(1.000069, abs=1e-6)
    # coarser grid, both unit counts
    cfg = RoundingConfig.from_mapping(sp, 0.5, {"Vol": 0.5}, 500)
    assert round_design(esd_provider, xi, sp, cfg).relative_efficiency == pytest.approx(1.001184, abs=1e-6)
    cfg = RoundingConfig.from_mapping(sp, 0.5, {"Vol": 0.5}, 100)
    rep = round_design(esd_provider, xi, sp, cfg, allocation="largest-remainder")
    assert rep.exact.m == 13
    assert rep.relative_efficiency == pytest.approx(1.000529, abs=1e-6)


@settings(max_examples=20)
@given(st.integers(0, 100_000))
def test_greedy_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 4))
    m = int(rng.integers(max(p, 2), 5))
    N = int(rng.integers(m, 13))
    F = np.array([(lambda A: A @ A.T)(rng.normal(size=(p, p))) for _ in range(m)])
    w = rng.dirichlet(np.ones(m))
    n = greedy_counts(F, w, N)
    _, best = exhaustive_counts(F, w, N)
    assert n.sum() == N
    assert log_det(np.einsum("n,nij->ij", n / N, F)) == pytest.approx(best, abs=1e-9)


@given(st.integers(0, 100_000), st.sampled_from([0.1, 0.5, 1.0, 7.0]), st.integers(3, 400))
def test_rounding_invariants(hf_provider, seed, L, N):
    rng = np.random.default_rng(seed)
    pts = np.sort(rng.uniform(0, 200, 4))[:, None]
    xi = ApproximateDesign(pts, rng.dirichlet(np.ones(4) * 3))
    cfg = RoundingConfig.from_mapping(hf_space(), 0.0, L, N)
    try:
        rep = round_design(hf_provider, xi, hf_space(), cfg)
    except Exception as exc:  # only singular exact designs may fail
        from forlion.errors import SingularDesignError

        assert isinstance(exc, SingularDesignError)
        return
    assert rep.exact.counts.sum() == N
    q = rep.exact.points[:, 0] / L
    np.testing.assert_allclose(q, np.round(q), atol=1e-9)
    assert np.all((rep.exact.points >= 0) & (rep.exact.points <= 200))
    # every snapped point keeps at least its floor share
    floors = np.floor(N * xi.weights + 1e-9)
    for x, fl in zip(xi.points[:, 0], floors):
        r = round_to_grid(x, L, 0, 200)
        assert rep.exact.counts[rep.exact.points[:, 0] == r].sum() >= fl


def test_integral_allocation_is_kept(hf_provider):
    xi = ApproximateDesign(np.array([[0.0], [100.0], [150.0]]), np.array([0.25, 0.25, 0.5]))
    rep = round_design(hf_provider, xi, hf_space(), RoundingConfig(0.0, (1.0,), 8))
    assert rep.exact.counts.tolist() == [2, 2, 4]
    assert rep.relative_efficiency == pytest.approx(1.0, abs=1e-12)


def test_largest_remainder_counts():
    assert largest_remainder_counts(np.array([0.29, 0.31, 0.4]), 100).tolist() == [29, 31, 40]
    assert largest_remainder_counts(np.array([0.5, 0.5]), 3).tolist() == [2, 1]
    assert largest_remainder_counts(np.array([0.14, 0.36, 0.5]), 10).tolist() == [1, 4, 5]


def test_rounding_validation(hf_provider):
    with pytest.raises(ValidationError) as e:
        RoundingConfig(0.1, (0.0,), 10)
    assert e.value.key == "rounding.grid"
    with pytest.raises(ValidationError):
        RoundingConfig(0.1, (1.0,), 0)
    with pytest.raises(ValidationError):
        RoundingConfig.from_mapping(hf_space(), 0.1, {"y": 1.0}, 10)
    xi = ApproximateDesign(HF_POINTS, HF_WEIGHTS / HF_WEIGHTS.sum())
    with pytest.raises(ValidationError):
        round_design(hf_provider, xi, hf_space(), RoundingConfig(0.1, (1.0,), 10), allocate_on="x")
