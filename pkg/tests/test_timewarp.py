"""Warp family: basis partition, evaluation, inversion round trips against a
bisection oracle, regularizer hand values, inversion symmetry, and the
numeric-integration cross-check."""

import numpy as np
import pytest

import twvae.tensor as T
from twvae.tensor import Tensor, make_rng
from twvae.timewarp import (PiecewiseLinearWarp, WarpCoefficients, basis_matrix,
                            coefficients_from_logits, invert_coefficients, random_coefficients,
                            segment_basis, warp_eval, warp_inverse, warp_regularizer)

from fdcheck import check_op_gradients


def warp(slopes):
    return WarpCoefficients(slopes=np.asarray(slopes, dtype=np.float64))


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------

def test_basis_point_values():
    assert segment_basis(1, 0.0, 5) == 0.0
    assert segment_basis(1, 0.5, 5) == pytest.approx(0.2, abs=1e-15)
    assert segment_basis(3, 0.5, 5) == pytest.approx(0.1, abs=1e-15)


def test_basis_rejects_bad_arguments():
    with pytest.raises(ValueError):
        segment_basis(0, 0.5, 5)
    with pytest.raises(ValueError):
        segment_basis(6, 0.5, 5)
    with pytest.raises(ValueError):
        segment_basis(1, 1.5, 5)
    with pytest.raises(ValueError):
        segment_basis(1, -0.1, 5)


@pytest.mark.parametrize("k", [1, 2, 5, 50])
def test_basis_partition_sums_to_t(k):
    grid = np.arange(0.0, 1.0 + 1e-9, 1e-3)
    total = basis_matrix(grid, k).sum(axis=1)
    assert np.abs(total - grid).max() < 1e-12


# ---------------------------------------------------------------------------
# evaluation and inversion
# ---------------------------------------------------------------------------

def test_identity_warp_is_identity():
    w = warp(np.ones(7))
    grid = np.linspace(0.0, 1.0, 101)
    assert np.abs(warp_eval(w, grid) - grid).max() < 1e-12


def test_two_segment_warp_values():
    w = warp([0.5, 1.5])
    assert warp_eval(w, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert warp_eval(w, 0.75) == pytest.approx(0.625, abs=1e-15)
    assert warp_inverse(w, 0.25) == pytest.approx(0.5, abs=1e-15)


def test_warp_is_strictly_monotone_with_pinned_endpoints():
    rng = make_rng(4)
    for _ in range(20):
        w = random_coefficients(rng, 10, 0.8)
        grid = np.linspace(0.0, 1.0, 400)
        vals = warp_eval(w, grid)
        assert np.all(np.diff(vals) > 0.0)
        assert abs(vals[0]) < 1e-12 and abs(vals[-1] - 1.0) < 1e-12


def bisect_inverse(w, s, iters=60):
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if warp_eval(w, mid) < s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_inverse_round_trip_and_bisection_oracle():
    rng = make_rng(5)
    w = random_coefficients(rng, 12, 0.9)
    s_values = rng.uniform(0.0, 1.0, 100)
    for s in s_values:
        t = warp_inverse(w, s)
        assert abs(warp_eval(w, t) - s) < 1e-12
        assert abs(t - bisect_inverse(w, s)) < 1e-12


def test_eval_rejects_out_of_range():
    w = warp(np.ones(3))
    with pytest.raises(ValueError):
        warp_eval(w, 1.2)
    with pytest.raises(ValueError):
        warp_inverse(w, -0.2)


def test_coefficients_validation():
    with pytest.raises(ValueError):
        warp([0.5, 0.5])  # mean != 1
    with pytest.raises(ValueError):
        warp([2.0, -0.0001, 1.0, 1.0])
    with pytest.raises(ValueError):
        WarpCoefficients(slopes=np.array([2.0, np.inf]))


# ---------------------------------------------------------------------------
# regularizer
# ---------------------------------------------------------------------------

def test_regularizer_zero_only_at_identity():
    assert warp_regularizer(warp(np.ones(9))) == 0.0
    rng = make_rng(6)
    for _ in range(20):
        w = random_coefficients(rng, 8, 0.7)
        if np.any(w.slopes != 1.0):
            assert warp_regularizer(w) > 0.0


def test_regularizer_two_segment_hand_value():
    # independent evaluation: 0.5 * ((0.5-1) ln 0.5 + (1.5-1) ln 1.5)
    expected = 0.5 * (0.5 * np.log(2.0) + 0.5 * np.log(1.5))
    assert warp_regularizer(warp([0.5, 1.5])) == pytest.approx(expected, abs=1e-12)
    assert warp_regularizer(warp([0.5, 1.5])) == pytest.approx(0.27465, abs=1e-5)


def test_regularizer_symmetric_under_inversion():
    rng = make_rng(7)
    for k in (2, 3, 10, 50):
        w = random_coefficients(rng, k, 0.9)
        inv = invert_coefficients(w)
        assert isinstance(inv, PiecewiseLinearWarp)
        assert abs(warp_regularizer(inv) - warp_regularizer(w)) < 1e-12


def test_inverse_coefficients_realize_the_inverse_map():
    rng = make_rng(8)
    w = random_coefficients(rng, 6, 0.8)
    inv = invert_coefficients(w)
    s = rng.uniform(0.0, 1.0, 50)
    assert np.abs(warp_eval(inv, s) - warp_inverse(w, s)).max() < 1e-15


def midpoint_integral_of_slope_penalty(w, cells=10_000):
    """Midpoint-rule integration of (phi' - 1) log phi' with the slope read
    off the segment each midpoint falls into."""
    mids = (np.arange(cells) + 0.5) / cells
    seg = np.minimum((mids * w.n_segments).astype(int), w.n_segments - 1)
    slopes = w.slopes[seg]
    return ((slopes - 1.0) * np.log(slopes)).mean()


@pytest.mark.parametrize("k", [2, 4, 10, 50])
def test_regularizer_matches_numeric_integration(k):
    rng = make_rng(9 + k)
    w = random_coefficients(rng, k, 0.9)
    assert warp_regularizer(w) == pytest.approx(midpoint_integral_of_slope_penalty(w), abs=1e-6)


def test_regularizer_gradient_matches_finite_differences():
    rng = make_rng(10)
    slopes = Tensor(rng.uniform(0.3, 2.0, 6), requires_grad=True)

    def penalty():
        return T.scale(T.tsum(T.mul(T.sub(slopes, T.as_tensor(1.0)), T.log(slopes))), 1.0 / 6.0)

    check_op_gradients(penalty, [slopes])


# ---------------------------------------------------------------------------
# logits parameterization
# ---------------------------------------------------------------------------

def test_zero_logits_give_identity_warp():
    w = coefficients_from_logits(np.zeros(4))
    assert np.array_equal(w.slopes, np.ones(4))


def test_logits_softmax_example():
    w = coefficients_from_logits(np.array([np.log(3.0), 0.0]))
    assert np.allclose(w.slopes, [1.5, 0.5], atol=1e-12)


def test_logits_always_give_mean_one():
    rng = make_rng(11)
    for _ in range(25):
        w = coefficients_from_logits(rng.standard_normal(9) * 3.0)
        assert abs(w.slopes.mean() - 1.0) < 1e-12
        assert np.all(w.slopes > 0.0)


def test_logits_tensor_path_is_differentiable():
    rng = make_rng(12)
    logits = Tensor(rng.standard_normal((2, 5)), requires_grad=True)
    check_op_gradients(lambda: T.tsum(T.square(coefficients_from_logits(logits))), [logits])


def test_logits_reject_nonfinite():
    with pytest.raises(ValueError):
        coefficients_from_logits(np.array([1.0, np.nan]))
