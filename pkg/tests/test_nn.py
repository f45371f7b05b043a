"""Custom time-layer initialization and layer containers."""

import numpy as np
import pytest

from twvae.nn import Conv1d, Linear, init_time_layer
from twvae.tensor import Tensor, make_rng


def test_time_layer_slopes_are_exactly_plus_minus_g():
    w, b = init_time_layer(200, 7.5, 0.1, make_rng(0))
    assert w.shape == (200, 1)
    assert b.shape == (200,)
    assert np.all(np.abs(w[:, 0]) == 7.5)
    assert set(np.sign(w[:, 0])) == {-1.0, 1.0}


def test_time_layer_roots_stay_in_band_for_zero_margin():
    w, b = init_time_layer(500, 10.0, 0.0, make_rng(1))
    roots = -b / w[:, 0]
    assert roots.min() >= 0.0
    assert roots.max() <= 1.0


def test_time_layer_roots_uniform_kolmogorov_smirnov():
    # empirical CDF of the activation roots vs uniform on [-0.1, 1.1]
    margin = 0.1
    w, b = init_time_layer(10_000, 10.0, margin, make_rng(2))
    roots = np.sort(-b / w[:, 0])
    cdf = (roots + margin) / (1.0 + 2.0 * margin)
    n = roots.size
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    ks = max(np.abs(ecdf_hi - cdf).max(), np.abs(ecdf_lo - cdf).max())
    assert ks < 0.02


def test_time_layer_validates_arguments():
    rng = make_rng(0)
    with pytest.raises(ValueError):
        init_time_layer(0, 10.0, 0.1, rng)
    with pytest.raises(ValueError):
        init_time_layer(5, -1.0, 0.1, rng)
    with pytest.raises(ValueError):
        init_time_layer(5, 10.0, -0.5, rng)


def test_layer_outputs_have_expected_shapes():
    rng = make_rng(3)
    lin = Linear(4, 6, rng)
    out = lin(Tensor(rng.standard_normal((10, 4))))
    assert out.data.shape == (10, 6)
    conv = Conv1d(3, 5, 3, 2, rng)
    out = conv(Tensor(rng.standard_normal((2, 3, 9))))
    assert out.data.shape == (2, 5, 5)


def test_same_seed_gives_bit_identical_layers():
    a = Linear(4, 6, make_rng(9))
    b = Linear(4, 6, make_rng(9))
    assert np.array_equal(a.weight.data, b.weight.data)
    assert np.array_equal(a.bias.data, b.bias.data)
