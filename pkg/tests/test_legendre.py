import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcdual import (
    ConfigError,
    EmptyDomainError,
    ExtrapolationError,
    GridFunction,
    biconjugate,
    boundary_limit,
    conjugacy_tolerance,
    gaps_decreasing,
    lft,
    uniform_gap,
)
from gcdual.legendre import lft1d, lft_direct


def test_quadratic_is_self_conjugate():
    # (x^2 / 2)* = y^2 / 2, exact on the grid at |y| below the grid edge when y is a node
    x = np.linspace(-4, 4, 401)
    f = GridFunction((x,), 0.5 * x**2)
    y = np.linspace(-2, 2, 41)
    g = lft(f, (y,))
    assert np.allclose(g.values, 0.5 * y**2, atol=1e-12)
    assert g.meta["hull_deviation"] == pytest.approx(0.0, abs=1e-12)


def test_one_dimensional_against_brute_force():
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(-3, 3, 60))
    f = rng.normal(size=60) + x**2
    y = rng.uniform(-5, 5, 30)
    ref = np.max(np.outer(y, x) - f[None, :], axis=1)
    assert np.allclose(lft1d(x, f, y), ref, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000), st.booleans())
def test_lft_matches_direct_maximisation(ndim, seed, masked):
    rng = np.random.default_rng(seed)
    axes = [np.sort(rng.uniform(-2, 2, rng.integers(3, 9))) for _ in range(ndim)]
    axes = [np.unique(a) for a in axes]
    shape = tuple(len(a) for a in axes)
    vals = rng.normal(size=shape)
    if masked:
        vals[rng.uniform(size=shape) < 0.3] = np.inf
        vals.flat[0] = 0.0
    f = GridFunction(tuple(axes), vals)
    duals = tuple(np.linspace(-3, 3, 7) for _ in range(ndim))
    g = lft(f, duals)
    assert np.allclose(g.values.ravel(), lft_direct(f, g.points()), atol=1e-12)


def test_biconjugate_is_convex_hull():
    x = np.linspace(-2, 2, 81)
    f = GridFunction((x,), (x**2 - 1) ** 2)
    h = biconjugate(f, (np.linspace(-30, 30, 2001),))
    # the double well's hull is zero between the minima and f outside
    inner = np.abs(x) <= 1
    assert np.all(np.abs(h.values[inner]) <= 1e-2)
    assert np.allclose(h.values[np.abs(x) >= 1.2], f.values[np.abs(x) >= 1.2], atol=1e-2)
    assert np.all(h.values <= f.values + 1e-12)


def test_masked_domain_is_preserved():
    x = np.linspace(-1, 1, 21)
    vals = np.where(np.abs(x) <= 0.5, x**2, np.inf)
    h = biconjugate(GridFunction((x,), vals))
    assert np.array_equal(np.isfinite(h.values), np.isfinite(vals))
    with pytest.raises(EmptyDomainError):
        lft(GridFunction((x,), np.full(21, np.inf)))
    with pytest.raises(ConfigError):
        GridFunction((x,), np.full(21, np.nan))


def test_interpolation():
    x, y = np.linspace(0, 1, 5), np.linspace(0, 2, 3)
    X, Y = np.meshgrid(x, y, indexing="ij")
    f = GridFunction((x, y), 2 * X + 3 * Y)
    assert f([[0.3, 1.1]])[0] == pytest.approx(0.6 + 3.3)
    assert f([[1.5, 0.0]])[0] == np.inf
    vals = f.values.copy()
    vals[0, 0] = np.inf
    assert GridFunction((x, y), vals)([[0.1, 0.1]])[0] == np.inf


def test_save_load_round_trip(tmp_path):
    x = np.linspace(-1, 1, 4)
    f = GridFunction((x, x[:3]), np.arange(12.0).reshape(4, 3), ("mu", "beta"), {"source": "test"})
    f.values[1, 2] = np.inf
    f.save(tmp_path / "grid")
    g = GridFunction.load(tmp_path / "grid")
    assert g.names == ("mu", "beta") and g.meta == {"source": "test"}
    assert all(np.array_equal(a, b) for a, b in zip(f.axes, g.axes))
    assert np.array_equal(f.values, g.values)


def test_boundary_limits():
    # y log y - y -> 0 at y = 0, while -log y diverges
    f = lambda p: p[:, 0] * np.log(p[:, 0]) - p[:, 0]
    assert boundary_limit(f, [0.0], [1.0]) == pytest.approx(0.0, abs=1e-5)
    smooth = lambda p: np.cos(p[:, 0])
    assert boundary_limit(smooth, [0.0], [1.0]) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ExtrapolationError) as exc:
        boundary_limit(lambda p: -np.log(p[:, 0]), [0.0], [1.0])
    assert exc.value.value == math.inf
    with pytest.raises(ConfigError):
        boundary_limit(smooth, [1.0], [1.0])


def test_uniform_gap_and_monotonicity():
    x = np.linspace(-1, 1, 11)
    seq = [GridFunction((x,), x**2 + 2.0**-k) for k in range(1, 5)]
    gaps = uniform_gap(seq, lambda p: p[:, 0] ** 2, [(-0.5, 0.5)])
    assert np.allclose(gaps, [0.5, 0.25, 0.125, 0.0625])
    assert gaps_decreasing(gaps) and not gaps_decreasing(gaps[::-1]) and not gaps_decreasing(gaps[:1])


def test_conjugacy_tolerance_bounds_grid_error():
    # for f = a x^2 / 2 the discrete sup misses the true one by at most a h^2 / 8
    a, h = 3.0, 0.2
    x = np.arange(-5, 5 + h / 2, h)
    y = np.linspace(-4, 4, 97)
    err = np.max(np.abs(lft(GridFunction((x,), 0.5 * a * x**2), (y,)).values - y**2 / (2 * a)))
    tol = conjugacy_tolerance([h], [a])
    assert tol == pytest.approx(a * h * h / 8)
    assert err <= tol + 1e-12
