import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pvvolt.errors import ZeroMatrix, ZeroVector
from pvvolt.sparse_svd import (
    SparseSvdConfig,
    canonical_sign,
    dominant_pair,
    objective,
    procedure,
    update_x,
    update_y,
)

matrices = arrays(
    np.float64,
    st.tuples(st.integers(2, 8), st.integers(2, 8)),
    elements=st.floats(-10, 10, allow_nan=False),
)


def test_diagonal():
    x, y, s = dominant_pair(np.diag([3.0, 1.0]))
    assert s == pytest.approx(3.0, rel=1e-12)
    np.testing.assert_allclose(np.abs(x), [1, 0], atol=1e-8)
    np.testing.assert_allclose(np.abs(y), [1, 0], atol=1e-8)


def test_rank_one_identity(rng):
    u = rng.normal(size=5)
    v = rng.normal(size=7)
    u *= 2 / np.linalg.norm(u)
    v *= 5 / np.linalg.norm(v)
    _, _, s = dominant_pair(np.outer(u, v))
    assert s == pytest.approx(10.0, rel=1e-12)


def test_random_against_dense_svd(rng):
    H = rng.normal(size=(6, 8))
    x, y, s = dominant_pair(H)
    u, sv, vt = np.linalg.svd(H)
    assert s == pytest.approx(sv[0], rel=1e-8)
    assert abs(x @ u[:, 0]) > 1 - 1e-8
    assert abs(y @ vt[0]) > 1 - 1e-8


def test_zero_matrix():
    with pytest.raises(ZeroMatrix):
        dominant_pair(np.zeros((3, 3)))


def test_update_x_unpenalized(rng):
    H = rng.normal(size=(5, 4))
    y = rng.normal(size=4)
    y /= np.linalg.norm(y)
    np.testing.assert_allclose(update_x(H, y, 0.0), H @ y, rtol=1e-14)


def test_update_x_thresholds_small_entry():
    x = update_x(np.array([[1.0], [0.01]]), np.array([1.0]), 0.05)
    assert x[0] == pytest.approx(0.975, abs=1e-15)
    assert x[1] == 0.0
    # Brute-force scan of the separable objective agrees on both coordinates.
    grid = np.arange(-1.5, 1.5, 1e-4)
    for g, xi in ((1.0, x[0]), (0.01, x[1])):
        f = (g - grid) ** 2 + 0.05 * np.abs(grid)
        assert abs(grid[np.argmin(f)] - xi) <= 1e-4


def test_full_shrinkage(rng):
    H = rng.normal(size=(4, 3))
    y = rng.normal(size=3)
    alpha = 2 * np.max(np.abs(H @ y))
    assert not np.any(update_x(H, y, alpha))


def test_update_x_zero_y():
    with pytest.raises(ZeroVector):
        update_x(np.ones((2, 2)), np.zeros(2), 0.1)


def test_update_y_basis_and_scale(rng):
    H = rng.normal(size=(4, 6))
    np.testing.assert_array_equal(update_y(H, np.eye(4)[0]), H[0])
    x = rng.normal(size=4)
    np.testing.assert_allclose(update_y(H, 3.7 * x), update_y(H, x), rtol=1e-14)
    np.testing.assert_allclose(update_y(H, x), H.T @ x / np.sqrt(x @ x), rtol=1e-12)
    with pytest.raises(ZeroVector):
        update_y(H, np.zeros(4))


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(0.0, 5.0), st.integers(0, 2**32 - 1))
def test_x_step_minimizes_for_fixed_y(H, alpha, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=H.shape[1])
    x = update_x(H, y, alpha)
    base = objective(H, x, y, alpha)
    for _ in range(20):
        probe = x + rng.normal(scale=0.1, size=x.size)
        assert objective(H, probe, y, alpha) >= base - 1e-9 * max(1.0, abs(base))


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(0.0, 5.0), st.integers(0, 2**32 - 1))
def test_x_step_never_increases_objective(H, alpha, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=H.shape[1])
    x0 = rng.normal(size=H.shape[0])
    x1 = update_x(H, y, alpha)
    assert objective(H, x1, y, alpha) <= objective(H, x0, y, alpha) + 1e-9


@pytest.mark.xfail(strict=True, reason="the y-step rescales by ||x||, so the alternation is not a descent method")
def test_full_alternation_is_monotone(rng):
    # Recorded as a known defect: the objective of successive (x, y) iterates can rise.
    for _ in range(50):
        H = rng.normal(size=(6, 8))
        trace = []
        procedure(H, SparseSvdConfig(alpha=0.5), trace=trace)
        values = [objective(H, x, y, 0.5) for x, y in trace]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_alpha_zero_reduces_to_dominant_pair(rng):
    H = rng.normal(size=(7, 5))
    f = procedure(H, SparseSvdConfig(alpha=0.0))
    x, y, s = dominant_pair(H)
    assert f.sigma == pytest.approx(s, rel=1e-6)
    assert abs(f.x @ x) > 1 - 1e-6
    assert f.converged


def test_pattern_rows_are_selected(rng):
    n = 50
    pattern = np.exp(-0.5 * ((np.arange(n) - 25) / 6.0) ** 2)
    # The threshold alpha/2 acts on H y with ||y|| ~ sigma, so noise rows need
    # noise * sigma well below alpha/2 to be cut.
    H = rng.normal(scale=0.001, size=(30, n))
    S = np.arange(10)
    H[S] += 0.3 * pattern
    f = procedure(H, SparseSvdConfig(alpha=0.05))
    assert set(np.flatnonzero(f.x > 0)) <= set(S)
    assert set(np.flatnonzero(f.x > 0)) == set(S)


def test_zero_solution_flag():
    H = np.full((3, 4), 0.01)
    f = procedure(H, SparseSvdConfig(alpha=10.0))
    assert f.zero_solution and f.sigma == 0.0 and not np.any(f.x)


@settings(max_examples=50, deadline=None)
@given(matrices)
def test_output_is_normalized_and_sign_canonical(H):
    if np.linalg.norm(H) == 0:
        return
    f = procedure(H, SparseSvdConfig(alpha=0.01))
    if f.zero_solution:
        return
    assert np.linalg.norm(f.x) == pytest.approx(1.0)
    assert np.linalg.norm(f.y) == pytest.approx(1.0)
    assert f.x.sum() >= 0
    assert f.sigma >= 0


def test_canonical_sign_flips_pair():
    x, y = canonical_sign(np.array([-1.0, 0.2]), np.array([1.0, 2.0]))
    assert x.tolist() == [1.0, -0.2] and y.tolist() == [-1.0, -2.0]


@pytest.mark.parametrize("kwargs", [{"alpha": -1}, {"epsilon": 0}, {"max_iterations": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SparseSvdConfig(**kwargs)
