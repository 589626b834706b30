import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lplra.core import vector_norm
from lplra.regression import (
    Mode,
    RegressionConfig,
    solve_exact_lp,
    solve_multi_regression,
    solve_regression,
    solve_stack,
)
from lplra.errors import ShapeError

T = np.array([3.0, -1.0, 7.0, 2.0, 10.0])
ONES = np.ones((5, 1))


def test_closed_forms():
    assert solve_regression(ONES, T, 1).y[0] == pytest.approx(3.0, abs=1e-9)  # median
    assert solve_regression(ONES, T, "inf").y[0] == pytest.approx(4.5, abs=1e-9)  # midrange
    assert solve_regression(ONES, T, 2).y[0] == pytest.approx(T.mean(), abs=1e-12)


def test_target_in_span_is_exact(rng):
    u = rng.standard_normal((10, 3))
    y = np.array([1.0, -2.0, 0.5])
    for p in (1, 1.5, 3, "inf"):
        res = solve_regression(u, u @ y, p)
        assert res.residual <= 1e-9
        np.testing.assert_allclose(res.y, y, atol=1e-8)


@pytest.mark.parametrize("p", [1, "inf"])
def test_iterative_matches_lp(rng, p):
    for _ in range(8):
        u = rng.standard_normal((25, 4))
        v = rng.standard_normal(25)
        it = solve_regression(u, v, p)
        ex = solve_exact_lp(u, v, p)
        assert it.residual <= ex.residual * (1 + 1e-4)
        assert it.converged


@pytest.mark.parametrize("p", [1.5, 3.0, 7.0])
def test_general_p_is_stationary(rng, p):
    u = rng.standard_normal((20, 3))
    v = rng.standard_normal(20)
    res = solve_regression(u, v, p)
    assert res.converged
    base = vector_norm(u @ res.y - v, p)
    for _ in range(50):
        d = rng.standard_normal(3) * 1e-3
        assert vector_norm(u @ (res.y + d) - v, p) >= base * (1 - 1e-12)


def test_rank_deficient_basis_gives_min_norm(rng):
    col = rng.standard_normal(8)
    u = np.column_stack([col, col])
    v = 2 * col
    res = solve_regression(u, v, 1)
    np.testing.assert_allclose(res.y, [1.0, 1.0], atol=1e-8)


def test_multi_matches_single(rng):
    u = rng.standard_normal((12, 2))
    a = rng.standard_normal((12, 4))
    multi = solve_multi_regression(u, a, 1)
    for j in range(4):
        single = solve_regression(u, a[:, j], 1)
        assert multi.residuals[j] == pytest.approx(single.residual, rel=1e-9)
    assert multi.all_converged and multi.v.shape == (2, 4)


def test_stack_lower_bounds_are_valid(rng):
    bs = rng.standard_normal((30, 15, 2))
    ts = rng.standard_normal((30, 15))
    for p in (1, 1.5, 3, "inf"):
        out = solve_stack(bs, ts, p, screen=True)
        assert np.all(out.lower <= out.residual * (1 + 1e-12))
        if p in (1, "inf"):
            exact = [solve_exact_lp(bs[i], ts[i], p).residual for i in range(30)]
            assert np.all(out.lower <= np.array(exact) * (1 + 1e-9))


def test_exact_mode_limits():
    with pytest.raises(ValueError):
        solve_exact_lp(ONES, T, 2)
    with pytest.raises(ValueError):
        solve_regression(ONES, T, 3, RegressionConfig(mode=Mode.EXACT))


def test_shape_errors():
    with pytest.raises(ShapeError):
        solve_multi_regression(np.ones((3, 1)), np.ones((4, 2)), 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, "inf"]))
def test_property_residual_never_beats_lp(seed, p):
    r = np.random.default_rng(seed)
    u = r.standard_normal((9, 2))
    v = r.standard_normal(9)
    it = solve_regression(u, v, p)
    ex = solve_exact_lp(u, v, p)
    assert ex.residual <= it.residual * (1 + 1e-12) + 1e-12
    assert it.residual <= ex.residual * (1 + 1e-4) + 1e-12
