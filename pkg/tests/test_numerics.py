import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nusurrogate.numerics import (
    NonFiniteObjective,
    NotPositiveDefinite,
    RandomStream,
    child_seed,
    cholesky,
    finite_diff_grad,
    nelder_mead_min,
    solve_spd,
)

from oracles import gauss_jordan_solve


def test_cholesky_reconstructs_spd():
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        A = rng.normal(size=(n, n))
        m = A.T @ A + np.eye(n)
        L = cholesky(m)
        assert np.allclose(np.tril(L), L)
        assert np.linalg.norm(L @ L.T - m) <= 1e-10 * np.linalg.norm(m)


def test_cholesky_rejects_asymmetric_and_indefinite():
    with pytest.raises(ValueError):
        cholesky(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_cholesky_jitter_rescues_semidefinite():
    v = np.array([1.0, 2.0, 3.0])
    m = np.outer(v, v)  # rank one
    L = cholesky(m)
    assert np.linalg.norm(L @ L.T - m) <= 1e-4 * np.trace(m)


def test_solve_spd_small_example():
    A = np.array([[4.0, 2.0], [2.0, 3.0]])
    b = np.array([10.0, 9.0])
    x = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) < 1e-10
    assert np.allclose(x, gauss_jordan_solve(A, b), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31))
def test_solve_spd_matches_gauss_jordan(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    m = A.T @ A + np.eye(n)
    b = rng.normal(size=n)
    x = solve_spd(m, b)
    ref = gauss_jordan_solve(m, b)
    assert np.linalg.norm(x - ref) <= 1e-8 * max(1.0, np.linalg.norm(ref))
    assert np.linalg.norm(m @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_nelder_mead_quadratic_1d():
    x, fx, nfev = nelder_mead_min(lambda v: (v[0] - 1.0) ** 2, [5.0], 200)
    assert abs(x[0] - 1.0) < 1e-4
    assert nfev <= 200


def test_nelder_mead_rosenbrock_and_budget():
    def rosen(v):
        return (1 - v[0]) ** 2 + 100 * (v[1] - v[0] ** 2) ** 2

    x, fx, _ = nelder_mead_min(rosen, [-1.2, 1.0], 2000, step=0.5, ftol=1e-14)
    assert np.allclose(x, [1.0, 1.0], atol=1e-3)
    calls = []
    nelder_mead_min(lambda v: calls.append(1) or float(v @ v), [3.0, 4.0], 17)
    assert len(calls) <= 17


def test_nelder_mead_never_worse_than_start():
    f = lambda v: float(np.sum(np.sin(3 * v)) + v @ v)  # noqa: E731
    start = np.array([0.7, -0.2, 1.1])
    _, fx, _ = nelder_mead_min(f, start, 50)
    assert fx <= f(start)


def test_nelder_mead_nonfinite_start():
    with pytest.raises(NonFiniteObjective):
        nelder_mead_min(lambda v: math.nan, [0.0], 10)


def test_finite_diff_examples():
    assert finite_diff_grad(lambda v: v[0] ** 2, [3.0])[0] == pytest.approx(6.0, abs=1e-6)
    g = finite_diff_grad(lambda v: v[0] * v[1], [2.0, 3.0])
    assert np.allclose(g, [3.0, 2.0], atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-2, 2), st.floats(-2, 2))
def test_finite_diff_cubic_polynomials(c, x, y):
    f = lambda v: c[0] * v[0] ** 3 + c[1] * v[0] * v[1] ** 2 + c[2] * v[1] + c[3]  # noqa: E731
    exact = np.array([3 * c[0] * x ** 2 + c[1] * y ** 2, 2 * c[1] * x * y + c[2]])
    g = finite_diff_grad(f, [x, y])
    assert np.allclose(g, exact, rtol=1e-5, atol=1e-5)


def test_random_stream_is_reproducible_and_open_interval():
    a = RandomStream(42).uniform(10_000)
    b = RandomStream(42).uniform(10_000)
    assert np.array_equal(a, b)
    assert a.min() > 0.0 and a.max() < 1.0
    assert not np.array_equal(a, RandomStream(43).uniform(10_000))


def test_child_seeds_are_distinct_and_stable():
    seeds = {child_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert child_seed(7, 3) == child_seed(7, 3)
    assert RandomStream(7).child(3).seed == child_seed(7, 3)
