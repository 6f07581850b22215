import math

import numpy as np
import pytest

from nusurrogate.gp import (
    BASES,
    BadKernelParams,
    DegenerateTargets,
    GpModel,
    KernelSpec,
    base_kernel,
    gp_condition,
    gp_fit,
    gp_predict,
    gram,
    kernel_eval,
    log_marginal_likelihood,
)

from oracles import gauss_jordan_solve, gp_mean_oracle, rbf


def _specs():
    yield KernelSpec("ldp", signal_var=0.7, constant=0.3, noise_var=1e-3)
    yield KernelSpec("ess", length_scale=0.8, period=1.7, signal_var=1.2, noise_var=1e-3)
    for nu in (0.5, 1.5, 2.5):
        yield KernelSpec("matern", length_scale=0.6, nu=nu, constant=0.5, noise_var=1e-3)
    yield KernelSpec("rbf", length_scale=0.4, signal_var=2.0, constant=1.0, noise_var=1e-4)
    yield KernelSpec("rq", length_scale=0.5, rq_alpha=2.0, noise_var=1e-3)


def test_kernel_values_by_hand():
    x, y = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    r = 5.0
    assert kernel_eval(KernelSpec("rbf", length_scale=2.0), x, y) == pytest.approx(math.exp(-r * r / 8))
    assert kernel_eval(KernelSpec("matern", nu=0.5), x, y) == pytest.approx(math.exp(-r))
    t = math.sqrt(3) * r
    assert kernel_eval(KernelSpec("matern", nu=1.5), x, y) == pytest.approx((1 + t) * math.exp(-t))
    assert kernel_eval(KernelSpec("rq", rq_alpha=0.5), x, y) == pytest.approx((1 + 25.0) ** -0.5)
    assert kernel_eval(KernelSpec("ldp"), [1.0, 2.0], [3.0, 4.0]) == 11.0
    ess = KernelSpec("ess", length_scale=1.0, period=2.0)
    assert kernel_eval(ess, [0.0], [2.0]) == pytest.approx(1.0)  # one full period
    spec = KernelSpec("rbf", constant=0.5, noise_var=0.1)
    assert kernel_eval(spec, x, x, same_index=True) == pytest.approx(1.6)
    assert kernel_eval(spec, x, x) == pytest.approx(1.5)


@pytest.mark.parametrize("spec", list(_specs()), ids=lambda s: f"{s.base}-{s.nu}")
def test_gram_is_symmetric_psd(spec):
    X = np.random.default_rng(0).uniform(size=(12, 3))
    K = gram(spec, X)
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-10


@pytest.mark.parametrize("spec", list(_specs()), ids=lambda s: f"{s.base}-{s.nu}")
def test_posterior_matches_gauss_jordan(spec):
    rng = np.random.default_rng(4)
    X, Xs = rng.uniform(size=(7, 2)), rng.uniform(size=(5, 2))
    y = rng.normal(size=7)
    m = gp_condition(spec, X, y)
    mean, var = gp_predict(m, Xs)
    Kxx = gram(spec, X)
    Ksx = spec.signal_var * base_kernel(spec, Xs, X) + spec.constant
    assert np.allclose(mean, gp_mean_oracle(Kxx, Ksx, y), rtol=1e-8, atol=1e-10)
    prior = np.array([spec.signal_var * base_kernel(spec, x[None], x[None])[0, 0] + spec.constant
                      for x in Xs])
    ref_var = prior - np.einsum("ij,ji->i", Ksx, gauss_jordan_solve(Kxx, Ksx.T))
    assert np.allclose(var, np.maximum(ref_var, 0), atol=1e-9)
    assert np.all(var >= 0)


def test_interpolation_with_tiny_noise():
    m = gp_condition(KernelSpec("rbf", noise_var=1e-10), np.array([[0.3, 0.1]]), np.array([2.5]))
    assert gp_predict(m, np.array([0.3, 0.1]))[0] == pytest.approx(2.5, abs=1e-6)
    X = np.random.default_rng(1).uniform(size=(6, 2))
    y = np.sin(X.sum(1))
    m = gp_condition(KernelSpec("rbf", length_scale=0.5, noise_var=1e-10), X, y)
    assert np.allclose(gp_predict(m, X)[0], y, atol=1e-6)


def test_lml_matches_direct_formula():
    rng = np.random.default_rng(2)
    X, y = rng.uniform(size=(6, 2)), rng.normal(size=6)
    spec = KernelSpec("rbf", length_scale=0.7, signal_var=1.3, constant=0.2, noise_var=0.05)
    K = gram(spec, X)
    _, logdet = np.linalg.slogdet(K)
    ref = -0.5 * y @ gauss_jordan_solve(K, y) - 0.5 * logdet - 3 * math.log(2 * math.pi)
    assert log_marginal_likelihood(spec, X, y) == pytest.approx(ref, rel=1e-10)


def test_permutation_invariance():
    rng = np.random.default_rng(6)
    X, y, Xs = rng.uniform(size=(8, 3)), rng.normal(size=8), rng.uniform(size=(4, 3))
    spec = KernelSpec("matern", nu=1.5, noise_var=1e-3)
    p = rng.permutation(8)
    a = gp_predict(gp_condition(spec, X, y), Xs)[0]
    b = gp_predict(gp_condition(spec, X[p], y[p]), Xs)[0]
    assert np.allclose(a, b, rtol=0, atol=1e-10)


def test_fit_improves_likelihood_and_is_seeded():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(20, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1] + 0.01 * rng.normal(size=20)
    start = KernelSpec("rbf", length_scale=0.5, signal_var=float(np.var(y)),
                       constant=float(np.mean(y) ** 2), noise_var=1e-2 * float(np.var(y)))
    m = gp_fit(X, y, "rbf", restarts=3, seed=1)
    assert m.lml >= log_marginal_likelihood(start, X, y)
    m2 = gp_fit(X, y, "rbf", restarts=3, seed=1)
    assert m.spec == m2.spec


@pytest.mark.parametrize("base", BASES)
def test_every_base_fits(base):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(15, 2))
    y = 1.0 + X[:, 0] ** 2
    m = gp_fit(X, y, base, restarts=2, seed=0, budget=150)
    assert np.all(np.isfinite(gp_predict(m, X)[0]))


def test_degenerate_targets_warn():
    X = np.random.default_rng(0).uniform(size=(5, 2))
    with pytest.warns(DegenerateTargets):
        gp_fit(X, np.full(5, 2.0), restarts=1, budget=50)


def test_bad_parameters():
    with pytest.raises(BadKernelParams):
        KernelSpec("rbf", length_scale=0.0)
    with pytest.raises(BadKernelParams):
        KernelSpec("matern", nu=3.5)
    with pytest.raises(BadKernelParams):
        KernelSpec("cosine")
    with pytest.raises(BadKernelParams):
        KernelSpec("rbf", noise_var=-1.0)


def test_serialization_roundtrip():
    rng = np.random.default_rng(0)
    X, y = rng.uniform(size=(5, 2)), rng.normal(size=5)
    m = gp_condition(KernelSpec("rq", rq_alpha=0.5), X, y)
    back = GpModel.from_dict(m.to_dict())
    assert np.allclose(gp_predict(back, X)[0], gp_predict(m, X)[0], rtol=0, atol=1e-14)


def test_rbf_oracle_consistency():
    X = np.random.default_rng(0).uniform(size=(4, 2))
    assert np.allclose(base_kernel(KernelSpec("rbf", length_scale=0.3), X, X), rbf(X, X, 0.3))
