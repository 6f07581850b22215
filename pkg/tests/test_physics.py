import warnings

import numpy as np
import pytest

from nusurrogate import physics
from nusurrogate.physics import (
    SODIUM,
    WATER_ANALOG,
    DomainError,
    PhysicsParams,
    RangeWarning,
    evaluate_chain,
    gamma,
    nu_ave_hat,
    nu_star,
    pe_star,
    physics_predict,
)

from oracles import physics_hp


def test_spot_values():
    assert gamma(1.0, 75.0) == pytest.approx(0.64937, abs=1e-4)
    assert gamma(0.5, 100.0) == pytest.approx(0.49507, abs=1e-4)
    assert nu_star(0.5) == pytest.approx(2.264, abs=1e-3)
    assert nu_star(0.64937) == pytest.approx(1.7271, abs=1e-3)
    assert nu_ave_hat(1.0, 75.0, 100.0) == pytest.approx(2.904, abs=5e-3)
    assert nu_ave_hat(0.5, 100.0, 36.084) == pytest.approx(3.211, abs=5e-3)


def test_matches_high_precision_evaluation():
    rng = np.random.default_rng(3)
    for _ in range(25):
        a, ld, pe = rng.uniform(0.143, 1.0), rng.uniform(75, 150), rng.uniform(3.9, 163)
        g, ps, ns, nu = physics_hp(a, ld, pe)
        assert gamma(a, ld) == pytest.approx(g, rel=1e-12)
        assert pe_star(pe, gamma(a, ld)) == pytest.approx(ps, rel=1e-12)
        assert nu_star(gamma(a, ld)) == pytest.approx(ns, rel=1e-12)
        assert nu_ave_hat(a, ld, pe) == pytest.approx(nu, rel=1e-12)


def test_water_analog_coefficients():
    g, _, ns, nu = physics_hp(0.6, 90.0, 40.0, c0="0.3", c1="8.0", m="0.45")
    assert nu_ave_hat(0.6, 90.0, 40.0, WATER_ANALOG) == pytest.approx(nu, rel=1e-12)
    assert nu_star(g, WATER_ANALOG) == pytest.approx(ns, rel=1e-12)


def test_vectorized_equals_scalar():
    a = np.array([0.2, 0.5, 1.0])
    ld = np.array([80.0, 100.0, 140.0])
    pe = np.array([5.0, 50.0, 150.0])
    vec = nu_ave_hat(a, ld, pe)
    for i in range(3):
        assert vec[i] == nu_ave_hat(a[i], ld[i], pe[i])


def test_monotone_in_peclet():
    pe = np.linspace(3.9, 163, 50)
    nu = nu_ave_hat(np.full(50, 0.5), np.full(50, 100.0), pe)
    assert np.all(np.diff(nu) > 0)


def test_domain_errors_and_range_warning():
    with pytest.raises(DomainError):
        gamma(0.0, 75.0)
    with pytest.raises(DomainError):
        gamma(0.5, -1.0)
    with pytest.raises(DomainError):
        nu_ave_hat(0.5, 100.0, -1.0)
    with pytest.warns(RangeWarning):
        nu_ave_hat(0.05, 100.0, 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        nu_ave_hat(0.5, 100.0, 10.0)


def test_chain_and_feature_rows():
    chain = evaluate_chain(1.0, 75.0, 100.0)
    assert set(chain) == {"gamma", "pe_star", "nu_star", "nu_ave_hat"}
    assert chain["pe_star"] == pytest.approx(100.0 * chain["gamma"])
    row = np.array([[1.0, 1.0, 1.5, 112.5, 75.0, 100.0]])
    assert physics_predict(row)[0] == pytest.approx(chain["nu_ave_hat"], rel=1e-15)


def test_params_roundtrip_and_validation():
    assert PhysicsParams.from_dict(SODIUM.to_dict()) == SODIUM
    with pytest.raises(ValueError):
        PhysicsParams(pe_exp=0.0)
    assert physics.SODIUM.c0 == 0.164
