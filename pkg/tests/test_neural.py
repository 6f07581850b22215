import numpy as np
import pytest

from nusurrogate.dataset import fit_normalizer
from nusurrogate.neural import (
    MlpModel,
    MlpTopology,
    NonPositiveTarget,
    TrainConfig,
    fit_mlp,
    forward,
    gradient,
    init_mlp,
    output_loss,
    relative_residuals,
    train,
)
from nusurrogate.numerics import finite_diff_grad

from oracles import central_diff, rel_err


def _net(hidden, hidden_act="sigmoid", output_act="purelin", n_inputs=6, seed=0, scale=1.0):
    topo = MlpTopology(hidden, hidden_act, output_act, n_inputs)
    theta = np.random.default_rng(seed).uniform(-scale, scale, topo.n_params)
    return MlpModel(topo, theta)


def test_init_is_uniform_and_seeded():
    topo = MlpTopology((3,))
    a, b = init_mlp(topo, 5), init_mlp(topo, 5)
    assert topo.n_params == 25
    assert np.array_equal(a.theta, b.theta)
    assert a.theta.min() > 0 and a.theta.max() < 1


def test_hand_forward_passes():
    m = MlpModel(MlpTopology((), "sigmoid", "purelin", 1), np.array([1.0, 0.0]))
    assert forward(m, np.array([[0.7]]))[0] == pytest.approx(0.7)
    m = MlpModel(MlpTopology((1,), "sigmoid", "purelin", 1), np.array([1.0, 0.0, 2.0, 1.0]))
    assert forward(m, np.array([[0.0]]))[0] == pytest.approx(2.0)
    m = MlpModel(MlpTopology((1,), "sigmoid", "relu", 1), np.array([1.0, 0.0, -10.0, 1.0]))
    assert forward(m, np.array([[0.0]]))[0] == 0.0


def test_hand_gradient_single_neuron():
    m = MlpModel(MlpTopology((), "sigmoid", "purelin", 1), np.array([1.0, 0.0]))
    _, g = gradient(m, np.array([[1.0]]), np.array([0.0]), "mse")
    assert g == pytest.approx([2.0, 2.0])


def test_gradient_vanishes_at_perfect_fit():
    m = _net((4,), seed=1)
    X = np.random.default_rng(0).uniform(size=(5, 6))
    _, g = gradient(m, X, forward(m, X), "mse")
    assert np.linalg.norm(g) <= 1e-10


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("loss", ["mse", "mape-smooth"])
def test_sigmoid_gradients_match_finite_differences(seed, loss):
    rng = np.random.default_rng(seed)
    hidden = tuple(rng.integers(1, 6, size=rng.integers(1, 3)))
    m = _net(hidden, seed=seed)
    X = rng.uniform(size=(5, 6))
    y = rng.uniform(1.0, 3.0, 5)
    _, g = gradient(m, X, y, loss)
    fd = finite_diff_grad(lambda t: gradient(m.with_theta(t), X, y, loss)[0], m.theta, 1e-5)
    assert rel_err(g, fd) < 1e-4


@pytest.mark.parametrize("seed", range(6))
def test_relu_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    m = _net((5, 4), "relu", "relu", seed=seed, scale=0.5)
    X = rng.uniform(size=(6, 6))
    # output bias keeps the ReLU head active; inputs are not near kinks at this scale
    theta = np.array(m.theta)
    theta[-1] = 3.0
    m = m.with_theta(theta)
    y = rng.uniform(2.0, 4.0, 6)
    _, g = gradient(m, X, y, "mape-smooth")
    fd = central_diff(lambda t: gradient(m.with_theta(t), X, y, "mape-smooth")[0], m.theta, 1e-6)
    assert rel_err(g, fd) < 1e-3


def test_relative_residual_jacobian():
    rng = np.random.default_rng(4)
    m = _net((3,), seed=4)
    X, y = rng.uniform(size=(7, 6)), rng.uniform(1, 2, 7)
    r, J = relative_residuals(m, X, y)
    assert np.allclose(r, (forward(m, X) - y) / y)
    for i in range(7):
        fd = central_diff(lambda t: (forward(m.with_theta(t), X[i:i + 1])[0] - y[i]) / y[i], m.theta)
        assert rel_err(J[i], fd) < 1e-6
    with pytest.raises(NonPositiveTarget):
        relative_residuals(m, X, -y)


def test_smooth_mape_is_close_to_mape():
    pred, y = np.array([1.0, 5.0]), np.array([2.0, 4.0])
    v, _ = output_loss(pred, y, "mape-smooth")
    assert v == pytest.approx(0.375, abs=1e-6)


def test_lm_recovers_linear_neuron():
    X = np.arange(1.0, 6.0)[:, None]
    y = 2.0 * X[:, 0]
    m = MlpModel(MlpTopology((), "sigmoid", "purelin", 1), np.array([0.3, 0.4]))
    res = train(m, X, y, TrainConfig("lm", val_fraction=0.0, max_epochs=100))
    assert res.model.theta[0] == pytest.approx(2.0, abs=1e-6)
    assert res.model.theta[1] == pytest.approx(0.0, abs=1e-6)


def test_zero_epochs_returns_initial_model():
    m = init_mlp(MlpTopology((3,)), 0)
    X, y = np.random.default_rng(0).uniform(size=(10, 6)), np.ones(10)
    res = train(m, X, y, TrainConfig(max_epochs=0))
    assert res.epochs == 0 and np.array_equal(res.model.theta, m.theta)


@pytest.mark.parametrize("method", ["lm", "sgd", "adam", "rmsprop"])
def test_training_reduces_loss_and_restores_best(method, na87):
    lr = {"lm": 0.01, "sgd": 0.05, "adam": 0.01, "rmsprop": 0.005}[method]
    cfg = TrainConfig(method, learning_rate=lr, max_epochs=60, seed=3)
    res = fit_mlp(MlpTopology((8,)), na87.features, na87.targets, cfg)
    assert res.epochs <= 60
    assert min(res.val_trace) == res.val_trace[res.best_epoch]
    assert res.val_trace[res.best_epoch] <= res.val_trace[0]
    again = fit_mlp(MlpTopology((8,)), na87.features, na87.targets, cfg)
    assert np.array_equal(again.model.theta, res.model.theta)
    assert again.train_trace == res.train_trace


def test_lm_accepted_steps_never_increase_training_loss(na87):
    cfg = TrainConfig("lm", max_epochs=40, patience=40, seed=1)
    res = fit_mlp(MlpTopology((6,)), na87.features, na87.targets, cfg)
    assert all(b <= a + 1e-15 for a, b in zip(res.train_trace, res.train_trace[1:]))


def test_frozen_parameters_stay_put(na87):
    topo = MlpTopology((4,))
    m = init_mlp(topo, 2)
    norm = fit_normalizer(na87.features)
    mask = np.zeros(topo.n_params, dtype=bool)
    mask[-5:] = True
    for method in ("lm", "adam"):
        res = train(m, norm.apply_features(na87.features), na87.targets,
                    TrainConfig(method, max_epochs=5, learning_rate=0.01), mask)
        assert np.array_equal(res.model.theta[~mask], m.theta[~mask])


def test_serialization_roundtrip(na87):
    res = fit_mlp(MlpTopology((3,)), na87.features, na87.targets, TrainConfig(max_epochs=3))
    back = MlpModel.from_dict(res.model.to_dict())
    assert np.array_equal(back.predict(na87.features), res.model.predict(na87.features))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(method="newton")
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(method="sgd", learning_rate=0.0)
    with pytest.raises(ValueError):
        MlpTopology((0,))
