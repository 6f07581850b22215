import os
import subprocess
import sys

import numpy as np
import pytest

from nusurrogate import kernels
from nusurrogate._accel import JIT_ENABLED

LAYOUTS = [
    ((6, 3, 1), kernels.SIGMOID, [kernels.PURELIN]),
    ((6, 5, 4, 1), kernels.RELU, [kernels.RELU]),
    ((6, 7, 7, 3, 2), kernels.RELU, [kernels.RELU, kernels.SIGMOID]),
    ((2, 1), kernels.SIGMOID, [kernels.SIGMOID]),
]


def _case(widths, seed, n=9):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=kernels.param_count(widths))
    X = rng.uniform(size=(n, widths[0]))
    G = rng.normal(size=(n, widths[-1]))
    return theta, np.array(widths, dtype=np.int64), X, G


def test_param_count():
    assert kernels.param_count((6, 3, 1)) == 25
    assert kernels.param_count((6, 3, 2, 1)) == 21 + 8 + 3


@pytest.mark.parametrize("widths,hact,oacts", LAYOUTS)
def test_compiled_and_numpy_paths_agree(widths, hact, oacts):
    theta, w, X, G = _case(widths, len(widths))
    oa = np.array(oacts, dtype=np.int64)
    f_nb = kernels.mlp_forward_nb(theta, w, hact, oa, X)
    f_np = kernels.mlp_forward_np(theta, w, hact, oa, X)
    assert np.allclose(f_nb, f_np, rtol=1e-13, atol=1e-14)
    g_nb = kernels.mlp_backprop_nb(theta, w, hact, oa, X, G)
    g_np = kernels.mlp_backprop_np(theta, w, hact, oa, X, G)
    assert np.allclose(g_nb, g_np, rtol=1e-12, atol=1e-13)
    for unit in range(widths[-1]):
        o_nb, J_nb = kernels.mlp_jacobian_nb(theta, w, hact, oa, X, unit)
        o_np, J_np = kernels.mlp_jacobian_np(theta, w, hact, oa, X, unit)
        assert np.allclose(o_nb, o_np, rtol=1e-13) and np.allclose(J_nb, J_np, rtol=1e-12, atol=1e-13)


def test_jacobian_rows_sum_to_backprop():
    theta, w, X, _ = _case((6, 4, 1), 1)
    oa = np.array([kernels.PURELIN], dtype=np.int64)
    _, J = kernels.mlp_jacobian(theta, w, kernels.SIGMOID, oa, X, 0)
    g = kernels.mlp_backprop(theta, w, kernels.SIGMOID, oa, X, np.ones((len(X), 1)))
    assert np.allclose(J.sum(axis=0), g, rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_smo_paths_agree(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(size=(12, 3))
    K = np.exp(-((A[:, None] - A[None]) ** 2).sum(-1))
    z = rng.normal(size=12)
    a = kernels.smo_solve_nb(K, z, 0.05, 2.0, 1e-6, 100000)
    b = kernels.smo_solve_np(K, z, 0.05, 2.0, 1e-6, 100000)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-12)


def test_env_flag_selects_numpy_path():
    code = "from nusurrogate import _accel; print(_accel.JIT_ENABLED)"
    env = dict(os.environ, NUSURROGATE_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "False"
    env["NUSURROGATE_DISABLE_JIT"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == str(JIT_ENABLED)


def test_training_matches_across_paths(tmp_path):
    code = (
        "import numpy as np;"
        "from nusurrogate.dataset import synthesize_dataset;"
        "from nusurrogate.neural import MlpTopology, TrainConfig, fit_mlp;"
        "ds = synthesize_dataset(40, noise=0.02, seed=3);"
        "r = fit_mlp(MlpTopology((4,)), ds.features, ds.targets, TrainConfig(max_epochs=20));"
        f"np.save(r'{tmp_path}/' + __import__('os').environ['TAG'] + '.npy', r.model.theta)"
    )
    for tag, flag in (("jit", "0"), ("numpy", "1")):
        env = dict(os.environ, NUSURROGATE_DISABLE_JIT=flag, TAG=tag)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)
    a, b = np.load(tmp_path / "jit.npy"), np.load(tmp_path / "numpy.npy")
    assert np.allclose(a, b, rtol=1e-8, atol=1e-10)
