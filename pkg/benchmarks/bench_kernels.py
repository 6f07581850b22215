"""Time the numba kernels against the pure-numpy fallbacks.

Run from the repository root::

    python benchmarks/bench_kernels.py

Both paths are imported from :mod:`nusurrogate.kernels` directly, so the
``NUSURROGATE_DISABLE_JIT`` flag does not need to be toggled.
"""

import time

import numpy as np

from nusurrogate import kernels
from nusurrogate._accel import JIT_ENABLED
from nusurrogate.dataset import fit_normalizer, synthesize_dataset
from nusurrogate.svr import SvrConfig, kernel_matrix


def best_of(fn, repeat=5):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ds = synthesize_dataset(87, noise=0.03, seed=0)
    X = fit_normalizer(ds).apply_features(ds.features)
    y = ds.targets
    rng = np.random.default_rng(0)
    widths = np.array([6, 20, 20, 12, 2], dtype=np.int64)
    out_acts = np.array([kernels.RELU, kernels.SIGMOID], dtype=np.int64)
    theta = rng.uniform(-0.5, 0.5, kernels.param_count(widths))
    G = rng.normal(size=(X.shape[0], 2))
    K = kernel_matrix(SvrConfig(gamma=0.5), X, X)

    Xb, Gb = X[:8], G[:8]
    cases = {
        "forward n=8": (
            lambda: kernels.mlp_forward_nb(theta, widths, kernels.RELU, out_acts, Xb),
            lambda: kernels.mlp_forward_np(theta, widths, kernels.RELU, out_acts, Xb),
        ),
        "forward n=87": (
            lambda: kernels.mlp_forward_nb(theta, widths, kernels.RELU, out_acts, X),
            lambda: kernels.mlp_forward_np(theta, widths, kernels.RELU, out_acts, X),
        ),
        "backprop n=8": (
            lambda: kernels.mlp_backprop_nb(theta, widths, kernels.RELU, out_acts, Xb, Gb),
            lambda: kernels.mlp_backprop_np(theta, widths, kernels.RELU, out_acts, Xb, Gb),
        ),
        "backprop n=87": (
            lambda: kernels.mlp_backprop_nb(theta, widths, kernels.RELU, out_acts, X, G),
            lambda: kernels.mlp_backprop_np(theta, widths, kernels.RELU, out_acts, X, G),
        ),
        "jacobian n=87": (
            lambda: kernels.mlp_jacobian_nb(theta, widths, kernels.RELU, out_acts, X, 0),
            lambda: kernels.mlp_jacobian_np(theta, widths, kernels.RELU, out_acts, X, 0),
        ),
        "smo n=87": (
            lambda: kernels.smo_solve_nb(K, y, 0.01, 100.0, 1e-3, 1_000_000),
            lambda: kernels.smo_solve_np(K, y, 0.01, 100.0, 1e-3, 1_000_000),
        ),
    }
    print(f"numba active: {JIT_ENABLED}")
    print(f"{'kernel':14s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, (fast, slow) in cases.items():
        a, b = best_of(fast), best_of(slow)
        print(f"{name:14s} {a * 1e3:11.3f} {b * 1e3:11.3f} {b / a:9.1f}")


if __name__ == "__main__":
    main()
