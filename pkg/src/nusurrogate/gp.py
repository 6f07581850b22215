"""Gaussian-process regression with a kernel menu plus constant and white-noise terms.

Covariance between training inputs ``i`` and ``j``::

    c_k * k_base(x_i, x_j) + c_b + noise_var * [i == j]

The model is zero-mean on normalized features; the constant term ``c_b``
absorbs the target offset. Hyperparameters are fitted by maximizing the log
marginal likelihood with Nelder-Mead in log space.
"""

import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from .numerics import NotPositiveDefinite, RandomStream, cho_solve_lower, cholesky, nelder_mead_min

BASES = ("ldp", "ess", "matern", "rbf", "rq")
MATERN_NUS = (0.5, 1.5, 2.5)

# log-space box used to keep the optimizer away from numerically absurd regions
_BOUNDS = {
    "length_scale": (1e-3, 1e3),
    "period": (1e-2, 1e2),
    "rq_alpha": (1e-3, 1e3),
    "signal_var": (1e-8, 1e4),
    "constant": (1e-8, 1e4),
    "noise_var": (1e-10, 1e2),
}


class BadKernelParams(ValueError):
    pass


class DegenerateTargets(UserWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    base: str = "rbf"
    length_scale: float = 1.0
    period: float = 1.0
    rq_alpha: float = 1.0
    nu: float = 2.5
    signal_var: float = 1.0
    constant: float = 0.0
    noise_var: float = 1e-6

    def __post_init__(self):
        if self.base not in BASES:
            raise BadKernelParams(f"unknown kernel base {self.base!r}")
        if self.base == "matern" and self.nu not in MATERN_NUS:
            raise BadKernelParams(f"matern nu must be one of {MATERN_NUS}")
        for name in ("length_scale", "period", "rq_alpha", "signal_var"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise BadKernelParams(f"{name} must be > 0, got {v}")
        for name in ("constant", "noise_var"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise BadKernelParams(f"{name} must be >= 0, got {v}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = d.pop("base")
        return cls(base, **{k: float(v) for k, v in d.items()})


def hyper_names(base):
    shape = {
        "ldp": (),
        "rbf": ("length_scale",),
        "matern": ("length_scale",),
        "rq": ("length_scale", "rq_alpha"),
        "ess": ("length_scale", "period"),
    }[base]
    return shape + ("signal_var", "constant", "noise_var")


def _sqdist(X, Y):
    d = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(d, 0.0)


def base_kernel(spec, X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise BadKernelParams("input dimensions differ")
    if spec.base == "ldp":
        return X @ Y.T
    d2 = _sqdist(X, Y)
    ell = spec.length_scale
    if spec.base == "rbf":
        return np.exp(-0.5 * d2 / ell ** 2)
    if spec.base == "rq":
        return (1.0 + d2 / (2.0 * spec.rq_alpha * ell ** 2)) ** (-spec.rq_alpha)
    r = np.sqrt(d2)
    if spec.base == "ess":
        return np.exp(-2.0 * np.sin(np.pi * r / spec.period) ** 2 / ell ** 2)
    s = r / ell
    if spec.nu == 0.5:
        return np.exp(-s)
    if spec.nu == 1.5:
        t = math.sqrt(3.0) * s
        return (1.0 + t) * np.exp(-t)
    t = math.sqrt(5.0) * s
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


def cross_cov(spec, X, Y):
    """Latent covariance ``c_k k(X, Y) + c_b`` (no noise term)."""
    return spec.signal_var * base_kernel(spec, X, Y) + spec.constant


def gram(spec, X):
    """Training covariance including the white-noise diagonal."""
    K = cross_cov(spec, X, X)
    K[np.diag_indices_from(K)] += spec.noise_var
    return K


def kernel_eval(spec, x, y, same_index=False):
    """Scalar covariance; the noise term applies only when ``same_index``."""
    v = float(cross_cov(spec, np.atleast_2d(x), np.atleast_2d(y))[0, 0])
    return v + spec.noise_var if same_index else v


@dataclass(frozen=True, eq=False)
class GpModel:
    spec: KernelSpec
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    dual: np.ndarray
    lml: float

    def to_dict(self):
        return {
            "kind": "gp",
            "kernel": self.spec.to_dict(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "dual": self.dual.tolist(),
            "lml": self.lml,
        }

    @classmethod
    def from_dict(cls, d):
        return gp_condition(KernelSpec.from_dict(d["kernel"]), np.array(d["X"]), np.array(d["y"]))


def _lml(y, L, dual):
    n = y.size
    return float(-0.5 * y @ dual - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))


def gp_condition(spec, X, y):
    """Condition a GP with fixed hyperparameters on ``(X, y)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X and y lengths differ")
    L = cholesky(gram(spec, X))
    dual = cho_solve_lower(L, y)
    return GpModel(spec, X.copy(), y.copy(), L, dual, _lml(y, L, dual))


def log_marginal_likelihood(spec, X, y):
    return gp_condition(spec, X, y).lml


def _unpack(base, nu, theta):
    names = hyper_names(base)
    vals = {}
    for name, t in zip(names, theta):
        lo, hi = _BOUNDS[name]
        vals[name] = float(np.clip(math.exp(min(max(t, -700.0), 700.0)), lo, hi))
    return KernelSpec(base, nu=nu, **vals)


def _default_start(base, y):
    mean = float(np.mean(y))
    var = float(np.var(y)) if y.size > 1 else 0.0
    start = {
        "length_scale": 0.5,
        # longer than the normalized data span, where the periodic kernel stays
        # close to positive-definite in several dimensions
        "period": 4.0,
        "rq_alpha": 1.0,
        "signal_var": max(var, 1e-6),
        "constant": max(mean * mean, 1e-6),
        "noise_var": max(1e-2 * var, 1e-8),
    }
    return np.log([start[n] for n in hyper_names(base)])


def gp_fit(X, y, base="rbf", restarts=5, seed=0, nu=2.5, budget=400):
    """Fit kernel hyperparameters by maximizing the log marginal likelihood.

    The first restart begins at a data-informed default; the others jitter
    it by up to two log-units per parameter. The best restart is kept.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 1:
        raise ValueError("gp_fit needs at least one training point")
    if np.ptp(y) == 0:
        warnings.warn("all training targets are equal", DegenerateTargets, stacklevel=2)
    rng = RandomStream(seed)

    def neg_lml(theta):
        try:
            return -log_marginal_likelihood(_unpack(base, nu, theta), X, y)
        except (NotPositiveDefinite, np.linalg.LinAlgError, FloatingPointError):
            return math.inf

    x0 = _default_start(base, y)
    best = None
    for r in range(max(1, restarts)):
        start = x0 if r == 0 else x0 + rng.gen.uniform(-2.0, 2.0, x0.size)
        if not math.isfinite(neg_lml(start)):
            continue
        theta, val, _ = nelder_mead_min(neg_lml, start, budget, step=0.5)
        if best is None or val < best[1]:
            best = (theta, val)
    if best is None:
        raise NotPositiveDefinite("no restart produced a positive-definite covariance")
    return gp_condition(_unpack(base, nu, best[0]), X, y)


def gp_predict(m, x):
    """Posterior mean and (clamped) latent variance at one or many inputs."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x)
    Ks = cross_cov(m.spec, Xs, m.X)
    mean = Ks @ m.dual
    v = cho_solve_lower(m.chol, Ks.T)
    if m.spec.base == "ldp":
        kdiag = (Xs * Xs).sum(axis=1)
    else:
        kdiag = np.ones(Xs.shape[0])
    prior = m.spec.signal_var * kdiag + m.spec.constant
    var = np.maximum(prior - np.einsum("ij,ji->i", Ks, v), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def with_noise(spec, noise_var):
    return replace(spec, noise_var=noise_var)
