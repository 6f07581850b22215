"""Epsilon-insensitive support vector regression trained by SMO."""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels

KERNELS = ("rbf", "linear", "sigmoid")


class NoConvergence(UserWarning):
    pass


@dataclass(frozen=True)
class SvrConfig:
    kernel: str = "rbf"
    c: float = 1.0
    gamma: float = 0.1
    epsilon: float = 0.01
    coef0: float = 0.0
    tolerance: float = 1e-3
    max_iter: int = 1_000_000

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if not self.c > 0:
            raise ValueError("c must be > 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {"kernel": str(d.pop("kernel", "rbf"))}
        for k, v in d.items():
            kw[k] = int(v) if k == "max_iter" else float(v)
        return cls(**kw)


def kernel_matrix(cfg, X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if cfg.kernel == "linear":
        return X @ Y.T
    if cfg.kernel == "sigmoid":
        return np.tanh(cfg.gamma * (X @ Y.T) + cfg.coef0)
    d2 = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.exp(-cfg.gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True, eq=False)
class SvrModel:
    support_vectors: np.ndarray
    coef: np.ndarray  # alpha - alpha*
    bias: float
    config: SvrConfig
    iterations: int = 0
    converged: bool = True
    dual_objective: float = math.nan
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": "svr",
            "config": self.config.to_dict(),
            "support_vectors": self.support_vectors.tolist(),
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d):
        sv = np.array(d["support_vectors"], dtype=float)
        return cls(sv.reshape(len(d["coef"]), -1) if sv.size else sv.reshape(0, 0),
                   np.array(d["coef"], dtype=float), float(d["bias"]),
                   SvrConfig.from_dict(d["config"]), int(d.get("iterations", 0)),
                   bool(d.get("converged", True)))


def dual_objective(K, z, eps, beta):
    """Epsilon-SVR dual objective (to be maximized) at signed coefficients ``beta``."""
    return float(-0.5 * beta @ K @ beta - eps * np.abs(beta).sum() + z @ beta)


def svr_fit(X, y, cfg=SvrConfig(), seed=0):
    """Solve the epsilon-SVR dual with SMO.

    ``seed`` is accepted for interface symmetry; the solver is deterministic.
    A model that hits ``cfg.max_iter`` is returned with ``converged=False``
    and a :class:`NoConvergence` warning.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("svr_fit needs at least two points")
    K = kernel_matrix(cfg, X, X)
    beta, rho, iters, converged = kernels.smo_solve(K, y, cfg.epsilon, cfg.c,
                                                    cfg.tolerance, cfg.max_iter)
    if not converged:
        warnings.warn(f"SMO stopped after {iters} iterations without converging",
                      NoConvergence, stacklevel=2)
    beta = np.clip(beta, -cfg.c, cfg.c)
    obj = dual_objective(K, y, cfg.epsilon, beta)
    sv = beta != 0.0
    return SvrModel(X[sv].copy(), beta[sv].copy(), float(-rho), cfg, int(iters),
                    bool(converged), obj)


def svr_predict(m, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x)
    if m.coef.size == 0:
        out = np.full(Xs.shape[0], m.bias)
    else:
        out = kernel_matrix(m.config, Xs, m.support_vectors) @ m.coef + m.bias
    return float(out[0]) if single else out


@dataclass(frozen=True)
class KktReport:
    statuses: tuple  # per point: "interior" | "free" | "bound"
    violations: tuple  # indices breaking their condition
    max_violation: float

    @property
    def n_violations(self):
        return len(self.violations)


def kkt_report(m, X, y, tol=None, coef=None):
    """Check epsilon-SVR optimality conditions on the training set.

    Interior points (strictly inside the tube) must carry a zero coefficient;
    bound points (``|coef| == c``) must lie on or outside the tube; free
    points must sit on the tube edge. ``coef`` gives the full per-point
    coefficient vector when the model was not produced by :func:`svr_fit`
    on exactly these rows.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    tol = m.config.tolerance if tol is None else tol
    eps, C = m.config.epsilon, m.config.c
    if coef is None:
        coef = np.zeros(y.size)
        if m.coef.size:
            for sv, b in zip(m.support_vectors, m.coef):
                hit = np.flatnonzero(np.all(X == sv, axis=1))
                coef[hit[0]] = b
    resid = np.asarray(svr_predict(m, X)) - y
    statuses, bad = [], []
    worst = 0.0
    for i, (r, b) in enumerate(zip(resid, coef)):
        a = abs(r)
        if abs(b) >= C:
            statuses.append("bound")
            gap = max(0.0, (eps - tol) - a)
            # sign of the coefficient must push the residual back toward the tube
            if np.sign(b) == np.sign(r) and a > tol:
                gap = max(gap, a)
        elif b != 0.0:
            statuses.append("free")
            gap = max(0.0, abs(a - eps) - tol)
        else:
            statuses.append("interior")
            gap = max(0.0, a - eps - tol)
        if gap > 0:
            bad.append(i)
        worst = max(worst, gap)
    return KktReport(tuple(statuses), tuple(bad), worst)
