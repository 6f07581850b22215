"""Shallow fully connected regressors and their trainers.

Parameters are kept as one flat vector (see :mod:`nusurrogate.kernels` for
the layout). Training methods: Levenberg-Marquardt on relative residuals,
and minibatch SGD / Adam / RMSprop on ``mse`` or a smoothed MAPE. All
methods use a seeded validation split with patience-based early stopping
and return the best-validation parameters.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .dataset import NormalizationParams, fit_normalizer
from .numerics import RandomStream

METHODS = ("lm", "sgd", "adam", "rmsprop")
LOSSES = ("mse", "mape-smooth")
SMOOTH_EPS = 1e-12


class NonPositiveTarget(ValueError):
    pass


class NonFiniteLoss(UserWarning):
    pass


@dataclass(frozen=True)
class MlpTopology:
    hidden: tuple = (8,)
    hidden_act: str = "sigmoid"
    output_act: str = "purelin"
    n_inputs: int = 6
    n_outputs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        for act in (self.hidden_act, self.output_act):
            if act not in kernels.ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def widths(self):
        return np.array((self.n_inputs, *self.hidden, self.n_outputs), dtype=np.int64)

    @property
    def out_acts(self):
        return np.full(self.n_outputs, kernels.ACTIVATIONS[self.output_act], dtype=np.int64)

    @property
    def n_params(self):
        return kernels.param_count(self.widths)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class MlpModel:
    topology: MlpTopology
    theta: np.ndarray
    normalizer: NormalizationParams | None = None

    def __post_init__(self):
        t = np.array(self.theta, dtype=float, copy=True)
        if t.shape != (self.topology.n_params,):
            raise ValueError(f"expected {self.topology.n_params} parameters, got {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "theta", t)

    def with_theta(self, theta):
        return replace(self, theta=theta)

    def layers(self):
        return kernels._unpack(self.theta, self.topology.widths)

    def predict(self, X_raw):
        X = np.atleast_2d(np.asarray(X_raw, dtype=float))
        if self.normalizer is not None:
            X = self.normalizer.apply_features(X)
        return forward(self, X)

    def to_dict(self):
        return {
            "kind": "mlp",
            "topology": self.topology.to_dict(),
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers()],
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        topo = MlpTopology.from_dict(d["topology"])
        theta = np.concatenate([np.concatenate([np.ravel(l["W"]), l["b"]]) for l in d["layers"]])
        norm = None if d.get("normalizer") is None else NormalizationParams.from_dict(d["normalizer"])
        return cls(topo, theta, norm)


@dataclass(frozen=True)
class TrainConfig:
    method: str = "lm"
    learning_rate: float = 0.01
    batch_size: int = 8
    max_epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.2
    seed: int = 0
    loss: str = "mse"
    lm_mu: float = 1e-3
    lm_factor: float = 10.0
    lm_mu_max: float = 1e10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.method != "lm" and not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad batch_size / max_epochs")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        types = {f: type(v) for f, v in asdict(cls()).items()}
        return cls(**{k: types[k](v) for k, v in d.items()})


@dataclass(frozen=True, eq=False)
class TrainResult:
    model: object
    epochs: int
    train_trace: list
    val_trace: list
    best_epoch: int
    aborted: bool = False
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# construction and passes
# ---------------------------------------------------------------------------

def init_mlp(topo, seed=0, normalizer=None):
    """Every weight and bias drawn from U(0, 1)."""
    theta = RandomStream(seed).uniform(topo.n_params)
    return MlpModel(topo, theta, normalizer)


def forward_raw(m, X):
    """All output units, shape ``(n, n_outputs)``, for normalized inputs."""
    t = m.topology
    return kernels.mlp_forward(m.theta, t.widths, kernels.ACTIVATIONS[t.hidden_act],
                               t.out_acts, np.atleast_2d(X))


def forward(m, X):
    """First output unit for normalized inputs; scalar for a single vector."""
    X = np.asarray(X, dtype=float)
    out = forward_raw(m, X)[:, 0]
    return float(out[0]) if X.ndim == 1 else out


def output_loss(pred, y, loss):
    """Loss value and its derivative with respect to ``pred``."""
    n = y.size
    d = pred - y
    if loss == "mse":
        return float(np.mean(d * d)), 2.0 * d / n
    if np.any(y <= 0):
        raise NonPositiveTarget("relative losses need positive targets")
    r = d / y
    s = np.sqrt(r * r + SMOOTH_EPS)
    return float(np.mean(s)), (r / y) / s / n


def gradient(m, X, y, loss="mse"):
    """Loss and its exact gradient with respect to the flat parameters."""
    t = m.topology
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    pred = forward(m, X)
    value, dpred = output_loss(pred, y, loss)
    G = np.zeros((y.size, t.n_outputs))
    G[:, 0] = dpred
    grad = kernels.mlp_backprop(m.theta, t.widths, kernels.ACTIVATIONS[t.hidden_act],
                                t.out_acts, X, G)
    return value, grad


def relative_residuals(m, X, y):
    """Residuals ``(pred - y) / y`` and their Jacobian, as used by LM."""
    t = m.topology
    y = np.asarray(y, dtype=float).ravel()
    if np.any(y <= 0):
        raise NonPositiveTarget("relative residuals need positive targets")
    pred, J = kernels.mlp_jacobian(m.theta, t.widths, kernels.ACTIVATIONS[t.hidden_act],
                                   t.out_acts, np.atleast_2d(X), 0)
    return (pred - y) / y, J / y[:, None]


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def validation_split(n, fraction, seed):
    """Seeded ``(train, val)`` index split; ``val`` is empty when fraction is 0."""
    if n < 2 and fraction > 0:
        raise ValueError("need at least two points for a validation split")
    perm = RandomStream(seed).child(0x5EED).permutation(n)
    m = 0 if fraction == 0 else min(n - 1, max(1, int(round(fraction * n))))
    return np.sort(perm[m:]), np.sort(perm[:m])


class _Stopper:
    """Tracks the best validation loss and the patience counter."""

    def __init__(self, theta, train_loss, val_loss, patience):
        self.best_theta = theta.copy()
        self.best_val = val_loss
        self.best_epoch = 0
        self.patience = patience
        self.train_trace = [train_loss]
        self.val_trace = [val_loss]

    def record(self, epoch, theta, train_loss, val_loss):
        self.train_trace.append(train_loss)
        self.val_trace.append(val_loss)
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.best_theta = theta.copy()
            self.best_epoch = epoch
        return epoch - self.best_epoch >= self.patience


def gradient_loop(theta0, loss_grad, val_loss, n_train, cfg, trainable=None):
    """Minibatch first-order training with early stopping.

    ``loss_grad(theta, idx)`` returns the loss and gradient on training rows
    ``idx`` (positions in ``range(n_train)``); ``val_loss(theta)`` scores the
    validation rows. Returns ``(best_theta, epochs, stopper, aborted)``.
    """
    rng = RandomStream(cfg.seed).child(0xBA7C)
    theta = np.array(theta0, dtype=float)
    mask = np.ones_like(theta) if trainable is None else np.asarray(trainable, dtype=float)
    all_idx = np.arange(n_train)
    stop = _Stopper(theta, loss_grad(theta, all_idx)[0], val_loss(theta), cfg.patience)
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0
    epochs = 0
    aborted = False
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            _, g = loss_grad(theta, idx)
            g = g * mask
            step += 1
            if cfg.method == "sgd":
                theta -= cfg.learning_rate * g
            elif cfg.method == "adam":
                m1 = 0.9 * m1 + 0.1 * g
                m2 = 0.999 * m2 + 0.001 * g * g
                mh = m1 / (1.0 - 0.9 ** step)
                vh = m2 / (1.0 - 0.999 ** step)
                theta -= cfg.learning_rate * mh / (np.sqrt(vh) + 1e-8)
            else:
                m2 = 0.9 * m2 + 0.1 * g * g
                theta -= cfg.learning_rate * g / (np.sqrt(m2) + 1e-8)
        epochs = epoch
        tr = loss_grad(theta, all_idx)[0]
        va = val_loss(theta)
        if not (math.isfinite(tr) and math.isfinite(va)):
            warnings.warn(f"non-finite loss at epoch {epoch}; keeping best-so-far",
                          NonFiniteLoss, stacklevel=3)
            aborted = True
            break
        if stop.record(epoch, theta, tr, va):
            break
    return stop.best_theta, epochs, stop, aborted


def lm_loop(theta0, residuals, val_loss, cfg, trainable=None):
    """Levenberg-Marquardt with multiplicative damping and early stopping.

    ``residuals(theta, jac)`` returns the training residual vector and, when
    ``jac`` is true, its Jacobian. A rejected trial step multiplies the
    damping by ``lm_factor`` and leaves the parameters untouched; training
    ends when the damping exceeds ``lm_mu_max``.
    """
    theta = np.array(theta0, dtype=float)
    free = np.ones(theta.size, dtype=bool) if trainable is None else np.asarray(trainable, bool)
    r, _ = residuals(theta, False)
    loss = float(np.mean(r * r))
    stop = _Stopper(theta, loss, val_loss(theta), cfg.patience)
    mu = cfg.lm_mu
    epochs = 0
    aborted = False
    for epoch in range(1, cfg.max_epochs + 1):
        r, J = residuals(theta, True)
        J = J[:, free]
        g = J.T @ r
        H = J.T @ J
        eye = np.eye(H.shape[0])
        accepted = False
        while mu <= cfg.lm_mu_max:
            try:
                delta = np.linalg.solve(H + mu * eye, -g)
            except np.linalg.LinAlgError:
                mu *= cfg.lm_factor
                continue
            cand = theta.copy()
            cand[free] += delta
            r_new, _ = residuals(cand, False)
            new_loss = float(np.mean(r_new * r_new))
            if math.isfinite(new_loss) and new_loss < loss:
                theta, loss = cand, new_loss
                mu = max(mu / cfg.lm_factor, 1e-20)
                accepted = True
                break
            mu *= cfg.lm_factor
        if not accepted:
            break
        epochs = epoch
        va = val_loss(theta)
        if not math.isfinite(va):
            warnings.warn(f"non-finite validation loss at epoch {epoch}",
                          NonFiniteLoss, stacklevel=3)
            aborted = True
            break
        if stop.record(epoch, theta, loss, va):
            break
    return stop.best_theta, epochs, stop, aborted


def train(m, X, y, cfg=TrainConfig(), trainable=None):
    """Train ``m`` on normalized inputs ``X`` and targets ``y``.

    ``trainable`` is an optional boolean mask over the flat parameters
    (frozen entries keep their initial values).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("training needs at least two points")
    if cfg.max_epochs == 0:
        return TrainResult(m, 0, [], [], 0)
    tr_idx, va_idx = validation_split(y.size, cfg.val_fraction, cfg.seed)
    Xt, yt, Xv, yv = X[tr_idx], y[tr_idx], X[va_idx], y[va_idx]

    if cfg.method == "lm":
        def residuals(theta, jac):
            mm = m.with_theta(theta)
            if jac:
                return relative_residuals(mm, Xt, yt)
            return (forward(mm, Xt) - yt) / yt, None

        def val_loss(theta):
            if yv.size == 0:
                return float(np.mean(residuals(theta, False)[0] ** 2))
            r = (forward(m.with_theta(theta), Xv) - yv) / yv
            return float(np.mean(r * r))

        if np.any(y <= 0):
            raise NonPositiveTarget("LM uses relative residuals; targets must be > 0")
        best, epochs, stop, aborted = lm_loop(m.theta, residuals, val_loss, cfg, trainable)
    else:
        def loss_grad(theta, idx):
            return gradient(m.with_theta(theta), Xt[idx], yt[idx], cfg.loss)

        def val_loss(theta):
            if yv.size == 0:
                return loss_grad(theta, np.arange(yt.size))[0]
            return output_loss(forward(m.with_theta(theta), Xv), yv, cfg.loss)[0]

        best, epochs, stop, aborted = gradient_loop(m.theta, loss_grad, val_loss, yt.size,
                                                    cfg, trainable)
    return TrainResult(m.with_theta(best), epochs, stop.train_trace, stop.val_trace,
                       stop.best_epoch, aborted)


def fit_mlp(topo, X_raw, y, cfg=TrainConfig(), init=None, trainable=None):
    """Normalize on ``X_raw``, initialize (U(0,1) unless ``init`` given) and train."""
    norm = fit_normalizer(np.asarray(X_raw, dtype=float))
    m = init if init is not None else init_mlp(topo, cfg.seed)
    m = replace(m, normalizer=norm)
    return train(m, norm.apply_features(X_raw), y, cfg, trainable)
