"""Self-supervised physics-informed network.

A ReLU trunk of three hidden layers feeds two heads that both read the last
hidden layer: a ReLU neuron predicting Nu_ave and a sigmoid neuron emitting
the physics coefficient (PC). Two loss readings are available:

``literal``
    MAPE(pred, labels) + MSE(physics_norm, pc), where ``physics_norm`` is the
    correlation's prediction min-max scaled with bounds frozen from the
    training rows.
``weighted``
    MAPE(pred, labels) + mean(pc) * MAPE(pred, physics prediction).

MAPE uses ``sqrt(r**2 + 1e-12)`` for ``|r|`` so the loss is differentiable;
the difference from the exact value is below 1e-6.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels, physics
from .dataset import NormalizationParams, fit_normalizer
from .neural import (
    MlpModel,
    MlpTopology,
    NonPositiveTarget,
    SMOOTH_EPS,
    TrainConfig,
    TrainResult,
    gradient_loop,
    validation_split,
)
from .numerics import RandomStream

MODES = ("literal", "weighted")
DEFAULT_WIDTHS = (20, 20, 12)
# Adam step reported for the original framework; diverges with the minibatch
# Adam used here, so the default is an order of magnitude smaller.
REFERENCE_LEARNING_RATE = 0.34
DEFAULT_CONFIG = TrainConfig(method="adam", learning_rate=0.01, batch_size=8,
                             max_epochs=300, patience=10)
_OUT_ACTS = np.array([kernels.RELU, kernels.SIGMOID], dtype=np.int64)


class NonPositiveLabel(NonPositiveTarget):
    pass


@dataclass(frozen=True, eq=False)
class PinnModel:
    widths: tuple
    theta: np.ndarray
    phys_lo: float
    phys_hi: float
    params: physics.PhysicsParams = physics.SODIUM
    mode: str = "literal"
    physics_weight: float = 1.0
    normalizer: NormalizationParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 5 or self.widths[-1] != 2:
            raise ValueError("PINN layout is input, three hidden layers, two heads")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.phys_hi > self.phys_lo:
            raise ValueError("physics bounds need max > min")
        t = np.array(self.theta, dtype=float, copy=True)
        if t.size != kernels.param_count(self.widths):
            raise ValueError("parameter vector does not match the layout")
        t.setflags(write=False)
        object.__setattr__(self, "theta", t)

    @property
    def hidden(self):
        return self.widths[1:-1]

    def with_theta(self, theta):
        return replace(self, theta=theta)

    def physics_norm(self, X_raw):
        ph = physics.physics_predict(X_raw, self.params)
        return (ph - self.phys_lo) / (self.phys_hi - self.phys_lo), ph

    def predict(self, X_raw):
        X = np.atleast_2d(np.asarray(X_raw, dtype=float))
        if self.normalizer is not None:
            X = self.normalizer.apply_features(X)
        return pinn_forward(self, X)[0]

    def to_dict(self):
        return {
            "kind": "pinn",
            "widths": list(self.widths),
            "layers": [{"W": W.tolist(), "b": b.tolist()}
                       for W, b in kernels._unpack(self.theta, np.array(self.widths))],
            "phys_lo": self.phys_lo,
            "phys_hi": self.phys_hi,
            "params": self.params.to_dict(),
            "mode": self.mode,
            "physics_weight": self.physics_weight,
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        theta = np.concatenate([np.concatenate([np.ravel(l["W"]), l["b"]]) for l in d["layers"]])
        norm = None if d.get("normalizer") is None else NormalizationParams.from_dict(d["normalizer"])
        return cls(tuple(d["widths"]), theta, float(d["phys_lo"]), float(d["phys_hi"]),
                   physics.PhysicsParams.from_dict(d["params"]), d["mode"],
                   float(d["physics_weight"]), norm)


def pinn_forward(m, X):
    """``(prediction, pc)`` arrays for normalized inputs."""
    out = kernels.mlp_forward(m.theta, np.array(m.widths), kernels.RELU, _OUT_ACTS,
                              np.atleast_2d(np.asarray(X, dtype=float)))
    return out[:, 0], out[:, 1]


def _smooth_mape(pred, ref):
    r = (pred - ref) / ref
    s = np.sqrt(r * r + SMOOTH_EPS)
    return float(np.mean(s)), (r / ref) / s / pred.size


def _loss_terms(pred, pcs, labels, physics_norm, mode, physics_raw, weight):
    """Loss value with its derivatives w.r.t. predictions and PCs."""
    labels = np.asarray(labels, dtype=float)
    if np.any(labels <= 0):
        raise NonPositiveLabel("labels must be > 0")
    n = labels.size
    data, d_pred = _smooth_mape(pred, labels)
    if mode == "literal":
        diff = pcs - physics_norm
        return data + weight * float(np.mean(diff * diff)), d_pred, weight * 2.0 * diff / n
    if physics_raw is None:
        raise ValueError("weighted mode needs the raw physics predictions")
    phys, d_phys = _smooth_mape(pred, np.asarray(physics_raw, dtype=float))
    gate = float(np.mean(pcs))
    return (data + weight * gate * phys, d_pred + weight * gate * d_phys,
            np.full(n, weight * phys / n))


def pinn_loss(predictions, pcs, labels, physics_norm, mode="literal", physics_raw=None,
              weight=1.0):
    pred = np.asarray(predictions, dtype=float)
    pcs = np.asarray(pcs, dtype=float)
    physics_norm = np.asarray(physics_norm, dtype=float)
    if not (pred.shape == pcs.shape == physics_norm.shape == np.shape(labels)):
        raise ValueError("all vectors must have the same length")
    return _loss_terms(pred, pcs, labels, physics_norm, mode, physics_raw, weight)[0]


def loss_and_gradient(m, X, labels, physics_norm, physics_raw=None):
    """Composite loss of ``m`` on normalized rows and its parameter gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pred, pcs = pinn_forward(m, X)
    value, d_pred, d_pc = _loss_terms(pred, pcs, labels, physics_norm, m.mode,
                                      physics_raw, m.physics_weight)
    G = np.column_stack([d_pred, d_pc])
    grad = kernels.mlp_backprop(m.theta, np.array(m.widths), kernels.RELU, _OUT_ACTS, X, G)
    return value, grad


def init_pinn(widths, seed, label_mean=1.0):
    """He-uniform trunk, Glorot-uniform heads, zero biases.

    The prediction-head bias starts at ``label_mean``. The trunk and the
    prediction head draw from the root stream in layer order; the PC head
    draws from a child stream, so the trunk plus prediction head equals
    :func:`init_plain` for the same seed.
    """
    theta = init_plain(widths, seed, label_mean)
    h = widths[-2]
    rng = RandomStream(seed).child(1)
    lim = math.sqrt(6.0 / (h + 1))
    pc_w = rng.gen.uniform(-lim, lim, h)
    return _merge_heads(theta, widths, pc_w, 0.0)


def init_plain(widths, seed, label_mean=1.0):
    """Trunk + prediction head only (single-output layout)."""
    widths = tuple(widths)
    rng = RandomStream(seed)
    parts = []
    for din, dout in zip(widths[:-2], widths[1:-1]):
        lim = math.sqrt(6.0 / din)
        parts.append(rng.gen.uniform(-lim, lim, din * dout))
        parts.append(np.zeros(dout))
    h = widths[-2]
    lim = math.sqrt(6.0 / (h + 1))
    parts.append(rng.gen.uniform(-lim, lim, h))
    parts.append(np.array([label_mean]))
    return np.concatenate(parts)


def _merge_heads(plain_theta, widths, pc_w, pc_b):
    h = widths[-2]
    trunk = plain_theta[:-(h + 1)]
    pred_w = plain_theta[-(h + 1):-1]
    pred_b = plain_theta[-1]
    return np.concatenate([trunk, pred_w, pc_w, [pred_b, pc_b]])


def plain_view(m):
    """The trunk and prediction head as a single-output ReLU :class:`MlpModel`."""
    h = m.widths[-2]
    theta = np.asarray(m.theta)
    out_w = theta[-(2 * h + 2):-2].reshape(2, h)
    out_b = theta[-2:]
    plain = np.concatenate([theta[:-(2 * h + 2)], out_w[0], out_b[:1]])
    topo = MlpTopology(m.hidden, "relu", "relu", m.widths[0], 1)
    return MlpModel(topo, plain, m.normalizer)


def pinn_train(X_raw, y, widths=DEFAULT_WIDTHS, cfg=DEFAULT_CONFIG, mode="literal",
               params=physics.SODIUM, seed=None, physics_weight=1.0):
    """Fit a PINN on raw feature rows.

    Physics-normalization bounds are frozen from the correlation's
    predictions on all rows passed in, before any optimization. Returns a
    :class:`~nusurrogate.neural.TrainResult` holding a :class:`PinnModel`.
    """
    if cfg.method == "lm":
        raise ValueError("PINN training uses sgd, adam or rmsprop")
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("pinn_train needs at least two points")
    if np.any(y <= 0):
        raise NonPositiveLabel("labels must be > 0")
    widths = (X_raw.shape[1], *widths, 2)
    norm = fit_normalizer(X_raw)
    X = norm.apply_features(X_raw)
    phys_raw = physics.physics_predict(X_raw, params)
    lo, hi = float(phys_raw.min()), float(phys_raw.max())
    if not hi > lo:
        raise ValueError("physics predictions are constant; cannot normalize")
    phys_norm = (phys_raw - lo) / (hi - lo)
    tr_idx, va_idx = validation_split(y.size, cfg.val_fraction, cfg.seed)
    theta0 = init_pinn(widths, cfg.seed, float(np.mean(y[tr_idx])))
    m = PinnModel(widths, theta0, lo, hi, params, mode, physics_weight, norm)
    if cfg.max_epochs == 0:
        return TrainResult(m, 0, [], [], 0)

    Xt, yt, nt, rt = X[tr_idx], y[tr_idx], phys_norm[tr_idx], phys_raw[tr_idx]
    Xv, yv, nv, rv = X[va_idx], y[va_idx], phys_norm[va_idx], phys_raw[va_idx]

    def loss_grad(theta, idx):
        return loss_and_gradient(m.with_theta(theta), Xt[idx], yt[idx], nt[idx], rt[idx])

    def val_loss(theta):
        if yv.size == 0:
            return loss_grad(theta, np.arange(yt.size))[0]
        mm = m.with_theta(theta)
        pred, pcs = pinn_forward(mm, Xv)
        return pinn_loss(pred, pcs, yv, nv, mode, rv, physics_weight)

    best, epochs, stop, aborted = gradient_loop(theta0, loss_grad, val_loss, yt.size, cfg)
    return TrainResult(m.with_theta(best), epochs, stop.train_trace, stop.val_trace,
                       stop.best_epoch, aborted)


def pc_values(m, X_raw):
    X = np.atleast_2d(np.asarray(X_raw, dtype=float))
    if m.normalizer is not None:
        X = m.normalizer.apply_features(X)
    return pinn_forward(m, X)[1]


def pc_histogram(m, X_raw, bins=20):
    """Histogram of physics-coefficient outputs on [0, 1] with mean and std."""
    pcs = pc_values(m, X_raw)
    counts, edges = np.histogram(pcs, bins=bins, range=(0.0, 1.0))
    return {
        "edges": edges,
        "counts": counts,
        "mean": float(np.mean(pcs)),
        "std": float(np.std(pcs, ddof=1)) if pcs.size > 1 else 0.0,
    }
