"""Model families with a common ``fit(X_raw, y, seed) -> predictor`` interface.

Each family normalizes features on the rows passed to ``fit`` and returns a
:class:`Fitted` wrapper whose ``predict`` takes raw feature rows. Families are
plain frozen dataclasses so they pickle cleanly into worker processes.
"""

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import physics
from .dataset import fit_normalizer
from .gp import KernelSpec, gp_condition, gp_fit, gp_predict
from .neural import MlpModel, MlpTopology, TrainConfig, fit_mlp
from .pinn import DEFAULT_CONFIG, DEFAULT_WIDTHS, pinn_train
from .svr import SvrConfig, svr_fit, svr_predict
from .transfer import TransferPlan, transfer_train

FAMILY_TAGS = ("gp", "svr", "nn", "tr-nn", "pinn", "physics", "constant")


@dataclass(frozen=True, eq=False)
class Fitted:
    model: object
    normalizer: object = None
    epochs: int | None = None

    def predict(self, X_raw):
        X = np.atleast_2d(np.asarray(X_raw, dtype=float))
        m = self.model
        if self.normalizer is not None:
            X = self.normalizer.apply_features(X)
        if hasattr(m, "spec"):
            return np.atleast_1d(gp_predict(m, X)[0])
        if hasattr(m, "support_vectors"):
            return np.atleast_1d(svr_predict(m, X))
        return m.predict(X)

    def to_dict(self):
        d = self.model.to_dict() if hasattr(self.model, "to_dict") else {"kind": "none"}
        if self.normalizer is not None and "normalizer" not in d:
            d["feature_normalizer"] = self.normalizer.to_dict()
        d["epochs"] = self.epochs
        return d


@dataclass(frozen=True)
class GpFamily:
    base: str = "rbf"
    nu: float = 2.5
    restarts: int = 5
    fixed: KernelSpec | None = None
    tag: str = "gp"

    def fit(self, X_raw, y, seed=0):
        norm = fit_normalizer(np.asarray(X_raw, dtype=float))
        X = norm.apply_features(X_raw)
        if self.fixed is not None:
            m = gp_condition(self.fixed, X, y)
        else:
            m = gp_fit(X, y, self.base, self.restarts, seed, self.nu)
        return Fitted(m, norm)


@dataclass(frozen=True)
class SvrFamily:
    config: SvrConfig = SvrConfig()
    tag: str = "svr"

    def fit(self, X_raw, y, seed=0):
        norm = fit_normalizer(np.asarray(X_raw, dtype=float))
        return Fitted(svr_fit(norm.apply_features(X_raw), y, self.config, seed), norm)


@dataclass(frozen=True)
class NnFamily:
    hidden: tuple = (8,)
    train: TrainConfig = TrainConfig()
    hidden_act: str = "sigmoid"
    output_act: str = "purelin"
    tag: str = "nn"

    def fit(self, X_raw, y, seed=0):
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        topo = MlpTopology(tuple(self.hidden), self.hidden_act, self.output_act, X_raw.shape[1])
        res = fit_mlp(topo, X_raw, y, replace(self.train, seed=int(seed)))
        return Fitted(res.model, None, res.epochs)


@dataclass(frozen=True, eq=False)
class TransferFamily:
    source: MlpModel
    plan: TransferPlan
    train: TrainConfig = TrainConfig()
    tag: str = "tr-nn"

    def fit(self, X_raw, y, seed=0):
        res = transfer_train(self.source, self.plan, X_raw, y, self.train, seed)
        return Fitted(res.model, None, res.epochs)


@dataclass(frozen=True)
class PinnFamily:
    widths: tuple = DEFAULT_WIDTHS
    train: TrainConfig = DEFAULT_CONFIG
    mode: str = "literal"
    physics_weight: float = 1.0
    params: physics.PhysicsParams = physics.SODIUM
    tag: str = "pinn"

    def fit(self, X_raw, y, seed=0):
        res = pinn_train(X_raw, y, tuple(self.widths), self.train, self.mode, self.params,
                         seed, self.physics_weight)
        return Fitted(res.model, None, res.epochs)


@dataclass(frozen=True)
class _PhysicsModel:
    params: physics.PhysicsParams

    def predict(self, X_raw):
        return physics.physics_predict(X_raw, self.params)

    def to_dict(self):
        return {"kind": "physics", "params": self.params.to_dict()}


@dataclass(frozen=True)
class PhysicsFamily:
    params: physics.PhysicsParams = physics.SODIUM
    tag: str = "physics"

    def fit(self, X_raw, y, seed=0):
        return Fitted(_PhysicsModel(self.params))


@dataclass(frozen=True)
class _ConstantModel:
    value: float

    def predict(self, X_raw):
        return np.full(np.atleast_2d(X_raw).shape[0], self.value)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class ConstantFamily:
    """Predicts the training-target mean; a floor for every other family."""

    tag: str = "constant"

    def fit(self, X_raw, y, seed=0):
        return Fitted(_ConstantModel(float(np.mean(y))))


def _pick(cfg, prefix):
    out = {}
    for k, v in cfg.items():
        if k.startswith(prefix + "."):
            out[k[len(prefix) + 1:]] = v
    return out


def _widths(v):
    if isinstance(v, (list, tuple)):
        return tuple(int(w) for w in v)
    return tuple(int(w) for w in str(v).replace("[", "").replace("]", "").split(",") if w.strip())


def make_family(tag, cfg=None, source=None):
    """Build a family from a flat ``{"group.key": value}`` configuration.

    ``train.*`` keys configure optimizer settings for the network families;
    ``gp.*``, ``svr.*``, ``nn.*``, ``pinn.*`` and ``transfer.*`` select the
    model-specific options. ``tr-nn`` needs a trained ``source`` network.
    """
    cfg = dict(cfg or {})
    train_kw = _pick(cfg, "train")
    if tag == "gp":
        g = _pick(cfg, "gp")
        return GpFamily(g.get("kernel", "rbf"), float(g.get("nu", 2.5)), int(g.get("restarts", 5)))
    if tag == "svr":
        return SvrFamily(SvrConfig.from_dict(_pick(cfg, "svr")))
    if tag == "nn":
        n = _pick(cfg, "nn")
        return NnFamily(_widths(n.get("hidden", "8")), TrainConfig.from_dict(train_kw),
                        n.get("hidden_act", "sigmoid"), n.get("output_act", "purelin"))
    if tag == "tr-nn":
        if source is None:
            raise ValueError("tr-nn needs a source network")
        t = _pick(cfg, "transfer")
        plan = TransferPlan(int(t.get("k", 1)), _widths(t.get("widths", "8")),
                            str(t.get("freeze", "false")).lower() in ("1", "true", "yes"))
        return TransferFamily(source, plan, TrainConfig.from_dict(train_kw))
    if tag == "pinn":
        p = _pick(cfg, "pinn")
        tc = TrainConfig.from_dict({**asdict(DEFAULT_CONFIG), **train_kw})
        return PinnFamily(_widths(p.get("widths", ",".join(map(str, DEFAULT_WIDTHS)))), tc,
                          p.get("mode", "literal"), float(p.get("physics_weight", 1.0)))
    if tag == "physics":
        return PhysicsFamily()
    if tag == "constant":
        return ConstantFamily()
    raise ValueError(f"unknown family {tag!r}; choose from {FAMILY_TAGS}")



def default_space(tag):
    """Default tuning space for ``tag`` with keys in :func:`make_family` form."""
    from .hyperopt import Categorical, LogUniform, SearchSpace

    if tag == "svr":
        return SearchSpace({
            "svr.kernel": Categorical(("rbf", "linear", "sigmoid")),
            "svr.c": LogUniform(1e-6, 1e6),
            "svr.gamma": LogUniform(1e-4, 1e1),
            "svr.epsilon": LogUniform(1e-4, 1e0),
        })
    if tag == "gp":
        return SearchSpace({"gp.kernel": Categorical(("ldp", "ess", "matern", "rbf", "rq"))})
    if tag in ("nn", "tr-nn"):
        key = "nn.hidden" if tag == "nn" else "transfer.widths"
        return SearchSpace({key: Categorical(("2", "4", "6", "8", "10", "4,4", "8,4", "8,8"))})
    if tag == "pinn":
        return SearchSpace({
            "pinn.widths": Categorical(("8,8,4", "12,12,8", "20,20,12")),
            "train.learning_rate": LogUniform(1e-3, 3e-1),
        })
    raise ValueError(f"no tuning space for family {tag!r}")
