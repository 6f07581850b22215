"""Layer transfer from a water-analog source network to sodium targets.

The source is a small MLP trained on water-analog data. A target network
copies the source's first ``k`` hidden layers (weights and biases) and appends
freshly initialized layers. ``k = 0`` is ordinary training from scratch.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import fit_normalizer
from .neural import MlpModel, MlpTopology, TrainConfig, init_mlp, train

SOURCE_HIDDEN = (3, 2)
MAX_HIDDEN = 3


class IncompatibleTopology(ValueError):
    pass


@dataclass(frozen=True)
class TransferPlan:
    """Copy ``k`` source layers, then append hidden layers ``target_widths``."""

    k: int
    target_widths: tuple = ()
    freeze: bool = False

    def __post_init__(self):
        object.__setattr__(self, "target_widths", tuple(int(w) for w in self.target_widths))
        if self.k < 0:
            raise IncompatibleTopology("k must be >= 0")
        if any(w < 1 for w in self.target_widths):
            raise IncompatibleTopology("hidden widths must be >= 1")
        if self.k + len(self.target_widths) == 0:
            raise IncompatibleTopology("target network needs at least one hidden layer")

    def hidden(self, source):
        return tuple(source.topology.hidden[:self.k]) + self.target_widths

    def label(self, source=None):
        if source is None:
            return f"k={self.k}+{list(self.target_widths)}"
        return "-".join(str(w) + ("T" if i < self.k else "") for i, w in enumerate(self.hidden(source)))


def train_source(ds, seed=0, hidden=SOURCE_HIDDEN, cfg=None, cv_k=10):
    """Train the source MLP on all of ``ds`` and report its k-fold CV MAPE."""
    from .families import NnFamily
    from .validation import cross_validate

    cfg = cfg or TrainConfig(method="lm", seed=seed)
    fam = NnFamily(hidden=tuple(hidden), train=cfg)
    report = cross_validate(fam, ds, k=cv_k, seed=seed) if cv_k else None
    model = fam.fit(ds.features, ds.targets, seed).model
    return model, report


def transfer_init(source, plan, seed=0, normalizer=None):
    """Build the target network for ``plan``.

    Parameters are first drawn exactly as :func:`~nusurrogate.neural.init_mlp`
    would for the full target topology, then the leading ``k`` layers are
    overwritten by the source's. Returns ``(model, trainable_mask)``; the mask
    is all-True unless ``plan.freeze``.
    """
    st = source.topology
    if plan.k > len(st.hidden):
        raise IncompatibleTopology(f"source has {len(st.hidden)} hidden layers, k={plan.k}")
    topo = MlpTopology(plan.hidden(source), st.hidden_act, st.output_act, st.n_inputs, st.n_outputs)
    m = init_mlp(topo, seed, normalizer)
    theta = np.array(m.theta)
    mask = np.ones(theta.size, dtype=bool)
    offset = 0
    for (W, b) in source.layers()[:plan.k]:
        n = W.size + b.size
        theta[offset:offset + n] = np.concatenate([W.ravel(), b])
        if plan.freeze:
            mask[offset:offset + n] = False
        offset += n
    return m.with_theta(theta), mask


def transfer_train(source, plan, X_raw, y, cfg=TrainConfig(), seed=None):
    """Initialize from ``source`` per ``plan`` and train on raw sodium rows."""
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    norm = fit_normalizer(np.asarray(X_raw, dtype=float))
    m, mask = transfer_init(source, plan, cfg.seed, norm)
    return train(m, norm.apply_features(X_raw), y, cfg, mask if plan.freeze else None)


@dataclass
class TransferSearchResult:
    best_plan: TransferPlan
    best_mape: float
    per_k: dict  # k -> (best plan with that k, its CV MAPE)
    search: object = None
    evaluated: dict = field(default_factory=dict)


def decode_plan(config, n_source, max_hidden=MAX_HIDDEN):
    """Chromosome ``{k, n_new, w1..}`` to a plan, repaired to 1..max_hidden layers."""
    k = min(int(config["k"]), n_source)
    n_new = int(config["n_new"])
    n_new = max(n_new, 1 - k)
    n_new = min(n_new, max_hidden - k)
    widths = [int(config[f"w{i + 1}"]) for i in range(n_new)]
    return TransferPlan(k, tuple(widths), bool(config.get("freeze", False)))


def ga_transfer_search(source, ds, widths=(2, 4, 8), max_new=2, cv_k=10, seed=0,
                       cfg=TrainConfig(), ga=None, freeze=False):
    """GA over (k, new-layer count, new-layer widths) minimizing CV MAPE.

    The initial population contains one individual per feasible ``k`` so
    every transfer depth is evaluated. ``per_k`` lists the best plan seen for
    each ``k``.
    """
    from .families import TransferFamily
    from .hyperopt import Categorical, GaConfig, Integer, SearchSpace, ga_optimize
    from .validation import cross_validate

    n_source = len(source.topology.hidden)
    dims = {"k": Integer(0, n_source) if n_source else Categorical((0,)),
            "n_new": Integer(0, max_new)}
    for i in range(max_new):
        dims[f"w{i + 1}"] = Categorical(tuple(widths))
    space = SearchSpace(dims)
    evaluated = {}

    def objective(config):
        plan = decode_plan(config, n_source)
        plan = replace(plan, freeze=freeze)
        if plan not in evaluated:
            fam = TransferFamily(source, plan, cfg)
            evaluated[plan] = cross_validate(fam, ds, k=cv_k, seed=seed).mean_mape
        return evaluated[plan]

    initial = [{"k": k, "n_new": 1, **{f"w{i + 1}": widths[-1] for i in range(max_new)}}
               for k in range(n_source + 1)]
    res = ga_optimize(space, objective, ga or GaConfig(population=12, stall=5), seed, initial)
    per_k = {}
    for plan, v in evaluated.items():
        if math.isfinite(v) and (plan.k not in per_k or v < per_k[plan.k][1]):
            per_k[plan.k] = (plan, v)
    best_plan = replace(decode_plan(res.best, n_source), freeze=freeze)
    return TransferSearchResult(best_plan, res.best_mape, dict(sorted(per_k.items())), res,
                                evaluated)
