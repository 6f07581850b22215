"""Hyperparameter search: expanding-budget random search, grid search, GA and GP-EI.

Every optimizer minimizes an ``objective(config) -> float`` (a CV MAPE in
practice), caches results by exact configuration, and returns a
:class:`SearchResult` whose trial log is append-only. Passing a previous
log as ``resume`` replays it: cached values are reused and the random
stream reproduces the same future sequence.
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .gp import gp_fit, gp_predict
from .numerics import RandomStream, child_seed

# ---------------------------------------------------------------------------
# search spaces
# ---------------------------------------------------------------------------

LOCAL_STEP = 0.1  # mutation step in unit-scaled coordinates


def _mutate_numeric(dim, v, rng):
    """Half the time resample uniformly, otherwise take a local step."""
    if rng.gen.random() < 0.5:
        return dim.sample(rng)
    return dim.from_unit(min(1.0, max(0.0, dim.to_unit(v) + rng.gen.normal(0.0, LOCAL_STEP))))


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError("log-uniform needs 0 < lo < hi")

    def sample(self, rng):
        return float(math.exp(rng.gen.uniform(math.log(self.lo), math.log(self.hi))))

    def to_unit(self, v):
        return (math.log(v) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))

    def from_unit(self, u):
        return float(math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo))))

    def mutate(self, v, rng):
        return _mutate_numeric(self, v, rng)

    def grid(self, n):
        return [float(v) for v in np.geomspace(self.lo, self.hi, n)]


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("uniform needs lo < hi")

    def sample(self, rng):
        return float(rng.gen.uniform(self.lo, self.hi))

    def to_unit(self, v):
        return (v - self.lo) / (self.hi - self.lo)

    def from_unit(self, u):
        return float(self.lo + u * (self.hi - self.lo))

    def mutate(self, v, rng):
        return _mutate_numeric(self, v, rng)

    def grid(self, n):
        return [float(v) for v in np.linspace(self.lo, self.hi, n)]


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("integer range needs lo < hi")

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def to_unit(self, v):
        return (v - self.lo + 0.5) / (self.hi - self.lo + 1)

    def from_unit(self, u):
        return int(min(self.hi, self.lo + math.floor(u * (self.hi - self.lo + 1))))

    def mutate(self, v, rng):
        if rng.gen.random() < 0.5:
            return self.sample(rng)
        reach = max(1, (self.hi - self.lo) // 10)
        step = int(rng.integers(1, reach + 1)) * (1 if rng.gen.random() < 0.5 else -1)
        return int(min(self.hi, max(self.lo, v + step)))

    def grid(self, n=None):
        return list(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Categorical:
    options: tuple

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ValueError("categorical needs at least one option")

    def sample(self, rng):
        return self.options[int(rng.integers(len(self.options)))]

    def to_unit(self, v):
        return (self.options.index(v) + 0.5) / len(self.options)

    def from_unit(self, u):
        return self.options[min(len(self.options) - 1, int(math.floor(u * len(self.options))))]

    def mutate(self, v, rng):
        return self.sample(rng)

    def grid(self, n=None):
        return list(self.options)


class SearchSpace:
    """Ordered mapping of dimension name to domain."""

    def __init__(self, dims):
        self.dims = dict(dims)
        if not self.dims:
            raise ValueError("search space needs at least one dimension")

    def __len__(self):
        return len(self.dims)

    def sample(self, rng):
        return {k: d.sample(rng) for k, d in self.dims.items()}

    def to_unit(self, config):
        return np.array([d.to_unit(config[k]) for k, d in self.dims.items()])

    def from_unit(self, u):
        u = np.clip(u, 0.0, 1.0)
        return {k: d.from_unit(float(x)) for (k, d), x in zip(self.dims.items(), u)}

    def grid(self, n=5):
        """Cartesian grid; continuous dims use ``n`` points."""
        axes = [d.grid(n) for d in self.dims.values()]
        names = list(self.dims)
        return [dict(zip(names, combo)) for combo in _product(axes)]

    def __repr__(self):
        return f"SearchSpace({self.dims!r})"


def _product(axes):
    if not axes:
        yield ()
        return
    for v in axes[0]:
        for rest in _product(axes[1:]):
            yield (v, *rest)


def config_key(config):
    return tuple(sorted((k, repr(v)) for k, v in config.items()))


# ---------------------------------------------------------------------------
# trial bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    index: int
    config: dict
    mape: float | None
    wall_time: float = 0.0
    seed: int = 0
    status: str = "ok"  # ok | cached | failed
    note: str = ""

    def to_json(self, timing=True):
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def write_trials(path, trials, timing=False):
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(t.to_json(timing) + "\n")


def read_trials(path):
    with open(path, encoding="utf-8") as fh:
        return [TrialRecord.from_json(line) for line in fh if line.strip()]


@dataclass
class SearchResult:
    best: dict
    best_mape: float
    trials: list
    trace: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.best
        yield self.trials


class _Evaluator:
    def __init__(self, objective, seed, resume=None):
        self.objective = objective
        self.seed = seed
        self.cache = {}
        self.trials = []
        for t in resume or ():
            if t.status != "cached":
                self.cache[config_key(t.config)] = math.inf if t.mape is None else t.mape

    def __call__(self, config):
        key = config_key(config)
        idx = len(self.trials)
        if key in self.cache:
            v = self.cache[key]
            self.trials.append(TrialRecord(idx, dict(config), None if math.isinf(v) else v,
                                           0.0, self.seed, "cached"))
            return v
        t0 = time.perf_counter()
        status, note = "ok", ""
        try:
            v = float(self.objective(config))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"objective returned {v}")
        except Exception as exc:  # noqa: BLE001 - per-trial failures are logged, not fatal
            v, status, note = math.inf, "failed", f"{type(exc).__name__}: {exc}"
        self.cache[key] = v
        self.trials.append(TrialRecord(idx, dict(config), None if math.isinf(v) else v,
                                       time.perf_counter() - t0, self.seed, status, note))
        return v

    def best(self):
        best_i, best_v = None, math.inf
        for i, t in enumerate(self.trials):
            if t.mape is not None and t.mape < best_v:
                best_i, best_v = i, t.mape
        if best_i is None:
            raise RuntimeError("every trial failed")
        return dict(self.trials[best_i].config), best_v


# ---------------------------------------------------------------------------
# random search with an expanding iteration budget
# ---------------------------------------------------------------------------

@dataclass
class RsState:
    t_iter: int = 30
    span: int = 1
    k_iter: int = 5
    t_drop: float = 0.001
    k: int = 0
    incumbent: int | None = None
    incumbent_mape: float = math.inf

    def __post_init__(self):
        if self.t_iter < 1:
            raise ValueError("t_iter must be >= 1")


def random_search_expanding(candidates, objective, init=None, seed=0, resume=None):
    """Uniform random search over the candidate list ``candidates``.

    Each iteration draws a candidate index uniformly, keeps it as incumbent
    on strict improvement, and whenever the drop from the previous incumbent
    exceeds ``t_drop`` increments ``span`` and extends the budget by
    ``t_iter += k_iter * span``. Stops once the iteration counter reaches
    ``t_iter``. The per-iteration incumbent MAPE is in ``result.trace``;
    budget extensions are listed in ``result.extra["extensions"]``.
    """
    P = list(candidates)
    if not P:
        raise ValueError("candidate list is empty")
    st = init if init is not None else RsState()
    st = RsState(**asdict(st))
    rng = RandomStream(seed)
    ev = _Evaluator(objective, seed, resume)
    st.incumbent = int(rng.integers(len(P)))
    st.incumbent_mape = ev(P[st.incumbent])
    trace = [st.incumbent_mape]
    extensions = []
    while True:
        st.k += 1
        v = int(rng.integers(len(P)))
        fv = ev(P[v])
        drop = st.incumbent_mape - fv if math.isfinite(st.incumbent_mape) else 0.0
        if fv < st.incumbent_mape:
            st.incumbent, st.incumbent_mape = v, fv
        if drop > st.t_drop:
            st.span += 1
            st.t_iter = st.k_iter * st.span + st.t_iter
            extensions.append({"k": st.k, "mape": fv, "span": st.span, "t_iter": st.t_iter})
        trace.append(st.incumbent_mape)
        if st.k >= st.t_iter:
            break
    if not math.isfinite(st.incumbent_mape):
        raise RuntimeError("every trial failed")
    return SearchResult(dict(P[st.incumbent]), st.incumbent_mape, ev.trials, trace,
                        {"state": st, "extensions": extensions})


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def grid_search(grid, objective, seed=0, resume=None):
    """Evaluate every cell once; ties keep the first cell in declaration order."""
    cells = grid.grid() if isinstance(grid, SearchSpace) else list(grid)
    if not cells:
        raise ValueError("empty grid")
    ev = _Evaluator(objective, seed, resume)
    trace = []
    best_i, best_v = None, math.inf
    for i, c in enumerate(cells):
        v = ev(c)
        if v < best_v:
            best_i, best_v = i, v
        trace.append(best_v)
    if best_i is None:
        raise RuntimeError("every grid cell failed")
    return SearchResult(dict(cells[best_i]), best_v, ev.trials, trace)


# ---------------------------------------------------------------------------
# genetic algorithm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaConfig:
    population: int = 20
    generations: int = 500
    tol: float = 1e-6
    stall: int = 10
    elitism: int = 2
    tournament: int = 3
    crossover: float = 0.9
    mutation: float = 0.3

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 1 <= self.elitism < self.population:
            raise ValueError("elitism must lie in [1, population)")


def ga_optimize(space, objective, cfg=GaConfig(), seed=0, initial=(), resume=None):
    """Generational GA with elitism, tournament selection and uniform crossover.

    Mutation resamples a categorical gene; a numeric gene is resampled or
    nudged locally with equal probability.

    Stops after ``cfg.generations`` generations, or once the best fitness
    improved by less than ``cfg.tol`` over the last ``cfg.stall``
    generations. ``initial`` configurations seed the first population.
    ``result.trace`` holds the best fitness of each generation (generation
    0 is the initial population).
    """
    rng = RandomStream(seed)
    ev = _Evaluator(objective, seed, resume)
    names = list(space.dims)
    pop = [dict(c) for c in initial][:cfg.population]
    while len(pop) < cfg.population:
        pop.append(space.sample(rng))
    fit = [ev(c) for c in pop]
    trace = [min(fit)]

    def tournament():
        picks = rng.integers(len(pop), size=cfg.tournament)
        best = min(picks, key=lambda i: (fit[i], i))
        return pop[int(best)]

    for gen in range(1, cfg.generations + 1):
        order = sorted(range(len(pop)), key=lambda i: (fit[i], i))
        children = [dict(pop[i]) for i in order[:cfg.elitism]]
        while len(children) < cfg.population:
            a, b = tournament(), tournament()
            if rng.gen.random() < cfg.crossover:
                child = {k: (a[k] if rng.gen.random() < 0.5 else b[k]) for k in names}
            else:
                child = dict(a)
            for k in names:
                if rng.gen.random() < cfg.mutation:
                    child[k] = space.dims[k].mutate(child[k], rng)
            children.append(child)
        pop = children
        fit = [ev(c) for c in pop]
        trace.append(min(fit))
        if gen >= cfg.stall and trace[gen - cfg.stall] - trace[gen] < cfg.tol:
            break
    best, best_v = ev.best()
    if not math.isfinite(best_v):
        raise RuntimeError("every individual failed")
    return SearchResult(best, best_v, ev.trials, trace, {"generations": len(trace) - 1})


# ---------------------------------------------------------------------------
# Bayesian optimization (GP surrogate, expected improvement)
# ---------------------------------------------------------------------------

def expected_improvement(mu, sigma, best):
    """EI for minimization; reduces to ``max(best - mu, 0)`` where ``sigma == 0``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = best - mu
    out = np.maximum(imp, 0.0)
    pos = sigma > 1e-12
    z = imp[pos] / sigma[pos]
    out[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return out


def bayes_optimize(space, objective, budget=100, n_init=10, n_candidates=1000,
                   stall_window=50, stall_tol=1e-3, seed=0, resume=None):
    """GP-EI minimization over the unit-scaled space.

    A Latin-hypercube design of ``n_init`` points starts the search. Each
    later trial fits an RBF GP to the standardized observed MAPEs and picks
    the best of ``n_candidates`` seeded random points by expected
    improvement; if the surrogate cannot be fitted, that trial samples at
    random. Stops at ``budget`` trials, or when the best MAPE improved by
    less than ``stall_tol`` over the last ``stall_window`` trials.
    """
    if budget < n_init:
        raise ValueError("budget must cover the initial design")
    d = len(space)
    rng = RandomStream(seed)
    ev = _Evaluator(objective, seed, resume)
    design = qmc.LatinHypercube(d=d, seed=np.random.default_rng(child_seed(seed, 0))).random(n_init)
    U, F = [], []
    trace = []
    fallbacks = 0
    for u in design:
        cfg = space.from_unit(u)
        U.append(space.to_unit(cfg))
        F.append(ev(cfg))
        trace.append(min(F))
    while len(F) < budget:
        n = len(F)
        if n > stall_window and trace[n - 1 - stall_window] - trace[n - 1] < stall_tol:
            break
        cand = rng.uniform((n_candidates, d))
        ok = np.isfinite(F)
        try:
            Xo = np.array(U)[ok]
            yo = np.array(F)[ok]
            mu_y, sd_y = yo.mean(), yo.std()
            sd_y = sd_y if sd_y > 0 else 1.0
            model = gp_fit(Xo, (yo - mu_y) / sd_y, "rbf", restarts=2,
                           seed=child_seed(seed, n), budget=200)
            mu, var = gp_predict(model, cand)
            ei = expected_improvement(mu, np.sqrt(var), (yo.min() - mu_y) / sd_y)
            pick = cand[int(np.argmax(ei))]
        except Exception:  # noqa: BLE001 - surrogate failure falls back to random sampling
            fallbacks += 1
            pick = cand[0]
        cfg = space.from_unit(pick)
        U.append(space.to_unit(cfg))
        F.append(ev(cfg))
        trace.append(min(F))
    best, best_v = ev.best()
    return SearchResult(best, best_v, ev.trials, trace, {"fallbacks": fallbacks})
