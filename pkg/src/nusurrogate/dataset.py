"""Tabular data model, CSV I/O, normalization, splits and descriptive statistics."""

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import physics
from .numerics import RandomStream

HEADER = ("alpha", "W_mm", "Dh_mm", "L_mm", "L_over_D", "Pe", "Nu_ave")
FIELDS = ("alpha", "w", "dh", "l", "l_over_d", "pe", "nu_ave")
N_FEATURES = 6

# sampling box for synthetic data (Pe drawn log-uniformly)
SYNTH_RANGES = {
    "alpha": (0.143, 1.0),
    "dh": (1.0, 2.33),
    "l_over_d": (75.0, 150.0),
    "pe": (3.9, 162.8),
}


class DataError(ValueError):
    pass


class SchemaMismatch(DataError):
    pass


class NonPositiveValue(DataError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}: {column}={value} is not finite and > 0")
        self.row = row


class InconsistentLOverD(DataError):
    def __init__(self, row, l_over_d, ratio):
        super().__init__(f"row {row}: L_over_D={l_over_d} but L/Dh={ratio:.6g}")
        self.row = row


class DegenerateFeature(DataError):
    pass


class BadPartitionSpec(ValueError):
    pass


class BadGenerationSpec(ValueError):
    pass


class BadBandwidth(ValueError):
    pass


class DataPoint(NamedTuple):
    alpha: float
    w: float
    dh: float
    l: float
    l_over_d: float
    pe: float
    nu_ave: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable collection of samples.

    ``table`` is an ``(n, 7)`` read-only array in :data:`FIELDS` order.
    """

    table: np.ndarray
    provenance: str = "cfd-csv"
    seed: int | None = None

    def __post_init__(self):
        t = np.array(self.table, dtype=float, copy=True)
        if t.ndim != 2 or t.shape[1] != 7:
            raise DataError(f"dataset table must be (n, 7), got {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def from_points(cls, points, provenance="cfd-csv", seed=None):
        return cls(np.array([tuple(p) for p in points], dtype=float).reshape(-1, 7),
                   provenance, seed)

    def __len__(self):
        return self.table.shape[0]

    @property
    def points(self):
        return [DataPoint(*map(float, row)) for row in self.table]

    @property
    def features(self):
        return self.table[:, :N_FEATURES]

    @property
    def targets(self):
        return self.table[:, N_FEATURES]

    def column(self, name):
        return self.table[:, FIELDS.index(name)]

    def subset(self, idx):
        return Dataset(self.table[np.asarray(idx, dtype=int)], self.provenance, self.seed)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def ingest_csv(path, check=True):
    """Read a dataset with the exact header ``alpha,W_mm,...,Nu_ave``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch("empty file") from None
        if tuple(h.strip() for h in header) != HEADER:
            raise SchemaMismatch(f"expected header {','.join(HEADER)}, got {','.join(header)}")
        rows = []
        for i, rec in enumerate(reader):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 7:
                raise SchemaMismatch(f"row {i}: expected 7 columns, got {len(rec)}")
            try:
                vals = [float(c) for c in rec]
            except ValueError as exc:
                raise SchemaMismatch(f"row {i}: {exc}") from None
            for name, v in zip(HEADER, vals):
                if not (math.isfinite(v) and v > 0):
                    raise NonPositiveValue(i, name, v)
            if check:
                ratio = vals[3] / vals[2]
                if abs(ratio - vals[4]) > 1e-6 * abs(vals[4]):
                    raise InconsistentLOverD(i, vals[4], ratio)
            rows.append(vals)
    if not rows:
        raise SchemaMismatch("no data rows")
    return Dataset(np.array(rows), "cfd-csv")


def write_csv(ds, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for row in ds.table:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationParams:
    """Per-column min/max for all seven fields, mapping onto [0, 1].

    Input features are required to vary; a constant target column is
    tolerated because targets are only normalized on request.
    """

    mins: tuple
    maxs: tuple

    def _arrays(self, ncols):
        lo = np.asarray(self.mins[:ncols])
        hi = np.asarray(self.maxs[:ncols])
        return lo, hi - lo

    def apply(self, x):
        """Normalize rows with 6 (features) or 7 (features + target) columns."""
        x = np.asarray(x, dtype=float)
        lo, span = self._arrays(x.shape[-1])
        if np.any(span <= 0):
            raise DegenerateFeature("cannot normalize a column with max == min")
        return (x - lo) / span

    def invert(self, u):
        u = np.asarray(u, dtype=float)
        lo, span = self._arrays(u.shape[-1])
        return u * span + lo

    def apply_features(self, X):
        return self.apply(np.asarray(X, dtype=float)[..., :N_FEATURES])

    def to_dict(self):
        return {"mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(map(float, d["mins"])), tuple(map(float, d["maxs"])))


def fit_normalizer(data):
    """Fit min-max scaling on a :class:`Dataset` or an ``(n, 6|7)`` array."""
    table = data.table if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, float))
    if table.shape[0] == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    lo = table.min(axis=0)
    hi = table.max(axis=0)
    bad = [FIELDS[i] for i in range(min(N_FEATURES, table.shape[1])) if not hi[i] > lo[i]]
    if bad:
        raise DegenerateFeature(f"features with max == min: {', '.join(bad)}")
    if table.shape[1] == N_FEATURES:
        lo = np.append(lo, 0.0)
        hi = np.append(hi, 1.0)
    return NormalizationParams(tuple(map(float, lo)), tuple(map(float, hi)))


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Holdout:
    fraction: float
    seed: int = 0


@dataclass(frozen=True)
class KFold:
    k: int = 10
    seed: int = 0


def partition(n, mode):
    """Split ``range(n)`` into ``(train, eval)`` index pairs.

    ``n`` may also be a :class:`Dataset`. K-fold eval sets are disjoint,
    cover every index once, and differ in size by at most one.
    """
    n = len(n) if isinstance(n, Dataset) else int(n)
    if isinstance(mode, KFold):
        if not (2 <= mode.k <= n):
            raise BadPartitionSpec(f"k={mode.k} must lie in [2, {n}]")
        perm = RandomStream(mode.seed).permutation(n)
        folds = np.array_split(perm, mode.k)
        out = []
        for f in folds:
            mask = np.ones(n, dtype=bool)
            mask[f] = False
            out.append((np.flatnonzero(mask), np.sort(f)))
        return out
    if isinstance(mode, Holdout):
        if not (0.0 < mode.fraction < 1.0):
            raise BadPartitionSpec("holdout fraction must lie in (0, 1)")
        m = int(round(mode.fraction * n))
        if m < 1 or m >= n:
            raise BadPartitionSpec(f"holdout of {m} points out of {n} leaves an empty side")
        perm = RandomStream(mode.seed).permutation(n)
        return [(np.sort(perm[m:]), np.sort(perm[:m]))]
    raise BadPartitionSpec(f"unknown partition mode {mode!r}")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def synthesize_dataset(n, params=None, noise=0.0, fluid="na", seed=0):
    """Draw ``n`` samples inside the correlation envelope.

    Targets are ``nu_ave_hat * (1 + eps)``, ``eps ~ N(0, noise)``. The
    ``water`` fluid uses :data:`physics.WATER_ANALOG` unless ``params`` is
    given. W follows from Dh = 2HW/(H+W) with H = alpha W.
    """
    if n < 1:
        raise BadGenerationSpec("n must be >= 1")
    if not (noise >= 0 and math.isfinite(noise)):
        raise BadGenerationSpec("noise must be finite and >= 0")
    if fluid not in ("na", "water"):
        raise BadGenerationSpec(f"unknown fluid {fluid!r}")
    if params is None:
        params = physics.SODIUM if fluid == "na" else physics.WATER_ANALOG
    rng = RandomStream(seed)
    u = rng.uniform((n, 4))
    a_lo, a_hi = SYNTH_RANGES["alpha"]
    d_lo, d_hi = SYNTH_RANGES["dh"]
    r_lo, r_hi = SYNTH_RANGES["l_over_d"]
    p_lo, p_hi = SYNTH_RANGES["pe"]
    alpha = a_lo + (a_hi - a_lo) * u[:, 0]
    dh = d_lo + (d_hi - d_lo) * u[:, 1]
    l_over_d = r_lo + (r_hi - r_lo) * u[:, 2]
    pe = np.exp(np.log(p_lo) + (np.log(p_hi) - np.log(p_lo)) * u[:, 3])
    w = dh * (1.0 + alpha) / (2.0 * alpha)
    length = l_over_d * dh
    nu = np.asarray(physics.nu_ave_hat(alpha, l_over_d, pe, params, warn=False))
    if noise > 0:
        eps = rng.normal(0.0, noise, n)
        # a factor <= 0 is only possible for huge noise levels; redraw those
        bad = eps <= -1.0
        while bad.any():
            eps[bad] = rng.normal(0.0, noise, int(bad.sum()))
            bad = eps <= -1.0
        nu = nu * (1.0 + eps)
    table = np.column_stack([alpha, w, dh, length, l_over_d, pe, nu])
    tag = "synthetic-na" if fluid == "na" else "synthetic-water"
    return Dataset(table, tag, int(seed))


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableStats:
    mean: float
    mode: float
    variance: float
    max: float
    p99: float
    p1: float


@dataclass(frozen=True)
class StatsSummary:
    variables: dict = field(default_factory=dict)

    def rows(self):
        for name, s in self.variables.items():
            yield name, s


def nearest_rank(sorted_values, pct):
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


def summarize(values):
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise DataError("cannot summarize an empty sample")
    uniq, counts = np.unique(v, return_counts=True)
    mode = float(uniq[np.argmax(counts)])  # np.unique sorts, so ties go to the smallest
    var = float(np.var(v, ddof=1)) if v.size > 1 else 0.0
    return VariableStats(float(v.mean()), mode, var, float(v[-1]),
                         nearest_rank(v, 99), nearest_rank(v, 1))


def describe_stats(ds):
    """Mean, mode, sample variance, max and nearest-rank P99/P1 per column."""
    if len(ds) == 0:
        raise DataError("empty dataset")
    return StatsSummary({h: summarize(ds.table[:, i]) for i, h in enumerate(HEADER)})


class MannWhitneyResult(NamedTuple):
    u: float
    pvalue: float
    u_b: float
    exact: bool


def mann_whitney_u(a, b):
    """Two-sided Mann-Whitney U test with midranks.

    Exact (full enumeration of group assignments) when ``len(a) + len(b) <=
    12``; otherwise normal approximation with tie and continuity correction.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = a.size, b.size
    if na < 1 or nb < 1:
        raise ValueError("both samples need at least one value")
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    u_a = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    u_b = na * nb - u_a
    mu = na * nb / 2.0
    N = na + nb
    if N <= 12:
        dev = abs(u_a - mu)
        hits = 0
        total = 0
        for combo in itertools.combinations(range(N), na):
            u = ranks[list(combo)].sum() - na * (na + 1) / 2.0
            total += 1
            if abs(u - mu) >= dev - 1e-9:
                hits += 1
        return MannWhitneyResult(u_a, min(1.0, hits / total), u_b, True)
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts))
    var = na * nb / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return MannWhitneyResult(u_a, 1.0, u_b, False)
    zval = (abs(u_a - mu) - 0.5) / math.sqrt(var)
    p = 2.0 * stats.norm.sf(max(zval, 0.0))
    return MannWhitneyResult(u_a, min(1.0, float(p)), u_b, False)


def silverman_bandwidth(sample):
    s = np.asarray(sample, dtype=float)
    sd = float(np.std(s, ddof=1)) if s.size > 1 else 0.0
    return 1.06 * sd * s.size ** (-0.2)


def kde_curve(sample, bandwidth="auto", grid=200):
    """Gaussian KDE on an even grid over ``[min - 3h, max + 3h]``.

    Returns ``(x, density)`` arrays.
    """
    s = np.asarray(sample, dtype=float).ravel()
    if s.size < 1:
        raise ValueError("empty sample")
    h = silverman_bandwidth(s) if bandwidth == "auto" else float(bandwidth)
    if not (math.isfinite(h) and h > 0):
        raise BadBandwidth(f"bandwidth must be finite and > 0, got {h}")
    if grid < 2:
        raise ValueError("grid needs at least two points")
    x = np.linspace(s.min() - 3 * h, s.max() + 3 * h, int(grid))
    u = (x[:, None] - s[None, :]) / h
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (s.size * h * math.sqrt(2 * math.pi))
    return x, dens
