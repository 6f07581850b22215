"""Cross-validation, Monte-Carlo holdout runs and holdout margin analysis.

A *family* is any object with ``tag`` and ``fit(X_raw, y, seed)``; the fitted
object must expose ``predict(X_raw)`` and may expose ``epochs``. Families
normalize inside ``fit`` so every statistic is computed from the training
split only. Runs are independent and seeded by index, so results do not
depend on the number of worker processes.
"""

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Holdout, KFold, partition
from .numerics import child_seed


class ZeroActual(ValueError):
    pass


def error_metrics(actual, predicted):
    """``(mape, mse)``; MAPE is a fraction, not a percentage."""
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.shape != p.shape:
        raise ValueError("actual and predicted lengths differ")
    if a.size == 0:
        raise ValueError("no points to score")
    if np.any(a == 0):
        raise ZeroActual("MAPE is undefined for a zero actual value")
    return float(np.mean(np.abs((p - a) / a))), float(np.mean((p - a) ** 2))


def _run_one(args):
    family, X_tr, y_tr, X_ev, y_ev, seed = args
    try:
        fitted = family.fit(X_tr, y_tr, seed)
        pred = np.asarray(fitted.predict(X_ev), dtype=float)
        if not np.all(np.isfinite(pred)):
            raise FloatingPointError("non-finite prediction")
        mape = error_metrics(y_ev, pred)[0]
        return {"ok": True, "pred": pred, "mape": mape, "epochs": getattr(fitted, "epochs", None)}
    except Exception as exc:  # noqa: BLE001 - failures are recorded per run
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as ex:
        return list(ex.map(fn, tasks))


@dataclass
class CvReport:
    family: str
    k: int
    seed: int
    fold_mapes: list
    epochs: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    # out-of-fold prediction for every row; NaN where the fold failed
    oof: np.ndarray | None = None

    @property
    def mean_mape(self):
        ok = [m for m in self.fold_mapes if m is not None]
        return float(np.mean(ok)) if ok else math.inf

    def to_dict(self):
        return {"family": self.family, "k": self.k, "seed": self.seed,
                "fold_mapes": self.fold_mapes, "mean_mape": self.mean_mape,
                "epochs": self.epochs, "failures": self.failures}


def cross_validate(family, ds, k=10, seed=0, jobs=1):
    """k-fold CV MAPE; fold ``i`` trains with seed ``child_seed(seed, i)``."""
    X, y = ds.features, ds.targets
    splits = partition(len(y), KFold(k, seed))
    tasks = [(family, X[tr], y[tr], X[ev], y[ev], child_seed(seed, i))
             for i, (tr, ev) in enumerate(splits)]
    out = _map(_run_one, tasks, jobs)
    mapes = [r["mape"] if r["ok"] else None for r in out]
    fails = [{"fold": i, "error": r["error"]} for i, r in enumerate(out) if not r["ok"]]
    epochs = [r.get("epochs") for r in out]
    oof = np.full(len(y), np.nan)
    for (_, ev), r in zip(splits, out):
        if r["ok"]:
            oof[ev] = r["pred"]
    return CvReport(family.tag, k, seed, mapes, epochs, fails, oof)


@dataclass
class McReport:
    family: str
    runs: int
    master_seed: int
    holdout_idx: np.ndarray
    actual: np.ndarray
    predictions: np.ndarray  # (successful runs, holdout size)
    mapes: np.ndarray
    epochs: list
    failures: list = field(default_factory=list)

    @property
    def mean_mape(self):
        return float(np.mean(self.mapes)) if self.mapes.size else math.inf

    @property
    def mape_var(self):
        return float(np.var(self.mapes, ddof=1)) if self.mapes.size > 1 else 0.0

    @property
    def max_pred_var(self):
        """Largest across-run prediction variance over the holdout points."""
        if self.predictions.shape[0] < 2:
            return 0.0
        return float(np.max(np.var(self.predictions, axis=0, ddof=1)))

    @property
    def mean_epochs(self):
        e = [x for x in self.epochs if x is not None]
        return float(np.mean(e)) if e else math.nan

    def audit(self):
        """Recompute the aggregates from the stored per-run data."""
        mapes = np.array([error_metrics(self.actual, p)[0] for p in self.predictions])
        return {
            "mapes_match": bool(np.array_equal(mapes, self.mapes)),
            "mean_mape": float(np.mean(mapes)) if mapes.size else math.inf,
            "mape_var": float(np.var(mapes, ddof=1)) if mapes.size > 1 else 0.0,
            "max_pred_var": (float(np.max(np.var(self.predictions, axis=0, ddof=1)))
                             if self.predictions.shape[0] > 1 else 0.0),
        }

    def summary(self):
        return {"family": self.family, "runs": self.runs, "master_seed": self.master_seed,
                "successful": int(self.mapes.size), "mean_mape": self.mean_mape,
                "mape_var": self.mape_var, "max_pred_var": self.max_pred_var,
                "mean_epochs": self.mean_epochs, "failures": self.failures}


def monte_carlo(family, ds, holdout=Holdout(0.1, 0), runs=500, master_seed=0, jobs=1):
    """Retrain ``runs`` times on a fixed split; run ``r`` uses ``child_seed(master_seed, r)``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    X, y = ds.features, ds.targets
    (tr, ho), = partition(len(y), holdout)
    tasks = [(family, X[tr], y[tr], X[ho], y[ho], child_seed(master_seed, r)) for r in range(runs)]
    out = _map(_run_one, tasks, jobs)
    ok = [r for r in out if r["ok"]]
    preds = np.array([r["pred"] for r in ok]).reshape(len(ok), len(ho))
    return McReport(family.tag, runs, master_seed, np.asarray(ho), y[ho].copy(), preds,
                    np.array([r["mape"] for r in ok]), [r["epochs"] for r in ok],
                    [{"run": i, "error": r["error"]} for i, r in enumerate(out) if not r["ok"]])


@dataclass(frozen=True)
class MarginResult:
    fraction: float
    worst: float
    rel_errors: np.ndarray
    margin: float


def holdout_margin(actual, predicted, margin=0.08):
    """Fraction of points whose relative error lies within ``margin``."""
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.shape != p.shape or a.size == 0:
        raise ValueError("need equal-length, non-empty vectors")
    if np.any(a == 0):
        raise ZeroActual("relative error undefined for a zero actual value")
    rel = np.abs(p - a) / np.abs(a)
    return MarginResult(float(np.mean(rel <= margin)), float(rel.max()), rel, margin)
