"""Linear algebra, seeded random streams and small optimizers.

Matrices are plain 2-D ``float64`` numpy arrays. Random streams are numpy
``PCG64`` generators; sub-streams derive their seed from a master seed and
an index through ``SeedSequence`` so that results never depend on the order
in which parallel work is scheduled.
"""

import math

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "NotPositiveDefinite",
    "NonFiniteObjective",
    "RandomStream",
    "child_seed",
    "cholesky",
    "solve_spd",
    "nelder_mead_min",
    "finite_diff_grad",
]


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class NonFiniteObjective(ValueError):
    pass


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def child_seed(master_seed, index):
    """Deterministic 64-bit seed for sub-stream ``index`` of ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


class RandomStream:
    """Seeded PCG64 stream.

    Single owner; hand each concurrent worker its own :meth:`child`.
    """

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index):
        return RandomStream(child_seed(self.seed, index))

    def uniform(self, size=None):
        """Draws from the open interval (0, 1)."""
        u = self.gen.random(size)
        # PCG64 doubles are k / 2**53; zero is the only closed endpoint.
        if size is None:
            while u == 0.0:
                u = self.gen.random()
            return u
        bad = u == 0.0
        while bad.any():
            u[bad] = self.gen.random(int(bad.sum()))
            bad = u == 0.0
        return u

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, n, size=None, replace=True):
        return self.gen.choice(n, size=size, replace=replace)


# ---------------------------------------------------------------------------
# dense linear algebra
# ---------------------------------------------------------------------------

def cholesky(m):
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    On failure the factorization is retried with a diagonal jitter of
    ``1e-10 * trace/n``, growing tenfold up to ``1e-4 * trace/n``.

    Raises
    ------
    NotPositiveDefinite
        If no jitter level in the schedule yields a factorization.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"cholesky needs a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise ValueError("cholesky needs a symmetric matrix")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        pass
    n = m.shape[0]
    base = np.trace(m) / n
    if base <= 0:
        raise NotPositiveDefinite("non-positive trace")
    eye = np.eye(n)
    for e in range(-10, -3):
        try:
            return np.linalg.cholesky(m + (10.0 ** e) * base * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite("pivot <= 0 after maximum jitter")


def solve_spd(m, b):
    """Solve ``m x = b`` for symmetric positive-definite ``m``."""
    L = cholesky(m)
    return cho_solve_lower(L, b)


def cho_solve_lower(L, b):
    """Solve ``(L L^T) x = b`` given the lower Cholesky factor."""
    y = solve_triangular(L, np.asarray(b, dtype=float), lower=True)
    return solve_triangular(L.T, y, lower=False)


# ---------------------------------------------------------------------------
# derivative-free minimization and finite differences
# ---------------------------------------------------------------------------

def nelder_mead_min(f, start, budget, step=None, ftol=1e-9, xtol=1e-6):
    """Minimize ``f`` from ``start`` with at most ``budget`` evaluations.

    Standard coefficients (reflection 1, expansion 2, contraction 0.5,
    shrink 0.5). Stops once the spread of simplex values drops below
    ``ftol`` and every vertex lies within ``xtol`` (relative) of the best
    one, or the budget runs out. The size test matters when vertices on
    either side of a minimum happen to share a value.

    Returns
    -------
    x : ndarray
        Best point seen.
    fx : float
        Its value, never larger than ``f(start)``.
    nfev : int
        Number of evaluations used.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x0 = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    n = x0.size
    nfev = 0

    def call(x):
        nonlocal nfev
        nfev += 1
        v = float(f(x))
        return v if math.isfinite(v) else math.inf

    f0 = float(f(x0))
    nfev = 1
    if not math.isfinite(f0):
        raise NonFiniteObjective(f"objective is {f0} at the start point")

    if step is None:
        step = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.00025)
        step = np.where(step < 0.00025, 0.00025, step)
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))

    simplex = [x0]
    values = [f0]
    for i in range(n):
        if nfev >= budget:
            break
        x = x0.copy()
        x[i] += step[i]
        simplex.append(x)
        values.append(call(x))
    if len(simplex) < n + 1:
        k = int(np.argmin(values))
        return simplex[k], values[k], nfev

    S = np.array(simplex)
    F = np.array(values)
    while nfev < budget:
        order = np.argsort(F, kind="stable")
        S, F = S[order], F[order]
        if F[-1] - F[0] < ftol and np.max(np.abs(S[1:] - S[0])) <= xtol * (1.0 + np.max(np.abs(S[0]))):
            break
        centroid = S[:-1].mean(axis=0)
        xr = centroid + (centroid - S[-1])
        fr = call(xr)
        if fr < F[0]:
            if nfev >= budget:
                S[-1], F[-1] = xr, fr
                break
            xe = centroid + 2.0 * (centroid - S[-1])
            fe = call(xe)
            if fe < fr:
                S[-1], F[-1] = xe, fe
            else:
                S[-1], F[-1] = xr, fr
            continue
        if fr < F[-2]:
            S[-1], F[-1] = xr, fr
            continue
        if nfev >= budget:
            break
        if fr < F[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = call(xc)
            if fc <= fr:
                S[-1], F[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (S[-1] - centroid)
            fc = call(xc)
            if fc < F[-1]:
                S[-1], F[-1] = xc, fc
                continue
        # shrink toward the best vertex
        for i in range(1, n + 1):
            if nfev >= budget:
                break
            S[i] = S[0] + 0.5 * (S[i] - S[0])
            F[i] = call(S[i])
    k = int(np.argmin(F))
    return S[k].copy(), float(F[k]), nfev


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = float(f(xp)), float(f(xm))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteObjective(f"non-finite objective near component {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g
