"""Hot inner loops: dense-network passes and the SMO solver.

Each kernel has a numba version (explicit loops) and a vectorized numpy
version. The public names dispatch on :data:`nusurrogate._accel.JIT_ENABLED`;
the ``*_nb`` / ``*_np`` variants stay importable so tests can cross-check
them and ``benchmarks/bench_kernels.py`` can time them.

Network parameters live in one flat vector. Layer ``l`` stores its weight
matrix (``widths[l] x widths[l-1]``, row-major) followed by its bias vector.
Hidden layers share one activation code, output units each carry their own.
"""

import math

import numpy as np

from ._accel import JIT_ENABLED, njit

PURELIN = 0
SIGMOID = 1
RELU = 2

ACTIVATIONS = {"purelin": PURELIN, "sigmoid": SIGMOID, "relu": RELU}


def param_count(widths):
    widths = np.asarray(widths)
    return int(np.sum(widths[1:] * widths[:-1] + widths[1:]))


# ---------------------------------------------------------------------------
# numba network kernels
# ---------------------------------------------------------------------------

@njit
def _act_nb(z, code):
    if code == SIGMOID:
        if z >= 0.0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    if code == RELU:
        return z if z > 0.0 else 0.0
    return z


@njit
def _dact_nb(z, a, code):
    if code == SIGMOID:
        return a * (1.0 - a)
    if code == RELU:
        return 1.0 if z > 0.0 else 0.0
    return 1.0


@njit
def _layout_nb(widths):
    L = widths.size - 1
    offs = np.zeros(L + 1, dtype=np.int64)
    poffs = np.zeros(L + 1, dtype=np.int64)
    for l in range(1, L + 1):
        offs[l] = offs[l - 1] + widths[l - 1]
        if l > 1:
            poffs[l] = poffs[l - 1] + widths[l - 2] * widths[l - 1] + widths[l - 1]
    return offs, poffs, offs[L] + widths[L]


@njit
def _forward_sample_nb(theta, widths, hidden_act, out_acts, x, zbuf, abuf, offs, poffs):
    L = widths.size - 1
    for j in range(widths[0]):
        abuf[j] = x[j]
    for l in range(1, L + 1):
        din = widths[l - 1]
        dout = widths[l]
        p = poffs[l]
        bo = p + din * dout
        a_prev = offs[l - 1]
        a_cur = offs[l]
        for i in range(dout):
            acc = theta[bo + i]
            row = p + i * din
            for j in range(din):
                acc += theta[row + j] * abuf[a_prev + j]
            code = hidden_act if l < L else out_acts[i]
            zbuf[a_cur + i] = acc
            abuf[a_cur + i] = _act_nb(acc, code)


@njit
def _backward_sample_nb(theta, widths, hidden_act, out_acts, zbuf, abuf, dbuf,
                        offs, poffs, g, grad):
    L = widths.size - 1
    cur = offs[L]
    for i in range(widths[L]):
        dbuf[cur + i] = g[i] * _dact_nb(zbuf[cur + i], abuf[cur + i], out_acts[i])
    for l in range(L, 0, -1):
        din = widths[l - 1]
        dout = widths[l]
        p = poffs[l]
        bo = p + din * dout
        a_prev = offs[l - 1]
        a_cur = offs[l]
        if l > 1:
            for j in range(din):
                dbuf[a_prev + j] = 0.0
        for i in range(dout):
            d = dbuf[a_cur + i]
            grad[bo + i] += d
            row = p + i * din
            for j in range(din):
                grad[row + j] += d * abuf[a_prev + j]
                if l > 1:
                    dbuf[a_prev + j] += theta[row + j] * d
        if l > 1:
            for j in range(din):
                dbuf[a_prev + j] *= _dact_nb(zbuf[a_prev + j], abuf[a_prev + j], hidden_act)


@njit
def mlp_forward_nb(theta, widths, hidden_act, out_acts, X):
    n = X.shape[0]
    L = widths.size - 1
    offs, poffs, total = _layout_nb(widths)
    zbuf = np.empty(total)
    abuf = np.empty(total)
    out = np.empty((n, widths[L]))
    for s in range(n):
        _forward_sample_nb(theta, widths, hidden_act, out_acts, X[s], zbuf, abuf, offs, poffs)
        for i in range(widths[L]):
            out[s, i] = abuf[offs[L] + i]
    return out


@njit
def mlp_backprop_nb(theta, widths, hidden_act, out_acts, X, G):
    n = X.shape[0]
    offs, poffs, total = _layout_nb(widths)
    zbuf = np.empty(total)
    abuf = np.empty(total)
    dbuf = np.empty(total)
    grad = np.zeros(theta.size)
    for s in range(n):
        _forward_sample_nb(theta, widths, hidden_act, out_acts, X[s], zbuf, abuf, offs, poffs)
        _backward_sample_nb(theta, widths, hidden_act, out_acts, zbuf, abuf, dbuf,
                            offs, poffs, G[s], grad)
    return grad


@njit
def mlp_jacobian_nb(theta, widths, hidden_act, out_acts, X, unit):
    n = X.shape[0]
    L = widths.size - 1
    offs, poffs, total = _layout_nb(widths)
    zbuf = np.empty(total)
    abuf = np.empty(total)
    dbuf = np.empty(total)
    g = np.zeros(widths[L])
    g[unit] = 1.0
    out = np.empty(n)
    J = np.zeros((n, theta.size))
    for s in range(n):
        _forward_sample_nb(theta, widths, hidden_act, out_acts, X[s], zbuf, abuf, offs, poffs)
        out[s] = abuf[offs[L] + unit]
        _backward_sample_nb(theta, widths, hidden_act, out_acts, zbuf, abuf, dbuf,
                            offs, poffs, g, J[s])
    return out, J


# ---------------------------------------------------------------------------
# numpy network kernels
# ---------------------------------------------------------------------------

def _act_np(z, code):
    if code == SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if code == RELU:
        return np.maximum(z, 0.0)
    return z


def _dact_np(z, a, code):
    if code == SIGMOID:
        return a * (1.0 - a)
    if code == RELU:
        return (z > 0.0).astype(float)
    return np.ones_like(z)


def _unpack(theta, widths):
    layers = []
    p = 0
    for din, dout in zip(widths[:-1], widths[1:]):
        W = theta[p:p + din * dout].reshape(dout, din)
        p += din * dout
        b = theta[p:p + dout]
        p += dout
        layers.append((W, b))
    return layers


def _forward_all_np(theta, widths, hidden_act, out_acts, X):
    layers = _unpack(theta, widths)
    zs, acts = [None], [np.asarray(X, dtype=float)]
    for l, (W, b) in enumerate(layers, start=1):
        z = acts[-1] @ W.T + b
        if l < len(layers):
            a = _act_np(z, hidden_act)
        else:
            a = np.empty_like(z)
            for i, code in enumerate(out_acts):
                a[:, i] = _act_np(z[:, i], code)
        zs.append(z)
        acts.append(a)
    return layers, zs, acts


def _out_dact_np(z, a, out_acts):
    d = np.empty_like(z)
    for i, code in enumerate(out_acts):
        d[:, i] = _dact_np(z[:, i], a[:, i], code)
    return d


def mlp_forward_np(theta, widths, hidden_act, out_acts, X):
    return _forward_all_np(theta, widths, hidden_act, out_acts, X)[2][-1]


def mlp_backprop_np(theta, widths, hidden_act, out_acts, X, G):
    layers, zs, acts = _forward_all_np(theta, widths, hidden_act, out_acts, X)
    L = len(layers)
    delta = G * _out_dact_np(zs[L], acts[L], out_acts)
    parts = [None] * L
    for l in range(L, 0, -1):
        W, _ = layers[l - 1]
        parts[l - 1] = (delta.T @ acts[l - 1]).ravel(), delta.sum(axis=0)
        if l > 1:
            delta = (delta @ W) * _dact_np(zs[l - 1], acts[l - 1], hidden_act)
    return np.concatenate([np.concatenate(p) for p in parts])


def mlp_jacobian_np(theta, widths, hidden_act, out_acts, X, unit):
    layers, zs, acts = _forward_all_np(theta, widths, hidden_act, out_acts, X)
    L = len(layers)
    n = acts[0].shape[0]
    dout = _out_dact_np(zs[L], acts[L], out_acts)
    delta = np.zeros_like(dout)
    delta[:, unit] = dout[:, unit]
    parts = [None] * L
    for l in range(L, 0, -1):
        W, _ = layers[l - 1]
        JW = (delta[:, :, None] * acts[l - 1][:, None, :]).reshape(n, -1)
        parts[l - 1] = np.hstack([JW, delta])
        if l > 1:
            delta = (delta @ W) * _dact_np(zs[l - 1], acts[l - 1], hidden_act)
    return acts[L][:, unit].copy(), np.hstack(parts)


# ---------------------------------------------------------------------------
# SMO for epsilon-SVR
# ---------------------------------------------------------------------------
# Works on the 2l-variable dual (alpha, alpha*) with labels (+1, -1) and the
# maximal-violating-pair working set. Returns signed coefficients
# alpha - alpha*, rho (decision = K @ beta - rho), iterations, convergence.

_TAU = 1e-12


def _pair_update_py(ai, aj, yi, yj, Gi, Gj, Kii, Kjj, Kij, C):
    if yi != yj:
        quad = Kii + Kjj - 2.0 * Kij
        if quad <= 0.0:
            quad = _TAU
        delta = (-Gi - Gj) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0.0:
            if aj < 0.0:
                aj = 0.0
                ai = diff
        else:
            if ai < 0.0:
                ai = 0.0
                aj = -diff
        if diff > 0.0:
            if ai > C:
                ai = C
                aj = C - diff
        else:
            if aj > C:
                aj = C
                ai = C + diff
    else:
        quad = Kii + Kjj - 2.0 * Kij
        if quad <= 0.0:
            quad = _TAU
        delta = (Gi - Gj) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai = C
                aj = total - C
        else:
            if aj < 0.0:
                aj = 0.0
                ai = total
        if total > C:
            if aj > C:
                aj = C
                ai = total - C
        else:
            if ai < 0.0:
                ai = 0.0
                aj = total
    return ai, aj


_pair_update_nb = njit(_pair_update_py)


def _rho_py(alpha, y, G, C):
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(alpha.size):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0.0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            nfree += 1
            sfree += yG
    if nfree > 0:
        return sfree / nfree
    return 0.5 * (ub + lb)


_rho_nb = njit(_rho_py)


@njit
def smo_solve_nb(K, z, eps, C, tol, max_iter):
    l = z.size
    n = 2 * l
    alpha = np.zeros(n)
    y = np.empty(n)
    G = np.empty(n)
    for t in range(l):
        y[t] = 1.0
        y[t + l] = -1.0
        G[t] = eps - z[t]
        G[t + l] = eps + z[t]
    it = 0
    converged = False
    while it < max_iter:
        vmax = -np.inf
        vmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > vmax:
                    vmax = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < vmin:
                    vmin = v
                    j = t
        if i < 0 or j < 0 or vmax - vmin < tol:
            converged = True
            break
        ki = i % l
        kj = j % l
        old_i = alpha[i]
        old_j = alpha[j]
        alpha[i], alpha[j] = _pair_update_nb(old_i, old_j, y[i], y[j], G[i], G[j],
                                             K[ki, ki], K[kj, kj], K[ki, kj], C)
        dai = alpha[i] - old_i
        daj = alpha[j] - old_j
        for t in range(n):
            kt = t % l
            G[t] += y[t] * y[i] * K[kt, ki] * dai + y[t] * y[j] * K[kt, kj] * daj
        it += 1
    rho = _rho_nb(alpha, y, G, C)
    beta = alpha[:l] - alpha[l:]
    return beta, rho, it, converged


def smo_solve_np(K, z, eps, C, tol, max_iter):
    K = np.ascontiguousarray(K, dtype=float)
    z = np.asarray(z, dtype=float)
    l = z.size
    y = np.concatenate([np.ones(l), -np.ones(l)])
    idx = np.concatenate([np.arange(l), np.arange(l)])
    alpha = np.zeros(2 * l)
    G = np.concatenate([eps - z, eps + z])
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        v = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if v[i] - v[j] < tol:
            converged = True
            break
        ki, kj = idx[i], idx[j]
        old_i, old_j = alpha[i], alpha[j]
        alpha[i], alpha[j] = _pair_update_py(old_i, old_j, y[i], y[j], G[i], G[j],
                                             K[ki, ki], K[kj, kj], K[ki, kj], C)
        dai = alpha[i] - old_i
        daj = alpha[j] - old_j
        G += y * y[i] * K[idx, ki] * dai + y * y[j] * K[idx, kj] * daj
        it += 1
    rho = _rho_py(alpha, y, G, C)
    return alpha[:l] - alpha[l:], rho, it, converged


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _as_layout(widths, out_acts):
    return (np.ascontiguousarray(widths, dtype=np.int64),
            np.ascontiguousarray(out_acts, dtype=np.int64))


def mlp_forward(theta, widths, hidden_act, out_acts, X):
    widths, out_acts = _as_layout(widths, out_acts)
    X = np.ascontiguousarray(X, dtype=float)
    if JIT_ENABLED:
        return mlp_forward_nb(theta, widths, int(hidden_act), out_acts, X)
    return mlp_forward_np(theta, widths, hidden_act, out_acts, X)


def mlp_backprop(theta, widths, hidden_act, out_acts, X, G):
    """Sum over samples of ``G[s] . d out[s] / d theta``."""
    widths, out_acts = _as_layout(widths, out_acts)
    X = np.ascontiguousarray(X, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    if JIT_ENABLED:
        return mlp_backprop_nb(theta, widths, int(hidden_act), out_acts, X, G)
    return mlp_backprop_np(theta, widths, hidden_act, out_acts, X, G)


def mlp_jacobian(theta, widths, hidden_act, out_acts, X, unit=0):
    """Output column ``unit`` and its (n, P) Jacobian."""
    widths, out_acts = _as_layout(widths, out_acts)
    X = np.ascontiguousarray(X, dtype=float)
    if JIT_ENABLED:
        return mlp_jacobian_nb(theta, widths, int(hidden_act), out_acts, X, int(unit))
    return mlp_jacobian_np(theta, widths, hidden_act, out_acts, X, unit)


def smo_solve(K, z, eps, C, tol, max_iter):
    K = np.ascontiguousarray(K, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    if JIT_ENABLED:
        return smo_solve_nb(K, z, float(eps), float(C), float(tol), int(max_iter))
    return smo_solve_np(K, z, float(eps), float(C), float(tol), int(max_iter))
