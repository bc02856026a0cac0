"""Quadrature sums for the multilinear fractional kernel.

Two sum shapes cover every operator in the package.

``center``:  out(x) = sum_{t_1..t_k} prod_j v_j(t_j) * (sum_j |x - t_j|)^e
``adjoint``: out(y) = sum_x v_0(x) sum_{t_1..t_k} prod_j v_j(t_j) * (|x - y| + sum_j |x - t_j|)^e

Values ``v`` arrive pre-multiplied by quadrature weights.  A tuple whose
distance sum is exactly zero is skipped.  The ``center`` form optionally
multiplies each tuple by ``b(t_slot) - b(x)``, which is the commutator.

Numba kernels handle up to two summed slots; anything larger goes through
the chunked numpy path, which is also the fallback when numba is disabled.
"""
from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit, prange

_CHUNK_ELEMENTS = 1 << 22


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


# -- numba kernels ------------------------------------------------------------

@njit(cache=True, inline="always")
def _nb_dist(a, i, b, j):
    s = 0.0
    for k in range(a.shape[1]):
        d = a[i, k] - b[j, k]
        s += d * d
    return math.sqrt(s)


@njit(parallel=True, cache=True)
def _nb_center1(xs, t1, v1, e, slot, bt, bx, out):
    for p in prange(xs.shape[0]):
        acc = 0.0
        for i in range(t1.shape[0]):
            s = _nb_dist(xs, p, t1, i)
            if s > 0.0:
                w = v1[i]
                if slot == 0:
                    w *= bt[i] - bx[p]
                acc += w * math.pow(s, e)
        out[p] = acc


@njit(parallel=True, cache=True)
def _nb_center2(xs, t1, v1, t2, v2, e, slot, bt, bx, out):
    n1 = t1.shape[0]
    n2 = t2.shape[0]
    for p in prange(xs.shape[0]):
        d2 = np.empty(n2)
        w2 = np.empty(n2)
        for j in range(n2):
            d2[j] = _nb_dist(xs, p, t2, j)
            w2[j] = v2[j]
            if slot == 1:
                w2[j] *= bt[j] - bx[p]
        acc = 0.0
        for i in range(n1):
            d1 = _nb_dist(xs, p, t1, i)
            inner = 0.0
            for j in range(n2):
                s = d1 + d2[j]
                if s > 0.0:
                    inner += w2[j] * math.pow(s, e)
            w1 = v1[i]
            if slot == 0:
                w1 *= bt[i] - bx[p]
            acc += w1 * inner
        out[p] = acc


@njit(parallel=True, cache=True)
def _nb_adjoint1(ys, x0, v0, t1, v1, e, out):
    n0 = x0.shape[0]
    n1 = t1.shape[0]
    dxt = np.empty((n0, n1))
    for i in range(n0):
        for j in range(n1):
            dxt[i, j] = _nb_dist(x0, i, t1, j)
    for p in prange(ys.shape[0]):
        acc = 0.0
        for i in range(n0):
            dxy = _nb_dist(ys, p, x0, i)
            inner = 0.0
            for j in range(n1):
                s = dxy + dxt[i, j]
                if s > 0.0:
                    inner += v1[j] * math.pow(s, e)
            acc += v0[i] * inner
        out[p] = acc


# -- numpy path -----------------------------------------------------------------

def _np_center(xs, ts, vs, e, slot, bt, bx):
    k = len(ts)
    out = np.empty(xs.shape[0])
    per_point = max(1, math.prod(len(t) for t in ts))
    chunk = max(1, _CHUNK_ELEMENTS // per_point)
    for start in range(0, xs.shape[0], chunk):
        sl = slice(start, start + chunk)
        x = xs[sl]
        s = np.zeros((x.shape[0],) + tuple(len(t) for t in ts))
        w = np.ones_like(s)
        for j, (t, v) in enumerate(zip(ts, vs)):
            shape = [x.shape[0]] + [1] * k
            shape[j + 1] = len(t)
            s = s + _dist(x, t).reshape(shape)
            vj = np.broadcast_to(v, (x.shape[0], len(t)))
            if j == slot:
                vj = vj * (bt[None, :] - bx[sl, None])
            w = w * vj.reshape(shape)
        with np.errstate(divide="ignore"):
            kern = np.where(s > 0.0, np.power(np.where(s > 0.0, s, 1.0), e), 0.0)
        out[sl] = np.sum((w * kern).reshape(x.shape[0], -1), axis=1)
    return out


def _np_adjoint(ys, x0, v0, ts, vs, e):
    k = len(ts)
    out = np.empty(ys.shape[0])
    per_point = max(1, len(x0) * math.prod(len(t) for t in ts))
    chunk = max(1, _CHUNK_ELEMENTS // per_point)
    # distance sums not involving the output point are shared by all chunks
    inner_s = np.zeros((len(x0),) + tuple(len(t) for t in ts))
    inner_w = np.ones_like(inner_s)
    for j, (t, v) in enumerate(zip(ts, vs)):
        shape = [len(x0)] + [1] * k
        shape[j + 1] = len(t)
        inner_s = inner_s + _dist(x0, t).reshape(shape)
        tshape = [1] * (k + 1)
        tshape[j + 1] = len(t)
        inner_w = inner_w * np.asarray(v).reshape(tshape)
    for start in range(0, ys.shape[0], chunk):
        sl = slice(start, start + chunk)
        dxy = _dist(ys[sl], x0).reshape((-1, len(x0)) + (1,) * k)
        s = dxy + inner_s[None]
        with np.errstate(divide="ignore"):
            kern = np.where(s > 0.0, np.power(np.where(s > 0.0, s, 1.0), e), 0.0)
        inner = np.sum((kern * inner_w[None]).reshape(s.shape[0], len(x0), -1), axis=2)
        out[sl] = inner @ v0
    return out


# -- dispatch ---------------------------------------------------------------------

def center_sum(xs, ts, vs, e, slot=-1, bt=None, bx=None) -> np.ndarray:
    """Evaluate the ``center`` sum at the rows of ``xs``.

    ``ts[j]`` are node coordinates ``(N_j, n)`` and ``vs[j]`` weighted values.
    With ``slot >= 0`` every tuple is multiplied by ``bt[t_slot] - bx[x]``.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ts = [np.ascontiguousarray(t, dtype=np.float64) for t in ts]
    vs = [np.ascontiguousarray(v, dtype=np.float64) for v in vs]
    if slot >= 0:
        bt = np.ascontiguousarray(bt, dtype=np.float64)
        bx = np.ascontiguousarray(bx, dtype=np.float64)
    else:
        bt = np.zeros(1)
        bx = np.zeros(1)
    if xs.shape[0] == 0 or any(len(t) == 0 for t in ts):
        return np.zeros(xs.shape[0])
    if _accel.backend() == "numba" and len(ts) <= 2:
        out = np.empty(xs.shape[0])
        if len(ts) == 1:
            _nb_center1(xs, ts[0], vs[0], float(e), int(slot), bt, bx, out)
        else:
            _nb_center2(xs, ts[0], vs[0], ts[1], vs[1], float(e), int(slot), bt, bx, out)
        return out
    return _np_center(xs, ts, vs, float(e), slot, bt, bx)


def adjoint_sum(ys, x0, v0, ts, vs, e) -> np.ndarray:
    """Evaluate the ``adjoint`` sum at the rows of ``ys``."""
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    ts = [np.ascontiguousarray(t, dtype=np.float64) for t in ts]
    vs = [np.ascontiguousarray(v, dtype=np.float64) for v in vs]
    if ys.shape[0] == 0 or len(x0) == 0 or any(len(t) == 0 for t in ts):
        return np.zeros(ys.shape[0])
    if not ts:
        return center_sum(ys, [x0], [v0], e)
    if _accel.backend() == "numba" and len(ts) == 1:
        out = np.empty(ys.shape[0])
        _nb_adjoint1(ys, x0, v0, ts[0], vs[0], float(e), out)
        return out
    return _np_adjoint(ys, x0, v0, ts, vs, float(e))


# -- sweep sums --------------------------------------------------------------------

@njit(cache=True)
def _nb_sweep(deltas, counts, out):
    s = 0.0
    c = 0.0
    active = 0
    for i in range(deltas.shape[0]):
        x = deltas[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        active += counts[i]
        if active == 0:
            s = 0.0
            c = 0.0
        out[i] = s + c


def _np_sweep(deltas, counts, out):
    s = c = 0.0
    active = 0
    for i, x in enumerate(deltas.tolist()):
        t = s + x
        c += (s - t) + x if abs(s) >= abs(x) else (x - t) + s
        s = t
        active += int(counts[i])
        if active == 0:
            s = c = 0.0
        out[i] = s + c


def sweep_sum(deltas, counts) -> np.ndarray:
    """Running sum of ``deltas`` with Neumaier compensation.

    The sum restarts at exactly zero whenever the running total of ``counts``
    returns to zero, so rounding residue never leaks across gaps.
    """
    deltas = np.ascontiguousarray(deltas, dtype=np.float64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    out = np.empty(deltas.shape[0])
    if _accel.backend() == "numba":
        _nb_sweep(deltas, counts, out)
    else:
        _np_sweep(deltas, counts, out)
    return out
