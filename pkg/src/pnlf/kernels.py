"""Fused per-instance PID update kernels.

Both backends share one calling convention::

    status = epoch_<backend>(U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM,
                             ii, jj, kk, yy, order, gains, flags, fail)

``gains`` is ``[eta, lam, c_i, c_d, alpha]`` and ``flags`` is
``[analytic_reg, literal_first_derivative]``. Instances are visited in
``order``. The return value is -1 on success or the position in ``order``
where a non-finite value appeared; ``fail`` then holds
``(matrix 0/1/2, row, r)`` and nothing for that cell has been written.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit

MATRIX_NAMES = ("U", "O", "M")


@njit(cache=True, nogil=True)
def _sig(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _step(X, I, D, V, row, r, g, eta, c_i, c_d, alpha, literal, fail, which):
    x = X[row, r]
    i_prev = I[row, r]
    delta = eta * g + c_i * i_prev
    if V[row, r] or literal:
        delta += c_d * (g - D[row, r])
    x_new = x - delta
    i_new = (1.0 - alpha) * i_prev + alpha * g
    if not (math.isfinite(x_new) and math.isfinite(i_new) and math.isfinite(g)):
        fail[0] = which
        fail[1] = row
        fail[2] = r
        return False
    X[row, r] = x_new
    I[row, r] = i_new
    D[row, r] = g
    V[row, r] = True
    return True


@njit(cache=True, nogil=True)
def update_scalar(U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM, i, j, k, y, gains, flags, fail, scratch):
    """One training instance; returns False on a non-finite update.

    ``scratch`` is a caller-owned ``(3, R)`` buffer for the sigmoid values.
    """
    eta, lam, c_i, c_d, alpha = gains[0], gains[1], gains[2], gains[3], gains[4]
    analytic = flags[0] != 0
    literal = flags[1] != 0
    R = U.shape[1]
    su = scratch[0]
    so = scratch[1]
    sm = scratch[2]
    pred = 0.0
    for r in range(R):
        su[r] = _sig(U[i, r])
        so[r] = _sig(O[j, r])
        sm[r] = _sig(M[k, r])
        pred += su[r] * so[r] * sm[r]
    err = y - pred
    for r in range(R):
        a = su[r]
        b = so[r]
        c = sm[r]
        if analytic:
            ru = lam * a * a * (1.0 - a)
            ro = lam * b * b * (1.0 - b)
            rm = lam * c * c * (1.0 - c)
        else:
            ru = lam * a * (1.0 - a) * U[i, r]
            ro = lam * b * (1.0 - b) * O[j, r]
            rm = lam * c * (1.0 - c) * M[k, r]
        gu = -err * a * (1.0 - a) * b * c + ru
        go = -err * b * (1.0 - b) * a * c + ro
        gm = -err * c * (1.0 - c) * a * b + rm
        if not _step(U, IU, DU, VU, i, r, gu, eta, c_i, c_d, alpha, literal, fail, 0):
            return False
        if not _step(O, IO, DO, VO, j, r, go, eta, c_i, c_d, alpha, literal, fail, 1):
            return False
        if not _step(M, IM, DM, VM, k, r, gm, eta, c_i, c_d, alpha, literal, fail, 2):
            return False
    return True


@njit(cache=True, nogil=True)
def epoch_numba(U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM, ii, jj, kk, yy, order, gains, flags, fail):
    scratch = np.empty((3, U.shape[1]))
    for t in range(order.shape[0]):
        n = order[t]
        ok = update_scalar(
            U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM, ii[n], jj[n], kk[n], yy[n], gains, flags, fail, scratch
        )
        if not ok:
            return t
    return -1


@njit(cache=True, nogil=True)
def residual_sums_numba(U, O, M, ii, jj, kk, yy):
    """Sums of squared and absolute residuals over the given entries."""
    sse = 0.0
    sae = 0.0
    for n in range(ii.shape[0]):
        i, j, k = ii[n], jj[n], kk[n]
        pred = 0.0
        for r in range(U.shape[1]):
            pred += _sig(U[i, r]) * _sig(O[j, r]) * _sig(M[k, r])
        e = yy[n] - pred
        sse += e * e
        sae += abs(e)
    return sse, sae


# -- numpy fallback ------------------------------------------------------------


def _sig_vec(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _step_vec(x, i_prev, d_prev, visited, g, eta, c_i, c_d, alpha, literal):
    delta = eta * g + c_i * i_prev
    if literal:
        delta = delta + c_d * (g - d_prev)
    else:
        delta = delta + np.where(visited, c_d * (g - d_prev), 0.0)
    return x - delta, (1.0 - alpha) * i_prev + alpha * g


# overflow is reported through ``fail``, so numpy's own warning is noise
@np.errstate(over="ignore", invalid="ignore")
def update_numpy(U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM, i, j, k, y, gains, flags, fail, scratch=None):
    eta, lam, c_i, c_d, alpha = (float(v) for v in gains)
    analytic = bool(flags[0])
    literal = bool(flags[1])
    u, o, m = U[i], O[j], M[k]
    a, b, c = _sig_vec(u), _sig_vec(o), _sig_vec(m)
    err = y - np.sum(a * b * c)
    if analytic:
        ru, ro, rm = lam * a * a * (1.0 - a), lam * b * b * (1.0 - b), lam * c * c * (1.0 - c)
    else:
        ru, ro, rm = lam * a * (1.0 - a) * u, lam * b * (1.0 - b) * o, lam * c * (1.0 - c) * m
    grads = (
        -err * a * (1.0 - a) * b * c + ru,
        -err * b * (1.0 - b) * a * c + ro,
        -err * c * (1.0 - c) * a * b + rm,
    )
    cells = ((U, IU, DU, VU, i), (O, IO, DO, VO, j), (M, IM, DM, VM, k))
    new = []
    for which, ((X, I, D, V, row), g) in enumerate(zip(cells, grads)):
        x_new, i_new = _step_vec(X[row], I[row], D[row], V[row], g, eta, c_i, c_d, alpha, literal)
        bad = ~(np.isfinite(x_new) & np.isfinite(i_new) & np.isfinite(g))
        if bad.any():
            fail[0], fail[1], fail[2] = which, row, int(np.flatnonzero(bad)[0])
            return False
        new.append((x_new, i_new))
    for ((X, I, D, V, row), g, (x_new, i_new)) in zip(cells, grads, new):
        X[row] = x_new
        I[row] = i_new
        D[row] = g
        V[row] = True
    return True


def epoch_numpy(U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM, ii, jj, kk, yy, order, gains, flags, fail):
    for t, n in enumerate(order):
        ok = update_numpy(
            U, O, M, IU, IO, IM, DU, DO, DM, VU, VO, VM, ii[n], jj[n], kk[n], yy[n], gains, flags, fail
        )
        if not ok:
            return t
    return -1


# bounds the (block, R) temporaries so evaluation cost stays linear in n
RESIDUAL_BLOCK = 4096


def residual_sums_numpy(U, O, M, ii, jj, kk, yy):
    sse = 0.0
    sae = 0.0
    for lo in range(0, ii.shape[0], RESIDUAL_BLOCK):
        sl = slice(lo, lo + RESIDUAL_BLOCK)
        pred = np.sum(_sig_vec(U[ii[sl]]) * _sig_vec(O[jj[sl]]) * _sig_vec(M[kk[sl]]), axis=-1)
        e = yy[sl] - pred
        sse += float(e @ e)
        sae += float(np.abs(e).sum())
    return sse, sae


EPOCH_KERNELS = {"numba": epoch_numba, "numpy": epoch_numpy}
UPDATE_KERNELS = {"numba": update_scalar, "numpy": update_numpy}
RESIDUAL_KERNELS = {"numba": residual_sums_numba, "numpy": residual_sums_numpy}
