"""Compiled inner loops for first-order followers.

Catalog nonlinearities carry a small integer ``kernel`` code so the
prediction integral can run without calling back into Python. The
formulas mirror the numpy versions in :mod:`petcor.plant` and the tests
hold the two paths together.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

F_ZERO = 0
F_LINEAR = 1
F_PAPER = 2
F_ROBUST = 3

_TAYLOR_ORDER = 18
_MIN_ORDER = 12
_SCALE_TARGET = 0.5


@njit(cache=True)
def f_eval(code, p, x):
    if code == F_ZERO:
        return 0.0
    if code == F_LINEAR:
        return p[0] * x
    if code == F_PAPER:
        return x + 0.1 * math.sin(x)
    if code == F_ROBUST:
        c = math.cos(x)
        return 0.1 * math.sin(x) * x + c * c * math.log1p(x * x)
    return math.nan


@njit(cache=True)
def expm_kernel(A, t):
    """Same scaling-and-squaring scheme as :func:`petcor.exosys.expm`."""
    n = A.shape[0]
    M = A * t
    norm = 0.0
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += abs(M[i, j])
        norm = max(norm, col)
    k = 0
    if norm > _SCALE_TARGET:
        k = int(math.ceil(math.log2(norm / _SCALE_TARGET)))
        M = M / (2.0 ** k)
        norm = norm / (2.0 ** k)
    # at least _MIN_ORDER terms, more while the next one still exceeds 1e-18
    order, term = 1, norm
    while order < _TAYLOR_ORDER and (order < _MIN_ORDER or term * norm / (order + 1) > 1e-18):
        order += 1
        term *= norm / order
    I = np.eye(n)
    result = I + M / order
    for m in range(order - 1, 0, -1):
        result = I + (M @ result) / m
    for _ in range(k):
        result = result @ result
    return result


@njit(cache=True)
def predict_first_order(chi0, S, v, D, Nx, u_check, code, p):
    """Prediction integral of a scalar follower on ``2 Nx + 1`` half-grid points.

    Returns ``(chi, W, u_hat, R, ok)``; ``chi`` holds the ``Nx + 1`` grid
    values and ``ok`` is False once the march leaves the finite range.
    """
    pts = 2 * Nx + 1
    nv = v.shape[0]
    E = expm_kernel(S, D / (pts - 1))
    W = np.empty((pts, nv))
    W[0] = v
    for m in range(1, pts):
        for a in range(nv):
            acc = 0.0
            for b in range(nv):
                acc += E[a, b] * W[m - 1, b]
            W[m, a] = acc
    ref = np.empty(pts)
    c = np.empty(pts)
    R = np.empty(pts)
    u_hat = np.empty(pts)
    for m in range(pts):
        r = W[m, 0]
        top = 0.0
        for b in range(nv):
            top += S[0, b] * W[m, b]
        fr = f_eval(code, p, r)
        ref[m] = r
        R[m] = top - fr
        u_hat[m] = u_check[m] - R[m]
        c[m] = u_hat[m] - fr

    dx = 1.0 / Nx
    half = 0.5 * dx
    chi = np.empty(Nx + 1)
    y = chi0
    chi[0] = y
    ok = True
    for k in range(Nx):
        m = 2 * k
        k1 = D * (f_eval(code, p, y + ref[m]) + c[m])
        k2 = D * (f_eval(code, p, y + half * k1 + ref[m + 1]) + c[m + 1])
        k3 = D * (f_eval(code, p, y + half * k2 + ref[m + 1]) + c[m + 1])
        k4 = D * (f_eval(code, p, y + dx * k3 + ref[m + 2]) + c[m + 2])
        y = y + dx / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(y):
            ok = False
            break
        chi[k + 1] = y
    return chi, W, u_hat, R, ok
