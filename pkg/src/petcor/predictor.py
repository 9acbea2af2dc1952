"""Predictor-feedback control law with certainty-equivalence estimates.

Each follower predicts its shifted state ``D_hat`` seconds ahead by
integrating its own model over the stored control history, then applies a
proportional gain to the prediction plus a feedforward residual.

Notation used in the code:

* ``chi`` -- predicted shifted state on the unit grid ``x in [0, 1]``
* ``w``   -- propagated leader estimate ``exp(S_hat D_hat x) v_hat``
* ``u_check`` -- raw history ``U(t + (x - 1) D_hat)``
* ``u_hat``   -- ``u_check`` minus the residual at ``w``
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, PredictionOverflow
from ._kernels import predict_first_order as _predict_first_order
from .exosys import expm

MIN_GRID = 16


@dataclass(frozen=True)
class ControllerConfig:
    """Per-follower controller settings.

    ``K`` is a scalar for first-order plants and a length-``n`` row for
    chain plants. For first-order plants ``ell + K < 0`` is enforced.
    """

    K: object
    D_hat: float
    Nx: int = 20
    ell: float = 0.0

    def __post_init__(self):
        K = np.atleast_1d(np.asarray(self.K, dtype=float)).reshape(-1)
        object.__setattr__(self, "K", K)
        if not self.D_hat > 0:
            raise ConfigError("D_hat must be positive", "controller.D_hat")
        if int(self.Nx) != self.Nx or self.Nx < MIN_GRID:
            raise ConfigError(f"Nx must be an integer >= {MIN_GRID}", "controller.Nx")
        object.__setattr__(self, "Nx", int(self.Nx))
        if K.size == 1 and not self.ell + K[0] < 0:
            raise ConfigError(
                f"gain not admissible: ell + K = {self.ell + K[0]:.4g} must be negative",
                "controller.K",
            )

    @property
    def order(self):
        return self.K.size


def place_chain_gain(poles, ell=None):
    """Gain row ``K`` placing the poles of the chain ``X' = shift(X) + e_n K X``.

    The closed-loop characteristic polynomial is
    ``s^n - K_n s^{n-1} - ... - K_1``, so ``K`` is minus the reversed
    coefficients of ``prod(s - p)``.
    """
    coeffs = np.real_if_close(np.poly(np.asarray(poles)))
    if np.iscomplexobj(coeffs):
        raise ContractViolation("poles must come in conjugate pairs")
    K = -np.asarray(coeffs[1:], dtype=float)[::-1]
    depth = min(-np.real(np.asarray(poles)))
    if depth <= 0:
        raise ContractViolation("poles must lie in the open left half plane")
    if ell is not None and ell >= depth:
        warnings.warn(
            f"Lipschitz bound {ell:.3g} is not small against the pole depth {depth:.3g}",
            stacklevel=2,
        )
    return K


def _ref_rows(S, n):
    """Rows ``F S^k`` for ``k = 0..n`` (the last one feeds the residual)."""
    n_v = S.shape[0]
    if n == 1:
        rows = np.zeros((2, n_v))
        rows[0, 0] = 1.0
        rows[1] = S[0]
        return rows
    rows = np.empty((n + 1, n_v))
    row = np.zeros(n_v)
    row[0] = 1.0
    for k in range(n + 1):
        rows[k] = row
        row = row @ S
    return rows


def reference_states(v, S, n):
    """Leader-induced reference ``(F v, F S v, ..., F S^{n-1} v)``.

    ``v`` may be a single state or a stack of shape ``(m, n_v)``.
    """
    rows = _ref_rows(np.asarray(S, dtype=float), n)[:n]
    return np.asarray(v, dtype=float) @ rows.T


def f_bar(f, X_bar, v, S):
    """Shifted nonlinearity ``f(X_bar + ref(v)) - f(ref(v))``."""
    n = f.order
    ref = reference_states(v, S, n)
    if n == 1:
        return f.fn(np.asarray(X_bar, dtype=float) + ref[..., 0]) - f.fn(ref[..., 0])
    return f.fn(np.asarray(X_bar, dtype=float) + ref) - f.fn(ref)


def residual_R(v, S, f, n=None):
    """Feedforward residual ``F S^n v - f(F v, ..., F S^{n-1} v)``."""
    n = f.order if n is None else n
    S = np.asarray(S, dtype=float)
    rows = _ref_rows(S, n)
    v = np.asarray(v, dtype=float)
    ref = v @ rows[:n].T
    top = v @ rows[n]
    if n == 1:
        return top - f.fn(ref[..., 0])
    return top - f.fn(ref)


def propagate_grid(S_hat, v_hat, D_hat, points):
    """``exp(S_hat D_hat x_m) v_hat`` on ``points`` evenly spaced x in [0, 1].

    Rows are filled by doubling: block ``[m, 2m)`` is block ``[0, m)``
    advanced by ``E^m``.
    """
    E = expm(S_hat, D_hat / (points - 1))
    W = np.empty((points, v_hat.size))
    W[0] = v_hat
    m = 1
    while m < points:
        top = min(2 * m, points)
        W[m:top] = W[: top - m] @ E.T
        E = E @ E
        m = top
    return W


_GRIDS = {}


def _unit_grid(points):
    xs = _GRIDS.get(points)
    if xs is None:
        xs = _GRIDS[points] = np.linspace(0.0, 1.0, points)
        xs.setflags(write=False)
    return xs


@dataclass
class Prediction:
    """Prediction at one time instant on the grid ``x_k = k / Nx``."""

    x: np.ndarray
    chi: np.ndarray      # (Nx+1, n)
    w: np.ndarray        # (Nx+1, n_v)
    u_check: np.ndarray  # (Nx+1,)
    u_hat: np.ndarray    # (Nx+1,)
    R_end: float

    @property
    def chi_end(self):
        return self.chi[-1]


def predict(X_hat, v_hat, S_hat, hist, cfg, f, t, hold_until=None):
    """Solve the prediction integral for ``chi`` on the unit grid.

    ``chi' = D_hat * (shift(chi) + e_n * (f_bar(chi, w(x)) + u_hat(x)))``,
    ``chi(0) = X_hat``, marched with the classical Runge-Kutta scheme at
    ``Nx`` steps. History values needed at the midpoints are interpolated
    linearly. ``hold_until`` is forwarded to the history lookup.
    """
    n = f.order
    if cfg.order != n:
        raise ContractViolation(f"gain has {cfg.order} entries, plant order is {n}")
    X_hat = np.atleast_1d(np.asarray(X_hat, dtype=float))
    v_hat = np.asarray(v_hat, dtype=float)
    S_hat = np.asarray(S_hat, dtype=float)
    Nx, D = cfg.Nx, cfg.D_hat
    pts = 2 * Nx + 1
    xs = _unit_grid(pts)

    if n == 1 and f.kernel is not None:
        u_check = hist.lookup(t + (xs - 1.0) * D, hold_until)
        code, par = f.kernel
        chi, W, u_hat, R, ok = _predict_first_order(
            float(X_hat[0]), S_hat, v_hat, float(D), Nx, u_check, code,
            np.array(par, dtype=float),
        )
        if not ok:
            raise PredictionOverflow("prediction integral blew up on [0, 1]")
        return Prediction(
            x=xs[::2], chi=chi.reshape(-1, 1), w=W[::2],
            u_check=u_check[::2], u_hat=u_hat[::2], R_end=float(R[-1]),
        )

    W = propagate_grid(S_hat, v_hat, D, pts)
    rows = _ref_rows(S_hat, n)
    refs = W @ rows[:n].T
    f_ref = f.fn(refs[:, 0]) if n == 1 else f.fn(refs)
    R = W @ rows[n] - f_ref
    u_check = hist.lookup(t + (xs - 1.0) * D, hold_until)
    u_hat = u_check - R
    # f_bar + u_hat = f(chi + ref) + (u_hat - f(ref))
    c = u_hat - f_ref

    dx = 1.0 / Nx
    if n == 1:
        chi = _march_scalar(float(X_hat[0]), refs[:, 0].tolist(), c.tolist(), f.scalar, D, dx, Nx)
        chi = chi.reshape(-1, 1)
    else:
        chi = _march_chain(X_hat, refs, c, f.fn, D, dx, Nx)
    if n > 1 and not np.isfinite(chi).all():
        raise PredictionOverflow("prediction integral blew up on [0, 1]")
    return Prediction(
        x=xs[::2], chi=chi, w=W[::2],
        u_check=u_check[::2], u_hat=u_hat[::2], R_end=float(R[-1]),
    )


def _march_scalar(chi, refs, c, fs, D, dx, Nx):
    out = [chi]
    half = 0.5 * dx
    sixth = dx / 6.0
    for k in range(Nx):
        m = 2 * k
        r0, r1, r2 = refs[m], refs[m + 1], refs[m + 2]
        c0, c1, c2 = c[m], c[m + 1], c[m + 2]
        k1 = D * (fs(chi + r0) + c0)
        k2 = D * (fs(chi + half * k1 + r1) + c1)
        k3 = D * (fs(chi + half * k2 + r1) + c1)
        k4 = D * (fs(chi + dx * k3 + r2) + c2)
        chi = chi + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(chi):
            raise PredictionOverflow("prediction integral blew up on [0, 1]")
        out.append(chi)
    return np.array(out)


def _march_chain(chi, refs, c, fn, D, dx, Nx):
    def g(y, m):
        d = np.empty_like(y)
        d[:-1] = y[1:]
        d[-1] = fn(y + refs[m]) + c[m]
        return D * d

    out = np.empty((Nx + 1, chi.size))
    out[0] = chi
    for k in range(Nx):
        m = 2 * k
        k1 = g(chi, m)
        k2 = g(chi + 0.5 * dx * k1, m + 1)
        k3 = g(chi + 0.5 * dx * k2, m + 1)
        k4 = g(chi + dx * k3, m + 2)
        chi = chi + dx / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = chi
    return out


def control(chi, v_hat, S_hat, cfg, f, w_end=None, R_end=None):
    """Controller output ``U = K chi(1) + R(exp(S_hat D_hat) v_hat, S_hat)``.

    ``chi`` is the predicted grid (or just its endpoint). ``w_end`` skips the
    matrix exponential when the caller already propagated ``v_hat``, and
    ``R_end`` skips the residual as well.
    """
    chi = np.asarray(chi, dtype=float)
    chi_end = chi[-1] if chi.ndim == 2 else np.atleast_1d(chi)
    if R_end is not None:
        return float(cfg.K @ chi_end + R_end)
    if w_end is None:
        w_end = expm(S_hat, cfg.D_hat) @ np.asarray(v_hat, dtype=float)
    return float(cfg.K @ chi_end + residual_R(w_end, S_hat, f))
