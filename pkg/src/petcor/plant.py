"""Follower plants: first-order nonlinear, chain of integrators and
strict-feedback forms, each driven by a delayed control input."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as _k
from .errors import ContractViolation


@dataclass(frozen=True)
class Nonlinearity:
    """A plant nonlinearity ``f``.

    ``fn`` is numpy-vectorised: elementwise for ``order == 1`` and over the
    last axis for higher orders. ``scalar`` is the same map on plain floats
    (order 1) or a float sequence (order n); it is what the hot loops call.
    ``deriv`` is ``df/dx`` for order 1 and the gradient for order n.
    """

    name: str
    order: int
    fn: Callable
    scalar: Callable
    deriv: Callable
    lipschitz: float
    certified: bool = True
    params: dict = field(default_factory=dict)
    # (code, params) for the compiled prediction kernel; None means Python only
    kernel: Optional[tuple] = None

    def __call__(self, x):
        return self.fn(x)


def _paper_f():
    return Nonlinearity(
        "paper_f", 1,
        fn=lambda x: x + 0.1 * np.sin(x),
        scalar=lambda x: x + 0.1 * math.sin(x),
        deriv=lambda x: 1.0 + 0.1 * np.cos(x),
        lipschitz=1.1,
        kernel=(_k.F_PAPER, ()),
    )


def _robust_d(x):
    c, s = np.cos(x), np.sin(x)
    return 0.1 * c * x + 0.1 * s - 2.0 * c * s * np.log1p(x * x) + c * c * 2.0 * x / (1.0 + x * x)


def _robust_f(x_range=10.0):
    grid = np.linspace(-x_range, x_range, 400_001)
    ell = float(np.abs(_robust_d(grid)).max()) + 1e-6

    def scalar(x):
        c = math.cos(x)
        return 0.1 * math.sin(x) * x + c * c * math.log1p(x * x)

    return Nonlinearity(
        "robust_f", 1,
        fn=lambda x: 0.1 * np.sin(x) * x + np.cos(x) ** 2 * np.log1p(x * x),
        scalar=scalar,
        deriv=_robust_d,
        lipschitz=ell,
        certified=False,
        params={"x_range": x_range},
        kernel=(_k.F_ROBUST, ()),
    )


def _linear(a=1.0):
    a = float(a)
    return Nonlinearity(
        "linear", 1,
        fn=lambda x: a * np.asarray(x, dtype=float),
        scalar=lambda x: a * x,
        deriv=lambda x: np.full_like(np.asarray(x, dtype=float), a),
        lipschitz=abs(a),
        params={"a": a},
        kernel=(_k.F_LINEAR, (a,)),
    )


def _zero():
    return Nonlinearity(
        "zero", 1,
        fn=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        scalar=lambda x: 0.0,
        deriv=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lipschitz=0.0,
        kernel=(_k.F_ZERO, ()),
    )


def _chain(coeffs, amp=0.0):
    c = np.asarray(coeffs, dtype=float)
    n = c.size
    amp = float(amp)
    cl = [float(v) for v in c]

    def fn(X):
        X = np.asarray(X, dtype=float)
        return X @ c + amp * np.sin(X[..., 0])

    def scalar(X):
        return sum(ci * xi for ci, xi in zip(cl, X)) + amp * math.sin(X[0])

    def deriv(X):
        X = np.asarray(X, dtype=float)
        g = np.broadcast_to(c, X.shape).copy()
        g[..., 0] += amp * np.cos(X[..., 0])
        return g

    return Nonlinearity(
        "chain_sin" if amp else "chain_linear", n,
        fn=fn, scalar=scalar, deriv=deriv,
        lipschitz=float(np.abs(c).max()) + abs(amp),
        params={"coeffs": cl, "amp": amp},
    )


def make_nonlinearity(name, **params):
    """Catalog lookup: ``paper_f``, ``robust_f``, ``linear(a)``, ``zero``,
    ``chain_linear(coeffs)`` and ``chain_sin(coeffs, amp)``."""
    if name == "paper_f":
        return _paper_f()
    if name == "robust_f":
        return _robust_f(**params)
    if name == "linear":
        return _linear(**params)
    if name == "zero":
        return _zero()
    if name == "chain_linear":
        return _chain(params["coeffs"])
    if name == "chain_sin":
        return _chain(params["coeffs"], params.get("amp", 0.1))
    raise ContractViolation(f"unknown nonlinearity {name!r}")


def make_disturbance(name):
    """Additive disturbance catalog; ``paper_dd`` is ``0.1 sin t + 0.1 cos t``."""
    if name in (None, "none"):
        return None
    if name == "paper_dd":
        return lambda t: 0.1 * math.sin(t) + 0.1 * math.cos(t)
    raise ContractViolation(f"unknown disturbance {name!r}")


@dataclass
class FollowerPlant:
    """One follower's physical dynamics.

    ``channel_amps`` turns a chain plant into a strict-feedback one:
    channel ``k < n`` becomes ``X_{k+1} + amp_k * sin(X_k)``.
    """

    f: Nonlinearity
    D_true: float
    X0: Sequence[float]
    disturbance: Optional[Callable[[float], float]] = None
    channel_amps: Optional[Sequence[float]] = None
    ell: Optional[float] = None

    def __post_init__(self):
        if not self.D_true > 0:
            raise ContractViolation("input delay D must be positive")
        self.X0 = np.array(self.X0, dtype=float).reshape(-1)
        if self.X0.size != self.f.order:
            raise ContractViolation(f"X0 has {self.X0.size} entries, plant order is {self.f.order}")
        if self.channel_amps is not None:
            self.channel_amps = [float(a) for a in self.channel_amps]
            if len(self.channel_amps) != self.order - 1:
                raise ContractViolation("strict-feedback plants need order-1 channel amplitudes")
        if self.ell is None:
            self.ell = self.f.lipschitz
        if not self.f.certified:
            warnings.warn(
                f"{self.f.name} is not globally Lipschitz; using the empirical bound {self.ell:.4g}",
                stacklevel=2,
            )

    @property
    def order(self):
        return self.f.order

    @property
    def strict_feedback(self):
        return self.channel_amps is not None


def plant_rhs(p, X, U_delayed, t):
    """State derivative of follower ``p`` at state ``X``.

    The disturbance and the delayed input act on the last channel only.
    """
    d = p.disturbance(t) if p.disturbance is not None else 0.0
    if p.order == 1:
        x = X[0]
        return np.array([p.f.scalar(x) + d + U_delayed])
    dX = np.empty(p.order)
    dX[:-1] = X[1:]
    if p.channel_amps is not None:
        dX[:-1] += [a * math.sin(X[k]) for k, a in enumerate(p.channel_amps)]
    dX[-1] = p.f.scalar(X) + d + U_delayed
    return dX


def delayed_input(hist, t, D_true):
    """``U(t - D)`` read from the history (zero before the start)."""
    return hist.value(t - D_true)


def lipschitz_audit(f, lo=-10.0, hi=10.0, n=200_001):
    """Largest sampled ``|df/dx|`` of a first-order nonlinearity."""
    x = np.linspace(lo, hi, n)
    return float(np.abs(f.deriv(x)).max())
