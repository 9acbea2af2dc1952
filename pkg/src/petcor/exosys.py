"""Leader (exosystem) dynamics and the small-matrix exponential.

The leader is the autonomous linear system ``v' = S v`` with scalar output
``y0 = F v`` where ``F = [1, 0, ..., 0]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

EIG_TOL = 1e-9

# Taylor order after scaling; ||X|| <= 0.5 makes the 19th term < 1e-23.
_TAYLOR_ORDER = 18
_MIN_ORDER = 12
_SCALE_TARGET = 0.5


_EYES = {}


def _eye(n):
    I = _EYES.get(n)
    if I is None:
        I = _EYES[n] = np.eye(n)
        I.setflags(write=False)
    return I


def expm(A, t=1.0):
    """Matrix exponential ``exp(A t)`` by scaling and squaring.

    The scaled argument ``X = A t / 2**k`` satisfies ``||X||_1 <= 0.5`` and
    its exponential is summed as a truncated Taylor series, then squared
    ``k`` times.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Square matrix with finite entries.
    t : float
        Time multiplier.

    Returns
    -------
    ndarray, shape (n, n)
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolation(f"expm needs a square matrix, got shape {A.shape}")
    if not math.isfinite(t):
        raise ContractViolation("expm needs finite entries and a finite time")
    n = A.shape[0]
    if n == 0:
        return np.eye(0)
    M = A * t
    norm = float(np.abs(M).sum(axis=0).max())
    if not math.isfinite(norm):
        raise ContractViolation("expm needs finite entries and a finite time")
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
    I = _eye(n)
    result = I + M / order
    for m in range(order - 1, 0, -1):
        result = I + (M @ result) / m
    for _ in range(k):
        result = result @ result
    return result


def _first_row_selector(n_v):
    F = np.zeros(n_v)
    F[0] = 1.0
    return F


@dataclass(frozen=True)
class Exosystem:
    """Leader model ``v' = S v``, ``y0 = F v``.

    ``F`` defaults to ``[1, 0, ..., 0]``; passing anything else is rejected.
    A leader with an eigenvalue off the imaginary axis only produces a
    warning so that unstable or damped references can still be explored.
    """

    S: np.ndarray
    v0: np.ndarray
    F: np.ndarray = field(default=None)

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        v0 = np.array(self.v0, dtype=float).reshape(-1)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ContractViolation(f"S must be square, got shape {S.shape}")
        if v0.shape[0] != S.shape[0]:
            raise ContractViolation("v0 length does not match S")
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(v0))):
            raise ContractViolation("S and v0 must be finite")
        F = _first_row_selector(S.shape[0])
        if self.F is not None:
            given = np.array(self.F, dtype=float).reshape(-1)
            if given.shape != F.shape or not np.array_equal(given, F):
                raise ContractViolation("F must be [1, 0, ..., 0]")
        S.setflags(write=False)
        v0.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "F", F)

        re = np.linalg.eigvals(S).real
        if np.any(np.abs(re) > EIG_TOL):
            warnings.warn(
                f"leader matrix is not marginally stable (max |Re(eig)| = {np.abs(re).max():.3g})",
                stacklevel=2,
            )

    @property
    def n_v(self):
        return self.S.shape[0]


def leader_state(exo, t):
    """Return ``(v(t), y0(t))`` for the leader started at ``exo.v0``."""
    if t < 0:
        raise ContractViolation("leader_state needs t >= 0")
    v = expm(exo.S, t) @ exo.v0
    return v, float(exo.F @ v)
