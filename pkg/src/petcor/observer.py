"""Periodic event-triggered adaptive distributed observer.

Every follower ``i`` estimates the leader matrix and state ``(S_hat_i,
v_hat_i)``. Neighbours only ever see snapshots taken at event instants; in
between, a snapshot of ``v_hat`` is extrapolated with the snapshot of
``S_hat`` (the *held estimate*). Each directed pair ``(i, j)``, including
self pairs, samples with its own period and transmits only when the sender's
live estimate has drifted from what the receiver holds by more than an
exponentially decaying threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SchedulingFault
from .exosys import expm

GRID_TOL = 1e-9


@dataclass
class ObserverState:
    S_hat: np.ndarray
    v_hat: np.ndarray

    @classmethod
    def zeros(cls, n_v):
        return cls(np.zeros((n_v, n_v)), np.zeros(n_v))


@dataclass(frozen=True)
class BroadcastRecord:
    """Snapshot ``(S_hat_j, v_hat_j)`` delivered at ``t_event``."""

    t_event: float
    S_snapshot: np.ndarray
    v_snapshot: np.ndarray


@dataclass(frozen=True)
class ObserverParams:
    kappa1: float
    kappa2: float
    delta_S: float
    delta_v: float
    gamma_S: float
    gamma_v: float

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "delta_S", "delta_v", "gamma_S", "gamma_v"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"observer parameter {name} must be positive")

    @property
    def kappa(self):
        return max(self.kappa1, self.kappa2)


def held_estimate(rec, t):
    """``exp(S_snapshot (t - t_event)) v_snapshot``."""
    if t < rec.t_event - 1e-12:
        raise ContractViolation(f"held estimate queried at t={t} before its event {rec.t_event}")
    return expm(rec.S_snapshot, t - rec.t_event) @ rec.v_snapshot


def observer_rhs(state, records, self_record, weights, params, t):
    """Right-hand side of the observer of one follower.

    Parameters
    ----------
    state : ObserverState
        Live ``(S_hat_i, v_hat_i)``.
    records : dict[int, BroadcastRecord]
        Latest record received from each neighbour ``j`` (``0`` = leader).
    self_record : BroadcastRecord
        The follower's own self-sampled record.
    weights : dict[int, float]
        Edge weights ``a_ij`` for the neighbours.

    Only snapshots and held values enter the consensus terms.
    """
    dS = np.zeros_like(state.S_hat)
    dv = state.S_hat @ state.v_hat
    own = held_estimate(self_record, t)
    for j, a in weights.items():
        if j not in records:
            raise ContractViolation(f"no broadcast record from neighbour {j}")
        rec = records[j]
        dS = dS + a * (rec.S_snapshot - self_record.S_snapshot)
        dv = dv + params.kappa2 * a * (held_estimate(rec, t) - own)
    return params.kappa1 * dS, dv


def on_grid(tau, period):
    k = round(tau / period)
    return abs(tau - k * period) <= GRID_TOL * max(1.0, period)


def pair_deviation(sender_S, sender_v, last, tau, held=None):
    """Frobenius deviation of ``S`` and Euclidean deviation of ``v`` between
    the sender's live estimate and what the receiver currently holds."""
    if held is None:
        held = held_estimate(last, tau)
    dev_S = float(np.linalg.norm(sender_S - last.S_snapshot))
    dev_v = float(np.linalg.norm(sender_v - held))
    return dev_S, dev_v


def thresholds(params, tau):
    return params.delta_S * math.exp(-params.gamma_S * tau), params.delta_v * math.exp(-params.gamma_v * tau)


def trigger_check_pair(sender_S, sender_v, last, params, tau, period=None, held=None):
    """True when the pair must transmit at sampling instant ``tau``.

    Fires on a strict exceedance of either threshold. ``period`` enables the
    grid check; ``held`` short-circuits the held-estimate computation.
    """
    if period is not None and not on_grid(tau, period):
        raise SchedulingFault(f"tau={tau} is not a multiple of the pair period {period}")
    if tau <= last.t_event:
        raise SchedulingFault(f"tau={tau} does not follow the last event at {last.t_event}")
    dev_S, dev_v = pair_deviation(sender_S, sender_v, last, tau, held)
    thr_S, thr_v = thresholds(params, tau)
    return dev_S > thr_S or dev_v > thr_v


class HeldBank:
    """Held estimates of many records advanced together on a uniform grid.

    Row ``r`` keeps the held value of record ``r`` at the current grid time
    and the half-step propagator ``exp(S_snapshot h/2)`` so that the values
    at ``t + h/2`` and ``t + h`` cost one batched product each.
    """

    def __init__(self, n_records, n_v, h):
        self.h = h
        self.E = np.zeros((n_records, n_v, n_v))
        self.cur = np.zeros((n_records, n_v))

    def reset(self, r, rec, t):
        self.E[r] = expm(rec.S_snapshot, 0.5 * self.h)
        self.cur[r] = held_estimate(rec, t)

    def stages(self):
        """Held values at ``t``, ``t + h/2`` and ``t + h``."""
        mid = np.einsum("rij,rj->ri", self.E, self.cur)
        end = np.einsum("rij,rj->ri", self.E, mid)
        return self.cur, mid, end

    def advance(self, end):
        self.cur = end
