"""Deterministic fixed-step closed-loop simulator.

Time advances on an integer tick counter, ``t = k * h``. Every tick runs, in
order:

1. network sampling: each pair whose period divides the tick checks its
   trigger and, on firing, replaces the receiver's snapshot;
2. sensor sampling (filtered mode only): trigger check and hold refresh;
3. controller evaluation: prediction, control law, append ``U(t)``;
4. one classical Runge-Kutta step of all continuous states over
   ``[t, t + h]`` with snapshots frozen and delayed inputs read from the
   history.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .diagnostics import (
    DiagnosticsConfig,
    backstepping_snapshot,
    lyapunov_V,
    lyapunov_calV,
)
from .errors import ContractViolation, PetcorError, SimulationFault
from .exosys import Exosystem, expm, leader_state
from .history import InputHistory
from .observer import BroadcastRecord, HeldBank, ObserverParams, thresholds
from .petfilter import FilterParams, FilterState, filter_rhs, sample_and_trigger, sensor_deviation
from .plant import FollowerPlant, plant_rhs
from .predictor import ControllerConfig, control, predict, reference_states
from .topology import CommGraph, has_spanning_tree

logger = logging.getLogger(__name__)

TICK_TOL = 1e-12
# the leader is stepped by exp(S h) and re-anchored to exp(S t) v0 this often
LEADER_RESYNC = 1000


def ticks(period, h, what="period"):
    """Number of master steps in ``period``; must be an integer."""
    r = period / h
    k = round(r)
    if k < 1 or abs(r - k) > TICK_TOL * max(1.0, r):
        raise ContractViolation(f"master step h={h} does not divide the {what} {period}")
    return int(k)


@dataclass
class Scenario:
    """Everything needed for one closed-loop run.

    ``filters`` present (one entry per follower) switches the controllers to
    the event-triggered sensor path; absent, each controller reads
    ``X - ref(v_hat)`` directly.
    """

    exo: Exosystem
    graph: CommGraph
    plants: List[FollowerPlant]
    controllers: List[ControllerConfig]
    observer: ObserverParams
    t_end: float
    h: float = 1e-3
    filters: Optional[List[FilterParams]] = None
    diagnostics: Optional[DiagnosticsConfig] = None
    name: str = "scenario"

    def __post_init__(self):
        N = self.graph.N
        if len(self.plants) != N or len(self.controllers) != N:
            raise ContractViolation(f"need {N} plants and controllers, one per follower")
        if self.filters is not None and len(self.filters) != N:
            raise ContractViolation(f"need {N} filter parameter sets")
        if not has_spanning_tree(self.graph):
            raise ContractViolation("graph has no directed spanning tree rooted at the leader")
        if not (self.h > 0 and self.t_end >= 0):
            raise ContractViolation("need h > 0 and t_end >= 0")
        periods = dict(self.graph.periods)
        for pair, T in periods.items():
            ticks(T, self.h, f"period of pair {pair}")
            if self.h > T / 2 + TICK_TOL:
                raise ContractViolation(f"h must be at most half the period of pair {pair}")
        for i, (p, c) in enumerate(zip(self.plants, self.controllers), start=1):
            if c.order != p.order:
                raise ContractViolation(f"follower {i}: gain length does not match plant order")
            if p.D_true < self.h or c.D_hat < self.h:
                raise ContractViolation(f"follower {i}: delays must be at least one master step")
            if self.filters is not None:
                fp = self.filters[i - 1]
                ticks(fp.calT, self.h, f"sensor period of follower {i}")
                if self.h > fp.calT / 2 + TICK_TOL:
                    raise ContractViolation(f"follower {i}: h must be at most half the sensor period")
                if p.order != 1:
                    raise ContractViolation(f"follower {i}: the event-triggered filter needs a first-order plant")
        self.n_steps = int(round(self.t_end / self.h))
        if abs(self.n_steps * self.h - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ContractViolation("t_end must be a multiple of h")


class NetEvent(NamedTuple):
    tick: int
    t: float
    sender: int
    receiver: int
    kind: str
    deviation: float
    threshold: float


class SensorEvent(NamedTuple):
    tick: int
    t: float
    agent: int
    phi: float
    deviation: float
    threshold: float


@dataclass
class SimTrace:
    """Time series on the master grid plus event logs.

    Per-follower arrays are indexed ``[tick, follower - 1, ...]``; state
    arrays are padded to the largest plant order with NaN.
    """

    t: np.ndarray
    v: np.ndarray
    y0: np.ndarray
    X: np.ndarray
    X_hat: np.ndarray
    U: np.ndarray
    e: np.ndarray
    v_hat: np.ndarray
    S_hat: np.ndarray
    phi: np.ndarray
    orders: list
    net_events: list = field(default_factory=list)
    sensor_events: list = field(default_factory=list)
    pair_samples: dict = field(default_factory=dict)
    pair_periods: dict = field(default_factory=dict)
    sensor_samples: dict = field(default_factory=dict)
    sensor_periods: dict = field(default_factory=dict)
    V: Optional[np.ndarray] = None
    V_terms: Optional[np.ndarray] = None
    calV: Optional[np.ndarray] = None
    w_end: Optional[np.ndarray] = None
    h: float = 0.0
    name: str = ""

    @property
    def N(self):
        return self.U.shape[1]

    def observer_error(self):
        """``||v_hat_i - v||`` per tick and follower."""
        return np.linalg.norm(self.v_hat - self.v[:, None, :], axis=2)


class Simulator:
    """Stateful runner of one scenario; use :func:`run` for the common case."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        g = sc.graph
        self.N = N = g.N
        self.n_v = n_v = sc.exo.n_v
        self.h = h = sc.h
        self.k = 0

        self.X = [p.X0.copy() for p in sc.plants]
        self.S_hat = np.zeros((N, n_v, n_v))
        self.v_hat = np.zeros((N, n_v))

        self.pairs = g.pairs()
        self.pair_ticks = [ticks(g.periods[p], h) for p in self.pairs]
        R = len(self.pairs)
        self.self_row = {}
        C = np.zeros((N, R))
        for r, (i, j) in enumerate(self.pairs):
            if i == j:
                self.self_row[i] = r
        for r, (i, j) in enumerate(self.pairs):
            if i != j:
                a = g.adjacency[i, j]
                C[i - 1, r] += a
                C[i - 1, self.self_row[i]] -= a
        self.C = C

        self.records: list = [None] * R
        self.S_snap = np.zeros((R, n_v, n_v))
        self.bank = HeldBank(R, n_v, h)
        self.net_events: list = []
        self.pair_samples = {p: 0 for p in self.pairs}

        self.hist = [
            InputHistory(max(p.D_true, c.D_hat) + 2 * h, h)
            for p, c in zip(sc.plants, sc.controllers)
        ]
        self.filtered = sc.filters is not None
        self.fstate = [FilterState(0.0) for _ in range(N)] if self.filtered else None
        self.sensor_ticks = [ticks(fp.calT, h) for fp in sc.filters] if self.filtered else None
        self.sensor_events: list = []
        self.sensor_samples = {i: 0 for i in range(1, N + 1)} if self.filtered else {}
        self.diag = sc.diagnostics if (sc.diagnostics is not None and sc.diagnostics.enabled) else None
        if self.diag is not None and self.filtered:
            self.deriv_buf = [
                (deque(maxlen=t + 1), deque(maxlen=t + 1)) for t in self.sensor_ticks
            ]
        self.last_pred = [None] * N
        self.X_ctrl = [None] * N
        self.U_now = np.zeros(N)

    # ----------------------------------------------------------------- phase 1
    def _sender(self, j, v_true):
        if j == 0:
            return self.sc.exo.S, v_true
        return self.S_hat[j - 1], self.v_hat[j - 1]

    def _network(self, k, t, v_true):
        par = self.sc.observer
        for r, (i, j) in enumerate(self.pairs):
            if k % self.pair_ticks[r]:
                continue
            self.pair_samples[(i, j)] += 1
            S_send, v_send = self._sender(j, v_true)
            if k == 0:
                self._deliver(r, k, t, S_send, v_send)
                self.net_events.append(NetEvent(k, t, j, i, "init", 0.0, 0.0))
                continue
            dev_S = float(np.linalg.norm(S_send - self.S_snap[r]))
            dev_v = float(np.linalg.norm(v_send - self.bank.cur[r]))
            thr_S, thr_v = thresholds(par, t)
            if dev_S > thr_S:
                kind, dev, thr = "S", dev_S, thr_S
            elif dev_v > thr_v:
                kind, dev, thr = "v", dev_v, thr_v
            else:
                continue
            self._deliver(r, k, t, S_send, v_send)
            self.net_events.append(NetEvent(k, t, j, i, kind, dev, thr))

    def _deliver(self, r, k, t, S_send, v_send):
        rec = BroadcastRecord(t, np.array(S_send, dtype=float), np.array(v_send, dtype=float))
        self.records[r] = rec
        self.S_snap[r] = rec.S_snapshot
        self.bank.reset(r, rec, t)

    # ----------------------------------------------------------------- phase 2
    def _sensors(self, k, t):
        for a in range(self.N):
            if k % self.sensor_ticks[a]:
                continue
            fs = self.fstate[a]
            fp = self.sc.filters[a]
            phi = float(self.X[a][0] - self.bank.cur[self.self_row[a + 1]][0])
            if k == 0:
                fs.X_hat = phi
            dev = sensor_deviation(phi, fs)
            self.sensor_samples[a + 1] += 1
            if sample_and_trigger(fs, phi, fp, t):
                self.sensor_events.append(SensorEvent(k, t, a + 1, phi, dev, fp.threshold(t)))

    # ----------------------------------------------------------------- phase 3
    def _controllers(self, t):
        for a in range(self.N):
            p, cfg = self.sc.plants[a], self.sc.controllers[a]
            S_hat, v_hat = self.S_hat[a], self.v_hat[a]
            if self.filtered:
                X_ctrl = np.array([self.fstate[a].X_hat])
            else:
                X_ctrl = self.X[a] - reference_states(v_hat, S_hat, p.order)
            try:
                pred = predict(X_ctrl, v_hat, S_hat, self.hist[a], cfg, p.f, t, hold_until=t)
                U = control(pred.chi, v_hat, S_hat, cfg, p.f, R_end=pred.R_end)
            except PetcorError as exc:
                raise SimulationFault(str(exc), t, a + 1) from exc
            if not math.isfinite(U):
                raise SimulationFault("control output is not finite", t, a + 1)
            self.hist[a].append(t, U)
            self.U_now[a] = U
            self.last_pred[a] = pred
            self.X_ctrl[a] = X_ctrl

    # ----------------------------------------------------------------- phase 4
    def _integrate(self, t):
        sc, h = self.sc, self.h
        par = sc.observer
        held = self.bank.stages()
        dS = par.kappa1 * np.einsum("ir,rab->iab", self.C, self.S_snap)
        offs = (0.0, 0.5 * h, h)
        u_del = [self._delayed(a, t, p.D_true) for a, p in enumerate(sc.plants)]
        if self.filtered:
            u_del_hat = [self._delayed(a, t, c.D_hat) for a, c in enumerate(sc.controllers)]

        def rhs(stage, S_hat, v_hat, X, Xf):
            s = offs[stage]
            dv = np.einsum("iab,ib->ia", S_hat, v_hat) + par.kappa2 * (self.C @ held[stage])
            dX = [plant_rhs(p, X[a], u_del[a][stage], t + s) for a, p in enumerate(sc.plants)]
            dXf = None
            if self.filtered:
                dXf = [
                    filter_rhs(self.fstate[a], v_hat[a], S_hat[a], u_del_hat[a][stage],
                               sc.filters[a], sc.plants[a].f, X_hat=Xf[a])
                    for a in range(self.N)
                ]
            return dv, dX, dXf

        S0, v0, X0 = self.S_hat, self.v_hat, self.X
        Xf0 = [fs.X_hat for fs in self.fstate] if self.filtered else None

        def shift(dt, kv, kX, kf):
            X = [X0[a] + dt * kX[a] for a in range(self.N)]
            Xf = [Xf0[a] + dt * kf[a] for a in range(self.N)] if self.filtered else None
            return S0 + dt * dS, v0 + dt * kv, X, Xf

        k1 = rhs(0, S0, v0, X0, Xf0)
        if self.diag is not None and self.filtered:
            self._store_derivatives(t, k1)
        k2 = rhs(1, *shift(0.5 * h, *k1))
        k3 = rhs(1, *shift(0.5 * h, *k2))
        k4 = rhs(2, *shift(h, *k3))

        w = h / 6.0
        self.S_hat = S0 + h * dS
        self.v_hat = v0 + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        self.X = [
            X0[a] + w * (k1[1][a] + 2 * k2[1][a] + 2 * k3[1][a] + k4[1][a]) for a in range(self.N)
        ]
        if self.filtered:
            for a, fs in enumerate(self.fstate):
                fs.X_hat = Xf0[a] + w * (k1[2][a] + 2 * k2[2][a] + 2 * k3[2][a] + k4[2][a])
        self.bank.advance(held[2])

        if not (np.all(np.isfinite(self.v_hat)) and np.all(np.isfinite(self.S_hat))):
            bad = int(np.nonzero(~np.isfinite(self.v_hat).all(axis=1))[0][0]) + 1 \
                if not np.all(np.isfinite(self.v_hat)) else None
            raise SimulationFault("observer state diverged", t + h, bad)
        for a in range(self.N):
            if not np.all(np.isfinite(self.X[a])):
                raise SimulationFault("plant state diverged", t + h, a + 1)

    def _delayed(self, a, t, D):
        # the end stage takes the left limit so a step ending at the start-up
        # jump of U integrates the zero pre-initial input only
        h, hist = self.h, self.hist[a]
        u = hist.lookup(np.array([t - D, t + 0.5 * h - D]))
        return (u[0], u[1], hist.lookup(np.array([t + h - D]), left=True)[0])

    def _store_derivatives(self, t, k1):
        # true shifted-state derivative minus the filter derivative
        FSv = float(self.sc.exo.S[0] @ self.v_true)
        for a in range(self.N):
            dXbar = float(k1[1][a][0]) - FSv
            dXh = float(k1[2][a])
            bt, bh = self.deriv_buf[a]
            bt.append(dXbar - dXh)
            bh.append(dXh)

    # ----------------------------------------------------------------- driver
    def run(self) -> SimTrace:
        sc = self.sc
        K = sc.n_steps
        N, n_v = self.N, self.n_v
        nmax = max(p.order for p in sc.plants)
        tr = SimTrace(
            t=np.arange(K + 1) * sc.h,
            v=np.empty((K + 1, n_v)),
            y0=np.empty(K + 1),
            X=np.full((K + 1, N, nmax), np.nan),
            X_hat=np.full((K + 1, N, nmax), np.nan),
            U=np.empty((K + 1, N)),
            e=np.empty((K + 1, N)),
            v_hat=np.empty((K + 1, N, n_v)),
            S_hat=np.empty((K + 1, N, n_v * n_v)),
            phi=np.empty((K + 1, N)),
            orders=[p.order for p in sc.plants],
            h=sc.h,
            name=sc.name,
        )
        if self.diag is not None:
            tr.V = np.full((K + 1, N), np.nan)
            tr.V_terms = np.full((K + 1, N, 4), np.nan)
            tr.w_end = np.full((K + 1, N), np.nan)
            if self.filtered:
                tr.calV = np.full((K + 1, N), np.nan)

        E_h = expm(sc.exo.S, sc.h)
        v_true = sc.exo.v0.copy()
        for k in range(K + 1):
            t = k * sc.h
            if k % LEADER_RESYNC == 0:
                v_true, _ = leader_state(sc.exo, t)
            elif k:
                v_true = E_h @ v_true
            y0 = float(v_true[0])
            self.v_true = v_true
            self._network(k, t, v_true)
            if self.filtered:
                self._sensors(k, t)
            self._controllers(t)
            self._record(tr, k, v_true, y0)
            if self.diag is not None and k % self.diag.stride == 0:
                self._diagnose(tr, k, t, v_true, y0)
            if k < K:
                self._integrate(t)

        tr.net_events = self.net_events
        tr.sensor_events = self.sensor_events
        tr.pair_samples = dict(self.pair_samples)
        tr.pair_periods = {p: sc.graph.periods[p] for p in self.pairs}
        tr.sensor_samples = dict(self.sensor_samples)
        if self.filtered:
            tr.sensor_periods = {a + 1: fp.calT for a, fp in enumerate(sc.filters)}
        logger.info("%s: %d steps, %d network events, %d sensor events",
                    sc.name, K, len(tr.net_events), len(tr.sensor_events))
        return tr

    def _record(self, tr, k, v_true, y0):
        tr.v[k] = v_true
        tr.y0[k] = y0
        for a in range(self.N):
            n = self.sc.plants[a].order
            tr.X[k, a, :n] = self.X[a]
            tr.X_hat[k, a, :n] = self.X_ctrl[a]
            tr.e[k, a] = self.X[a][0] - y0
            tr.phi[k, a] = self.X[a][0] - self.bank.cur[self.self_row[a + 1]][0]
        tr.U[k] = self.U_now
        tr.v_hat[k] = self.v_hat
        tr.S_hat[k] = self.S_hat.reshape(self.N, -1)

    def _diagnose(self, tr, k, t, v_true, y0):
        sc = self.sc
        for a in range(self.N):
            p, cfg = sc.plants[a], sc.controllers[a]
            pred = self.last_pred[a]
            try:
                snap = backstepping_snapshot(pred, self.hist[a], v_true, sc.exo.S, p.D_true, cfg, p.f, t)
            except PetcorError:
                # true-delay window not yet covered by a longer assumed delay
                continue
            tr.w_end[k, a] = float(snap.w_hat[-1])
            X_bar = self.X[a] - reference_states(v_true, sc.exo.S, p.order)
            lv = lyapunov_V(snap, X_bar, p.D_true, cfg.D_hat, self.diag.lambdas_V)
            tr.V[k, a] = lv.total
            tr.V_terms[k, a] = lv.terms
            if self.filtered:
                bt, bh = self.deriv_buf[a]
                if len(bt) == bt.maxlen:
                    X_hat = self.fstate[a].X_hat
                    lc = lyapunov_calV(X_bar[0] - X_hat, X_hat, snap, cfg.D_hat, bt, bh,
                                       sc.h, sc.filters[a].calT, self.diag.lambdas_calV)
                    tr.calV[k, a] = lc.total


def run(scenario: Scenario) -> SimTrace:
    """Simulate ``scenario`` from ``t = 0`` to ``t_end``."""
    return Simulator(scenario).run()
