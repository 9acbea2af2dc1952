"""Runtime analysis quantities: backstepping variables, Lyapunov monitors,
trigger statistics and exponential decay fits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, HistoryFault
from .predictor import propagate_grid, residual_R

LOG_FLOOR = 1e-12


def trapezoid(y, dx):
    y = np.asarray(y, dtype=float)
    return float(dx * (y.sum() - 0.5 * (y[0] + y[-1])))


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Which monitors run and how often.

    The weights are monitoring choices, not proof constants.
    """

    enabled: bool = True
    stride: int = 10
    lambdas_V: tuple = (1.0, 0.1, 0.1, 0.1)
    lambdas_calV: tuple = (1.0, 0.1, 0.1, 0.1, 0.1)

    def __post_init__(self):
        if self.stride < 1:
            raise ContractViolation("diagnostics stride must be >= 1")
        if len(self.lambdas_V) != 4 or len(self.lambdas_calV) != 5:
            raise ContractViolation("need 4 weights for V and 5 for the Krasovskii functional")
        if any(l <= 0 for l in self.lambdas_V + self.lambdas_calV):
            raise ContractViolation("Lyapunov weights must be positive")


@dataclass
class BacksteppingSnapshot:
    x: np.ndarray
    u_hat: np.ndarray
    u_check: np.ndarray
    u_bar: np.ndarray
    u_tilde: np.ndarray
    chi: np.ndarray
    w_hat: np.ndarray
    w_hat_x: np.ndarray
    theta: np.ndarray


def backstepping_snapshot(pred, hist, v_true, S_true, D_true, cfg, f, t):
    """Backstepping variables on the prediction grid at time ``t``.

    Meant to be called after ``U(t)`` has been appended to ``hist``: the
    controller's grid ``u_hat`` is re-read from the history so that its
    endpoint is the control actually applied at ``t``. ``u_bar`` uses the
    true leader matrix, state and delay, which only the simulator knows.
    Neither reads the history beyond ``t``.
    """
    x = pred.x
    times = t + (x - 1.0) * D_true
    if times.max() > t + 1e-12:
        raise HistoryFault("u_bar would need future inputs")
    u_check = hist.lookup(t + (x - 1.0) * cfg.D_hat)
    u_hat = u_check - (pred.u_check - pred.u_hat)
    W = propagate_grid(np.asarray(S_true, dtype=float), np.asarray(v_true, dtype=float), D_true, x.size)
    u_bar = hist.lookup(times) - residual_R(W, S_true, f)
    u_tilde = u_bar - u_hat
    chi = pred.chi
    w_hat = u_hat - chi @ cfg.K
    w_hat_x = np.gradient(w_hat, x)
    if f.order == 1:
        slope = cfg.D_hat * np.asarray(f.deriv(chi[:, 0] + pred.w[:, 0]), dtype=float)
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (slope[1:] + slope[:-1]) * np.diff(x))])
        theta = np.exp(integral)
    else:
        theta = np.full(x.size, np.nan)
    return BacksteppingSnapshot(
        x=x, u_hat=u_hat, u_check=u_check, u_bar=u_bar, u_tilde=u_tilde,
        chi=chi, w_hat=w_hat, w_hat_x=w_hat_x, theta=theta,
    )


@dataclass
class LyapunovSample:
    terms: np.ndarray
    weights: tuple
    total: float = field(init=False)

    def __post_init__(self):
        self.total = float(np.dot(self.weights, self.terms))


def _weighted_sq(x, y, scale):
    dx = x[1] - x[0]
    return 0.5 * scale * trapezoid((1.0 + x) * y * y, dx)


def lyapunov_V(snap, X_bar, D_true, D_hat, lambdas=(1.0, 0.1, 0.1, 0.1)):
    """Lyapunov function of the predictor loop with its four terms."""
    X_bar = np.atleast_1d(np.asarray(X_bar, dtype=float))
    x = snap.x
    terms = np.array([
        0.5 * float(X_bar @ X_bar),
        _weighted_sq(x, snap.u_tilde, D_true),
        _weighted_sq(x, snap.w_hat, D_hat),
        _weighted_sq(x, snap.w_hat_x, D_hat),
    ])
    return LyapunovSample(terms, tuple(lambdas))


def double_tail_integral(g, h):
    """``int_{t-T}^{t} int_s^t g(theta) dtheta ds`` for samples of ``g`` on the
    uniform grid ``t - T, ..., t`` with spacing ``h``."""
    g = np.asarray(g, dtype=float)
    if g.size < 2:
        raise HistoryFault("need at least two derivative samples")
    seg = 0.5 * h * (g[1:] + g[:-1])
    inner = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return trapezoid(inner, h)


def lyapunov_calV(X_tilde, X_hat, snap, D_hat, dX_tilde, dX_hat, h, calT,
                  lambdas=(1.0, 0.1, 0.1, 0.1, 0.1)):
    """Lyapunov-Krasovskii functional of the filtered loop.

    ``dX_tilde`` and ``dX_hat`` hold the derivative samples over the last
    ``calT`` seconds (oldest first, ``round(calT / h) + 1`` of them).
    """
    need = int(round(calT / h)) + 1
    if len(dX_tilde) < need or len(dX_hat) < need:
        raise HistoryFault(f"need {need} derivative samples, have {min(len(dX_tilde), len(dX_hat))}")
    gt = np.square(np.asarray(dX_tilde, dtype=float)[-need:])
    gh = np.square(np.asarray(dX_hat, dtype=float)[-need:])
    terms = np.array([
        0.5 * float(X_tilde) ** 2,
        0.5 * float(X_hat) ** 2,
        _weighted_sq(snap.x, snap.w_hat, D_hat),
        double_tail_integral(gt, h),
        double_tail_integral(gh, h),
    ])
    return LyapunovSample(terms, tuple(lambdas))


@dataclass
class TriggerStats:
    per_pair: dict
    events: int
    samples: int
    sensor_per_agent: dict
    sensor_events: int
    sensor_samples: int

    @property
    def ratio(self):
        return self.events / self.samples if self.samples else 0.0

    @property
    def sensor_ratio(self):
        return self.sensor_events / self.sensor_samples if self.sensor_samples else 0.0


def trigger_stats(trace):
    """Event counts against sampling instants, per pair and in aggregate.

    The transmission at ``t = 0`` that initialises every record counts as an
    event, and ``t = 0`` counts as a sampling instant.
    """
    per_pair = {}
    for pair, samples in trace.pair_samples.items():
        ev = sum(1 for e in trace.net_events if (e.receiver, e.sender) == pair)
        per_pair[pair] = (ev, samples, ev / samples if samples else 0.0)
    sensor = {}
    for agent, samples in trace.sensor_samples.items():
        ev = sum(1 for e in trace.sensor_events if e.agent == agent)
        sensor[agent] = (ev, samples, ev / samples if samples else 0.0)
    return TriggerStats(
        per_pair=per_pair,
        events=sum(v[0] for v in per_pair.values()),
        samples=sum(v[1] for v in per_pair.values()),
        sensor_per_agent=sensor,
        sensor_events=sum(v[0] for v in sensor.values()),
        sensor_samples=sum(v[1] for v in sensor.values()),
    )


def decay_fit(t, series, window):
    """Least-squares line through ``log(series + 1e-12)`` on ``window``.

    Returns ``(rate, offset)``; a negative rate means exponential decay.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    lo, hi = window
    mask = (t >= lo) & (t <= hi) & np.isfinite(y)
    if mask.sum() < 10:
        raise ContractViolation("decay_fit needs at least 10 samples in the window")
    if np.any(y[mask] < 0):
        raise ContractViolation("decay_fit needs a non-negative series")
    rate, offset = np.polyfit(t[mask], np.log(y[mask] + LOG_FLOOR), 1)
    return float(rate), float(offset)
