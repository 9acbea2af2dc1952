"""Sensor-to-controller periodic event-triggered filter.

The sensor samples ``phi = Y - F * held_self_estimate`` every ``calT``
seconds and forwards it only when it has moved by more than
``delta_phi * exp(-gamma_phi * tau)`` since the last forwarded value. The
controller side runs a filter that turns the sparse measurements back into
a continuous estimate ``X_hat`` of the shifted state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ContractViolation, SchedulingFault
from .observer import held_estimate, on_grid


@dataclass(frozen=True)
class FilterParams:
    L: float
    calT: float
    delta_phi: float
    gamma_phi: float

    def __post_init__(self):
        if not self.calT > 0:
            raise ContractViolation("filter sampling period must be positive")
        if not (self.delta_phi > 0 and self.gamma_phi > 0):
            raise ContractViolation("delta_phi and gamma_phi must be positive")

    def threshold(self, tau):
        return self.delta_phi * math.exp(-self.gamma_phi * tau)


@dataclass
class FilterState:
    """Filter state plus its two holds.

    ``X_hat_at_sample`` refreshes at every sampling instant; ``last_event_phi``
    only when the sensor trigger fires.
    """

    X_hat: float
    last_sample_t: float = 0.0
    X_hat_at_sample: float = 0.0
    last_event_phi: float = 0.0
    last_event_t: float = -math.inf


def measure_phi(Y, self_record, t, held=None):
    """``phi = Y - F * held_estimate(self_record, t)``."""
    if held is None:
        held = held_estimate(self_record, t)
    return float(Y - held[0])


def filter_rhs(fs, v_hat, S_hat, u_delayed_hat, params, f, X_hat=None):
    """Filter derivative ``f_bar(X_hat, v_hat) + u_hat(0, t) - L (phi_hold - X_hat_hold)``.

    ``u_delayed_hat`` is the history value at ``t - D_hat``; the residual at
    ``v_hat`` is subtracted here. ``X_hat`` overrides ``fs.X_hat`` (for
    Runge-Kutta stages).
    """
    x = fs.X_hat if X_hat is None else X_hat
    ref = float(v_hat[0])
    fb = f.scalar(x + ref) - f.scalar(ref)
    # residual F S v - f(F v) for a first-order plant
    u0 = u_delayed_hat - (float(S_hat[0] @ v_hat) - f.scalar(ref))
    return fb + u0 - params.L * (fs.last_event_phi - fs.X_hat_at_sample)


def sensor_deviation(phi_now, fs):
    return abs(phi_now - fs.last_event_phi)


def trigger_check_sensor(phi_now, fs, params, tau):
    """True when the sensor must forward ``phi_now`` at ``tau``.

    The first sampling instant always fires so that the holds are defined.
    The caller refreshes the holds.
    """
    if not on_grid(tau, params.calT):
        raise SchedulingFault(f"tau={tau} is not a multiple of the sensor period {params.calT}")
    if not math.isfinite(fs.last_event_t):
        return True
    if tau <= fs.last_event_t:
        raise SchedulingFault("sensor sample does not follow the last event")
    return sensor_deviation(phi_now, fs) > params.threshold(tau)


def sample_and_trigger(fs, phi_now, params, tau):
    """Run one sensor sampling instant: trigger check, event hold refresh and
    the unconditional ``X_hat`` sample hold. Returns whether an event fired."""
    fired = trigger_check_sensor(phi_now, fs, params, tau)
    if fired:
        fs.last_event_phi = phi_now
        fs.last_event_t = tau
    fs.last_sample_t = tau
    fs.X_hat_at_sample = fs.X_hat
    return fired
