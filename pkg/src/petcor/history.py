"""Time-stamped control history backing both the physical input delay and
the prediction integral."""
from __future__ import annotations

import numpy as np

from .errors import ContractViolation, HistoryFault


class InputHistory:
    """Ring buffer of applied controls ``(t, U)``.

    Values for ``t < 0`` are zero (the loop is at rest before start).
    Between samples the history is interpolated linearly. Samples older than
    ``window`` seconds before the newest one are discarded.

    The buffer stores twice its capacity and compacts when full, so the live
    span is always a contiguous slice that ``np.interp`` can consume.
    """

    def __init__(self, window, step):
        if window <= 0 or step <= 0:
            raise ContractViolation("window and step must be positive")
        self.window = float(window)
        self._cap = int(np.ceil(window / step)) + 4
        self._t = np.empty(2 * self._cap)
        self._u = np.empty(2 * self._cap)
        self._lo = 0
        self._hi = 0

    def __len__(self):
        return self._hi - self._lo

    @property
    def times(self):
        return self._t[self._lo:self._hi]

    @property
    def values(self):
        return self._u[self._lo:self._hi]

    @property
    def t_last(self):
        return self._t[self._hi - 1] if self._hi > self._lo else None

    def append(self, t, u):
        if self._hi > self._lo and t <= self._t[self._hi - 1]:
            raise ContractViolation("history timestamps must strictly increase")
        if self._hi == len(self._t):
            keep = self._hi - self._lo
            self._t[:keep] = self._t[self._lo:self._hi]
            self._u[:keep] = self._u[self._lo:self._hi]
            self._lo, self._hi = 0, keep
        self._t[self._hi] = t
        self._u[self._hi] = u
        self._hi += 1
        # drop samples that no query can reach any more
        while self._hi - self._lo > 2 and self._t[self._lo + 1] < t - self.window:
            self._lo += 1

    def value(self, t, hold_until=None):
        return float(self.lookup(np.array([t], dtype=float), hold_until)[0])

    def lookup(self, times, hold_until=None, left=False):
        """Interpolated controls at ``times``.

        ``hold_until`` lets a caller that is about to append the sample at
        that time read the newest value held constant up to it. ``left=True``
        returns the left limit at ``t = 0``, where the input jumps from the
        zero pre-initial value.
        """
        times = np.asarray(times, dtype=float)
        if self._hi == self._lo:
            # only the zero pre-initial input exists so far
            limit = 0.0 if hold_until is None else hold_until
            if np.any(times > limit + 1e-12) or (hold_until is None and np.any(times >= 0)):
                raise HistoryFault("history is empty")
            return np.zeros_like(times)
        ts = self._t[self._lo:self._hi]
        us = self._u[self._lo:self._hi]
        t_first, t_last = ts[0], ts[-1]
        limit = t_last if hold_until is None else max(t_last, hold_until)
        t_max = times.max()
        if t_max > limit + 1e-12:
            raise HistoryFault(f"query at t={t_max:.6f} is past the newest sample {t_last:.6f}")
        t_min = times.min()
        if t_first > 0 and t_min >= 0 and t_min < t_first - 1e-12:
            raise HistoryFault(f"query at t={t_min:.6f} is older than the retained window")
        out = np.interp(times, ts, us)
        if t_min < 0:
            if t_first > 0 and np.any((times >= 0) & (times < t_first - 1e-12)):
                raise HistoryFault("query is older than the retained window")
            out[times < 0] = 0.0
        if left:
            out[times <= 0] = 0.0
        return out
