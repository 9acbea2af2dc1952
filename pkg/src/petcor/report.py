"""Trace persistence (CSV) and static figures.

Floats are written with 17 significant digits so that reading a file back
returns the in-memory values bit for bit.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .errors import ContractViolation

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"

NET_HEADER = ["t_event", "sender", "receiver", "kind", "deviation_norm", "threshold"]
SENSOR_HEADER = ["t_event", "agent", "phi_value", "deviation", "threshold"]


def trace_columns(trace):
    """Ordered ``(name, 1-D array)`` pairs for ``trace.csv``."""
    cols = [("t", trace.t)]
    n_v = trace.v_hat.shape[2]
    for a, n in enumerate(trace.orders):
        i = a + 1
        cols += [(f"X{i}_{k + 1}", trace.X[:, a, k]) for k in range(n)]
        cols += [(f"X_hat{i}_{k + 1}", trace.X_hat[:, a, k]) for k in range(n)]
        cols.append((f"U{i}", trace.U[:, a]))
        cols.append((f"e{i}", trace.e[:, a]))
        cols += [(f"v_hat{i}_{k + 1}", trace.v_hat[:, a, k]) for k in range(n_v)]
        cols.append((f"phi{i}", trace.phi[:, a]))
    if trace.V is not None:
        for a in range(trace.N):
            cols.append((f"V{a + 1}", trace.V[:, a]))
            cols.append((f"w_end{a + 1}", trace.w_end[:, a]))
    if trace.calV is not None:
        cols += [(f"calV{a + 1}", trace.calV[:, a]) for a in range(trace.N)]
    return cols


def _fmt(x):
    return FLOAT_FMT % x


def write_trace_csv(trace, path):
    cols = trace_columns(trace)
    data = np.column_stack([c for _, c in cols])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name for name, _ in cols])
        for row in data:
            w.writerow([_fmt(x) for x in row])


def read_trace_csv(path):
    """Columns of a ``trace.csv`` as a dict of float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractViolation(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_events_csv(trace, net_path, sensor_path):
    with open(net_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NET_HEADER)
        for e in trace.net_events:
            w.writerow([_fmt(e.t), e.sender, e.receiver, e.kind, _fmt(e.deviation), _fmt(e.threshold)])
    with open(sensor_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SENSOR_HEADER)
        for e in trace.sensor_events:
            w.writerow([_fmt(e.t), e.agent, _fmt(e.phi), _fmt(e.deviation), _fmt(e.threshold)])


def plot_outputs(trace, path):
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    ax.plot(trace.t, trace.y0, "k--", lw=1.5, label="leader $y_0$")
    for a in range(trace.N):
        ax.plot(trace.t, trace.X[:, a, 0], lw=1, label=f"follower {a + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("output")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)


def plot_events(trace, path):
    pairs = sorted({(e.receiver, e.sender) for e in trace.net_events})
    rows = [f"{j}->{i}" for i, j in pairs]
    agents = sorted({e.agent for e in trace.sensor_events})
    fig = Figure(figsize=(7, 0.4 * (len(rows) + len(agents)) + 1.5))
    ax = fig.add_subplot()
    for k, (i, j) in enumerate(pairs):
        ts = [e.t for e in trace.net_events if (e.receiver, e.sender) == (i, j)]
        ax.plot(ts, np.full(len(ts), k), "|", color="C0", ms=8)
    for k, a in enumerate(agents):
        ts = [e.t for e in trace.sensor_events if e.agent == a]
        ax.plot(ts, np.full(len(ts), len(rows) + k), "|", color="C3", ms=8)
    ax.set_yticks(range(len(rows) + len(agents)))
    ax.set_yticklabels(rows + [f"sensor {a}" for a in agents])
    ax.set_xlim(trace.t[0], max(trace.t[-1], trace.t[0] + trace.h))
    ax.set_xlabel("t [s]")
    ax.set_title("transmission instants")
    fig.tight_layout()
    fig.savefig(path)


def plot_errors(trace, path):
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    floor = 1e-12
    ax.semilogy(trace.t, trace.observer_error().max(axis=1) + floor, "k", lw=1.2,
                label=r"max$_i\,\|\hat v_i - v\|$")
    for a in range(trace.N):
        ax.semilogy(trace.t, np.abs(trace.e[:, a]) + floor, lw=0.8, label=f"$|e_{a + 1}|$")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("error")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path)


def emit_outputs(trace, out_dir, plots=False):
    """Write ``trace.csv``, the two event logs and optionally SVG figures.

    Returns the list of written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "trace.csv", out / "events_net.csv", out / "events_sensor.csv"]
        write_trace_csv(trace, written[0])
        write_events_csv(trace, written[1], written[2])
        if plots:
            for name, fn in (("outputs.svg", plot_outputs), ("events.svg", plot_events),
                             ("errors.svg", plot_errors)):
                fn(trace, out / name)
                written.append(out / name)
    except OSError as exc:
        raise ContractViolation(f"cannot write outputs to {out}: {exc.strerror or exc}") from exc
    logger.info("wrote %d files to %s", len(written), out)
    return written
