"""Command line entry point: ``petcor run | bound | presets list``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
import warnings

import numpy as np

from .config import preset_names, preset_summary, read_config
from .diagnostics import DiagnosticsConfig, trigger_stats
from .engine import run
from .errors import PetcorError
from .report import emit_outputs
from .topology import kappa_T, max_sampling_bound

logger = logging.getLogger("petcor")


def _cmd_run(args):
    cfg = read_config(args.config)
    sc = cfg.scenario
    if args.diagnostics:
        diag = sc.diagnostics if sc.diagnostics is not None else DiagnosticsConfig()
        sc = dataclasses.replace(sc, diagnostics=dataclasses.replace(diag, enabled=True))
    out_dir = args.out or cfg.output.dir or f"out/{sc.name}"
    t0 = time.perf_counter()
    trace = run(sc)
    wall = time.perf_counter() - t0
    paths = emit_outputs(trace, out_dir, plots=args.plots or cfg.output.plots)

    st = trigger_stats(trace)
    tail = trace.t >= 0.8 * trace.t[-1]
    print(f"scenario      {sc.name}")
    print(f"steps         {sc.n_steps} (h = {sc.h:g} s, wall {wall:.1f} s)")
    print(f"net events    {st.events} / {st.samples} samples (ratio {st.ratio:.4f})")
    if trace.sensor_events or st.sensor_samples:
        print(f"sensor events {st.sensor_events} / {st.sensor_samples} samples (ratio {st.sensor_ratio:.4f})")
    print(f"max |e| over last 20% of the run   {np.abs(trace.e[tail]).max():.3e}")
    print(f"max observer error, same window    {trace.observer_error()[tail].max():.3e}")
    print(f"outputs       {', '.join(str(p) for p in paths)}")
    return 0


def _cmd_bound(args):
    sc = read_config(args.config).scenario
    b = max_sampling_bound(sc.graph, sc.exo.n_v)
    kt = kappa_T(sc.graph, sc.observer.kappa1, sc.observer.kappa2)
    print(f"M1      = {b.M1:.6e}")
    print(f"M2      = {b.M2:.6e}")
    print(f"M3      = {b.M3:.6e}")
    print(f"M       = {b.M:.6e}")
    print(f"kappa*T = {kt:.6e}")
    if kt <= b.M:
        print("verdict: pass (kappa*T <= M, convergence guaranteed by the sufficient condition)")
    else:
        print("verdict: warn (kappa*T > M, the sufficient condition does not certify convergence)")
    return 0


def _cmd_presets(args):
    for name in preset_names():
        print(f"{name:20s} {preset_summary(name)}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="petcor",
        description="Periodic event-triggered cooperative output regulation simulator.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario file or preset")
    r.add_argument("config", help="TOML scenario file or preset name")
    r.add_argument("--out", help="output directory (default: out/<scenario name>)")
    r.add_argument("--diagnostics", action="store_true", help="enable Lyapunov monitors")
    r.add_argument("--plots", action="store_true", help="also write SVG figures")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("bound", help="print the observer sampling bound and the kappa*T check")
    b.add_argument("config", help="TOML scenario file or preset name")
    b.set_defaults(func=_cmd_bound)

    ps = sub.add_parser("presets", help="bundled scenarios")
    ps.add_argument("action", choices=["list"])
    ps.set_defaults(func=_cmd_presets)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", UserWarning)
    try:
        return args.func(args)
    except PetcorError as exc:
        print(f"petcor: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
