"""TOML scenario files: schema, validation and conversion to :class:`Scenario`.

Numbers are parsed as :class:`decimal.Decimal` so that "does ``h`` divide
this period" is answered exactly; everything is converted to float only
after that check. Per-follower settings come from ``[agent_defaults]``
overlaid by each ``[[agents]]`` entry.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import tomli

from .diagnostics import DiagnosticsConfig
from .engine import Scenario
from .errors import ConfigError, PetcorError
from .exosys import Exosystem
from .observer import ObserverParams
from .petfilter import FilterParams
from .plant import FollowerPlant, make_disturbance, make_nonlinearity
from .predictor import ControllerConfig
from .topology import CommGraph

logger = logging.getLogger(__name__)

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}

_AGENT_PROPS = {
    "plant": {"type": "string"},
    "plant_params": {"type": "object"},
    "disturbance": {"type": "string"},
    "channel_amps": _VEC,
    "ell": {"type": "number", "minimum": 0},
    "D_true": _POS,
    "D_hat": _POS,
    "K": {"oneOf": [_NUM, _VEC]},
    "Nx": {"type": "integer", "minimum": 1},
    "X0": {"oneOf": [_NUM, _VEC]},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["run", "exosystem", "graph", "observer", "agents"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "run": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_end"],
            "properties": {"t_end": {"type": "number", "minimum": 0}, "h": _POS},
        },
        "exosystem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["S", "v0"],
            "properties": {
                "S": {"type": "array", "items": _VEC, "minItems": 1},
                "v0": _VEC,
            },
        },
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["N", "edges", "self_periods"],
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "edges": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["sender", "receiver", "period"],
                        "properties": {
                            "sender": {"type": "integer", "minimum": 0},
                            "receiver": {"type": "integer", "minimum": 1},
                            "weight": _POS,
                            "period": _POS,
                        },
                    },
                },
                "self_periods": {"type": "array", "items": _POS, "minItems": 1},
            },
        },
        "observer": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kappa1", "kappa2", "delta_S", "delta_v", "gamma_S", "gamma_v"],
            "properties": {k: _POS for k in
                           ("kappa1", "kappa2", "delta_S", "delta_v", "gamma_S", "gamma_v")},
        },
        "agent_defaults": {
            "type": "object", "additionalProperties": False, "properties": _AGENT_PROPS,
        },
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "additionalProperties": False, "properties": _AGENT_PROPS},
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "required": ["L", "calT", "delta_phi", "gamma_phi"],
            "properties": {"L": _NUM, "calT": _POS, "delta_phi": _POS, "gamma_phi": _POS},
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "stride": {"type": "integer", "minimum": 1},
                "lambdas_V": {"type": "array", "items": _POS, "minItems": 4, "maxItems": 4},
                "lambdas_calV": {"type": "array", "items": _POS, "minItems": 5, "maxItems": 5},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "plots": {"type": "boolean"}},
        },
    },
}

_REQUIRED_AGENT = ("plant", "D_true", "D_hat", "K", "X0")
DEFAULT_H = Decimal("0.001")


@dataclass
class OutputSettings:
    dir: Optional[str] = None
    plots: bool = False


@dataclass
class ScenarioConfig:
    """A loaded file: the runnable scenario plus output preferences."""

    scenario: Scenario
    output: OutputSettings = field(default_factory=OutputSettings)
    source: Optional[str] = None


def _path(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _floats(x):
    if isinstance(x, list):
        return [_floats(v) for v in x]
    if isinstance(x, dict):
        return {k: _floats(v) for k, v in x.items()}
    if isinstance(x, Decimal):
        return float(x)
    return x


def _check_divides(period, h, where):
    q = period / h
    if q != q.to_integral_value():
        raise ConfigError(f"master step h={h} does not divide the period {period}", where)
    if period < 2 * h:
        raise ConfigError(f"h={h} must be at most half the period {period}", where)


def parse_config(text, source=None):
    """Validate TOML ``text`` and build a :class:`ScenarioConfig`."""
    if not text.strip():
        raise ConfigError("parse error: the configuration file is empty", source)
    try:
        raw = tomli.loads(text, parse_float=Decimal)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", source) from exc

    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _path(err.absolute_path))

    h = raw["run"].get("h", DEFAULT_H)
    h = Decimal(str(h)) if not isinstance(h, Decimal) else h
    t_end = Decimal(str(raw["run"]["t_end"]))
    if t_end / h != (t_end / h).to_integral_value():
        raise ConfigError(f"t_end={t_end} is not a multiple of h={h}", "run.t_end")

    graph_raw = raw["graph"]
    N = graph_raw["N"]
    if len(graph_raw["self_periods"]) != N:
        raise ConfigError(f"need {N} self periods, got {len(graph_raw['self_periods'])}", "graph.self_periods")
    for i, T in enumerate(graph_raw["self_periods"]):
        _check_divides(Decimal(str(T)), h, f"graph.self_periods[{i}]")
    edges = []
    for e_idx, e in enumerate(graph_raw["edges"]):
        where = f"graph.edges[{e_idx}]"
        if e["receiver"] > N or e["sender"] > N:
            raise ConfigError(f"node index out of range 0..{N}", where)
        if e["receiver"] == e["sender"]:
            raise ConfigError("self-loops are given by self_periods", where)
        _check_divides(Decimal(str(e["period"])), h, where + ".period")
        edges.append((e["sender"], e["receiver"], float(e.get("weight", 1)), float(e["period"])))

    agents = raw["agents"]
    if len(agents) != N:
        raise ConfigError(f"need {N} [[agents]] entries, got {len(agents)}", "agents")
    defaults = raw.get("agent_defaults", {})

    try:
        exo = Exosystem(_floats(raw["exosystem"]["S"]), _floats(raw["exosystem"]["v0"]))
    except PetcorError as exc:
        raise ConfigError(str(exc), "exosystem") from exc
    try:
        graph = CommGraph.from_edges(
            N, edges, {i + 1: float(T) for i, T in enumerate(graph_raw["self_periods"])}
        )
    except PetcorError as exc:
        raise ConfigError(str(exc), "graph") from exc

    plants, controllers = [], []
    for idx, entry in enumerate(agents):
        merged = _floats({**defaults, **entry})
        where = f"agents[{idx}]"
        for key in _REQUIRED_AGENT:
            if key not in merged:
                raise ConfigError(f"missing {key!r} (set it here or in [agent_defaults])", where)
        try:
            f = make_nonlinearity(merged["plant"], **merged.get("plant_params", {}))
        except (PetcorError, TypeError) as exc:
            raise ConfigError(str(exc), where + ".plant") from exc
        try:
            plant = FollowerPlant(
                f, merged["D_true"], merged["X0"] if isinstance(merged["X0"], list) else [merged["X0"]],
                disturbance=make_disturbance(merged.get("disturbance")),
                channel_amps=merged.get("channel_amps"),
                ell=merged.get("ell"),
            )
        except PetcorError as exc:
            raise ConfigError(str(exc), where) from exc
        try:
            ctrl = ControllerConfig(merged["K"], merged["D_hat"], merged.get("Nx", 20), ell=plant.ell)
        except ConfigError as exc:
            raise ConfigError(exc.message, f"{where}.{exc.path.split('.')[-1]}") from exc
        plants.append(plant)
        controllers.append(ctrl)

    observer = ObserverParams(**_floats(raw["observer"]))

    filters = None
    if "filter" in raw:
        fr = raw["filter"]
        _check_divides(Decimal(str(fr["calT"])), h, "filter.calT")
        fr = _floats(fr)
        filters = [FilterParams(fr["L"], fr["calT"], fr["delta_phi"], fr["gamma_phi"]) for _ in range(N)]

    d = _floats(raw.get("diagnostics", {}))
    diagnostics = DiagnosticsConfig(
        enabled=d.get("enabled", False),
        stride=d.get("stride", 10),
        lambdas_V=tuple(d.get("lambdas_V", (1.0, 0.1, 0.1, 0.1))),
        lambdas_calV=tuple(d.get("lambdas_calV", (1.0, 0.1, 0.1, 0.1, 0.1))),
    )

    try:
        scenario = Scenario(
            exo=exo, graph=graph, plants=plants, controllers=controllers, observer=observer,
            t_end=float(t_end), h=float(h), filters=filters, diagnostics=diagnostics,
            name=raw.get("name", Path(source).stem if source else "scenario"),
        )
    except PetcorError as exc:
        raise ConfigError(str(exc), source) from exc
    out = raw.get("output", {})
    return ScenarioConfig(scenario, OutputSettings(out.get("dir"), out.get("plots", False)), source)


def read_config(path):
    """Load a scenario file or, if ``path`` is not a file, a bundled preset."""
    p = Path(path)
    if not p.is_file() and str(path) in preset_names():
        return parse_config(preset_text(str(path)), source=str(path))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", str(path)) from exc
    return parse_config(text, source=str(path))


def load_config(path) -> Scenario:
    """Validated :class:`Scenario` from a TOML file or preset name."""
    return read_config(path).scenario


def _preset_dir():
    return resources.files("petcor") / "presets"


def preset_names():
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".toml"))


def preset_text(name):
    res = _preset_dir() / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text(encoding="utf-8")


def preset_summary(name):
    raw = tomli.loads(preset_text(name))
    return raw.get("description", "")
