"""INI experiment configuration: schema, defaults and validation."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .detection import DetectorWindow
from .ensemble import CONSTRAINTS, EnsembleConfig
from .guidance import IntegratorSettings
from .wavepacket import PhysicalParams


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class MissingKey(ConfigError):
    pass


class BadValue(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


@dataclass(frozen=True)
class ToySettings:
    """Random discrete-spectrum systems for the time-average experiment."""

    n_systems: int = 10
    n_modes: int = 5
    min_gap: float = 0.05
    e_max: float = 2.0
    t_factor: float = 1e4
    samples_per_period: int = 16
    seed: int = 7


EXPERIMENTS = {
    # name: (allowed sections, default constraint)
    "equivariance": ({"params", "ensemble", "integrator"}, "equilibrium"),
    "coincidence": ({"params", "ensemble", "integrator", "windows"}, "equilibrium"),
    "constrained": ({"params", "ensemble", "integrator", "windows"}, "antidiagonal"),
    "ghose_pstar": ({"params", "ensemble", "integrator"}, "antidiagonal"),
    "spread": ({"params", "ensemble"}, "equilibrium"),
    "ergodicity_toy": ({"ergodicity"}, None),
    "eq44": ({"params"}, None),
}

# x-direction quantities of the full 2D packet; the y-only model ignores them
IGNORED_PARAMS = ("kx", "ux", "E")

_SECTION_TYPES = {
    "params": PhysicalParams,
    "integrator": IntegratorSettings,
    "ergodicity": ToySettings,
}
_WINDOW_KEYS = ("w1_lo", "w1_width", "w2_lo", "w2_width")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    params: PhysicalParams = field(default_factory=PhysicalParams)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    windows: tuple[DetectorWindow, DetectorWindow] | None = None
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    output_dir: Path = Path("pilotwave_out")
    toy: ToySettings = field(default_factory=ToySettings)
    ignored_metadata: dict = field(default_factory=dict)


def _convert(key: str, raw: str, kind):
    try:
        if kind is int:
            value = int(raw, 0)
        else:
            value = float(raw)
    except ValueError:
        raise BadValue(key, f"cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and math.isnan(value):
        raise BadValue(key, "NaN is not allowed")
    return value


def _build(section: str, cls, items: dict):
    kinds = {f.name: (int if f.type in ("int", int) else float) for f in fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        path = f"{section}.{key}"
        if key not in kinds:
            raise UnknownKey(path, f"unknown key (allowed: {', '.join(kinds)})")
        kwargs[key] = _convert(path, raw, kinds[key])
    try:
        return cls(**kwargs)
    except ValueError as exc:
        bad = next((k for k in kwargs if k in str(exc)), next(iter(kwargs), ""))
        raise BadValue(f"{section}.{bad}", str(exc)) from None


def parse_config(text: str) -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keys are case-sensitive (Y, E)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise BadValue("<document>", str(exc).splitlines()[0]) from None

    if not cp.has_section("experiment"):
        raise MissingKey("experiment.name", "missing [experiment] section")
    exp = dict(cp.items("experiment"))
    if "name" not in exp:
        raise MissingKey("experiment.name", "required")
    name = exp.pop("name").strip()
    if name not in EXPERIMENTS:
        raise BadValue("experiment.name", f"unknown experiment {name!r} (have {', '.join(EXPERIMENTS)})")
    output_dir = exp.pop("output_dir", None)
    for key in exp:
        raise UnknownKey(f"experiment.{key}", "unknown key (allowed: name, output_dir)")

    allowed, default_constraint = EXPERIMENTS[name]
    for section in cp.sections():
        if section != "experiment" and section not in allowed:
            raise UnknownKey(section, f"section not accepted by experiment {name!r}")

    kwargs = {"name": name}
    if output_dir:
        kwargs["output_dir"] = Path(output_dir)

    if cp.has_section("params"):
        items = dict(cp.items("params"))
        kwargs["ignored_metadata"] = {k: items.pop(k) for k in IGNORED_PARAMS if k in items}
        kwargs["params"] = _build("params", PhysicalParams, items)
    if cp.has_section("integrator"):
        kwargs["integrator"] = _build("integrator", IntegratorSettings, dict(cp.items("integrator")))
    if cp.has_section("ergodicity"):
        kwargs["toy"] = _build("ergodicity", ToySettings, dict(cp.items("ergodicity")))

    ens = dict(cp.items("ensemble")) if cp.has_section("ensemble") else {}
    constraint = ens.pop("constraint", default_constraint or "equilibrium").strip()
    if constraint not in CONSTRAINTS:
        raise BadValue("ensemble.constraint", f"must be one of {CONSTRAINTS}")
    if default_constraint and constraint != default_constraint:
        raise BadValue("ensemble.constraint", f"experiment {name!r} requires {default_constraint!r}")
    ekw = {"constraint": constraint}
    for key, raw in ens.items():
        if key not in ("n_pairs", "master_seed"):
            raise UnknownKey(f"ensemble.{key}", "unknown key (allowed: n_pairs, master_seed, constraint)")
        ekw[key] = _convert(f"ensemble.{key}", raw, int)
    try:
        kwargs["ensemble"] = EnsembleConfig(**ekw)
    except ValueError as exc:
        raise BadValue("ensemble.n_pairs", str(exc)) from None

    if cp.has_section("windows"):
        win = dict(cp.items("windows"))
        for key in win:
            if key not in _WINDOW_KEYS:
                raise UnknownKey(f"windows.{key}", f"unknown key (allowed: {', '.join(_WINDOW_KEYS)})")
        for key in _WINDOW_KEYS:
            if key not in win:
                raise MissingKey(f"windows.{key}", "required when [windows] is given")
        vals = {k: _convert(f"windows.{k}", win[k], float) for k in _WINDOW_KEYS}
        for k in ("w1_width", "w2_width"):
            if not vals[k] > 0:
                raise BadValue(f"windows.{k}", "must be > 0")
        kwargs["windows"] = (DetectorWindow(vals["w1_lo"], vals["w1_width"]),
                             DetectorWindow(vals["w2_lo"], vals["w2_width"]))

    return ExperimentSpec(**kwargs)


def describe_experiments() -> list[str]:
    """One line per experiment for ``pilotwave list``."""
    lines = []
    for name, (sections, constraint) in EXPERIMENTS.items():
        extra = f" constraint={constraint}" if constraint else ""
        lines.append(f"{name:15s} required: experiment.name   optional sections: "
                     f"{', '.join(sorted(sections))}{extra}")
    return lines
