"""Scenario files: INI sections describing one closed-loop experiment.

Example::

    [scenario]
    plant = mimo_toy
    mode = hybrid

    [sim]
    dt = 1e-3
    t_end = 10

    [initial]
    x0 = 1, 1

    [setpoint]
    y1 = 0:0
    y2 = 0:0

Setpoint profiles are ``time:value`` pairs joined by commas and interpolated
linearly; the first and last values are held outside the listed times.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .plants import PLANTS
from .sim import SimConfig

SEED_ENV = "HOMOTOPY_FBLIN_SEED"
MODES = ("fblin", "continuation", "hybrid")
ETA_INITS = ("manifold", "output")

_PLANT_SHAPE = {"scalar_cubic": (1, 1), "mimo_toy": (2, 2), "induction_motor": (4, 2)}
_AFFINE_CONTROLLER_KEYS = ("h_gain", "landing_rate")
_MOTOR_CONTROLLER_KEYS = ("kp_current", "ki_current", "kp_flux", "ki_flux", "kp_speed",
                          "ki_speed", "landing_rate", "include_load", "flux_limit",
                          "speed_limit")
_MOTOR_PARAM_KEYS = ("P", "M_sr", "R_s", "R_r", "L_s", "L_r", "J", "p", "T_m")

_SECTION_KEYS = {
    "scenario": ("plant", "mode"),
    "sim": tuple(f.name for f in dataclasses.fields(SimConfig)),
    "initial": ("x0", "lambda", "lambda_dot", "eta_init"),
}
_FREE_SECTIONS = ("controller", "setpoint", "plant")


class ParseError(ValueError):
    """Malformed scenario file; ``line`` and ``key`` locate the problem when known."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class ValidationError(ValueError):
    """A parsed scenario violates one or more invariants."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class SetpointProfile:
    """Piecewise-linear setpoint through ``(times[k], values[k])``."""

    times: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def problems(self) -> list:
        out = []
        if not self.times or len(self.times) != len(self.values):
            out.append("profile needs matching, non-empty times and values")
        elif any(b <= a for a, b in zip(self.times, self.times[1:])):
            out.append("profile times must be strictly increasing")
        if not all(math.isfinite(v) for v in self.times + self.values):
            out.append("profile entries must be finite")
        return out

    @classmethod
    def constant(cls, value: float) -> "SetpointProfile":
        return cls((0.0,), (value,))

    def value(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def slope(self, t: float) -> float:
        """Right derivative; zero outside the listed times."""
        ts = self.times
        k = int(np.searchsorted(ts, t, side="right")) - 1
        if k < 0 or k >= len(ts) - 1:
            return 0.0
        return (self.values[k + 1] - self.values[k]) / (ts[k + 1] - ts[k])

    def text(self) -> str:
        return ", ".join(f"{t!r}:{v!r}" for t, v in zip(self.times, self.values))


@dataclass(frozen=True)
class Scenario:
    plant: str
    mode: str = "hybrid"
    sim: SimConfig = SimConfig()
    plant_params: dict = field(default_factory=dict)
    setpoints: tuple = ()
    controller: dict = field(default_factory=dict)
    x0: tuple = ()
    lambda0: float = 0.0
    lambda_dot0: float = 1.0
    eta_init: str = "manifold"

    @property
    def n(self) -> int:
        return _PLANT_SHAPE[self.plant][0]

    @property
    def m(self) -> int:
        return _PLANT_SHAPE[self.plant][1]

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, sim=dataclasses.replace(self.sim, rng_seed=int(seed)))


def validate(sc: Scenario) -> list:
    """Violated invariants of ``sc`` (empty when valid)."""
    out = []
    if sc.plant not in PLANTS:
        return [f"unknown plant {sc.plant!r}; known: {', '.join(sorted(PLANTS))}"]
    n, m = _PLANT_SHAPE[sc.plant]
    if sc.mode not in MODES:
        out.append(f"mode must be one of {', '.join(MODES)}")
    out.extend(sc.sim.problems())
    if len(sc.x0) != n:
        out.append(f"x0 must have {n} entries")
    elif not all(math.isfinite(v) for v in sc.x0):
        out.append("x0 must be finite")
    if len(sc.setpoints) != m:
        out.append(f"need {m} setpoint profiles")
    for i, prof in enumerate(sc.setpoints, 1):
        out.extend(f"y{i}: {p}" for p in prof.problems())
    if not 0.0 <= sc.lambda0 < 1.0:
        out.append("lambda must be in [0, 1)")
    if sc.eta_init not in ETA_INITS:
        out.append(f"eta_init must be one of {', '.join(ETA_INITS)}")
    allowed = _MOTOR_CONTROLLER_KEYS if sc.plant == "induction_motor" else _AFFINE_CONTROLLER_KEYS
    for key, value in sc.controller.items():
        if key not in allowed:
            out.append(f"unknown controller key {key!r}")
        elif not math.isfinite(value) or (key != "include_load" and value <= 0.0):
            out.append(f"controller {key} must be > 0")
    if sc.plant == "induction_motor":
        bad = set(sc.plant_params) - set(_MOTOR_PARAM_KEYS)
        out.extend(f"unknown plant parameter {k!r}" for k in sorted(bad))
        if not bad:
            from .motor import MotorParams
            try:
                MotorParams.from_mapping(sc.plant_params)
            except ValueError as exc:
                out.append(str(exc))
    elif sc.plant_params:
        out.append(f"plant {sc.plant} takes no parameters")
    return out


def _key_lines(text: str) -> dict:
    """``(section, key) -> line number`` for error reporting."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        head = re.match(r"\[([^\]]+)\]", s)
        if head:
            section = head.group(1).strip()
        elif section and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            lines.setdefault((section, key), no)
    return lines


def _floats(text: str):
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v != "")


def _profile(text: str) -> SetpointProfile:
    times, values = [], []
    for part in text.split(","):
        t, sep, v = part.partition(":")
        if not sep:
            raise ValueError(f"expected time:value, got {part.strip()!r}")
        times.append(float(t))
        values.append(float(v))
    return SetpointProfile(tuple(times), tuple(values))


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate scenario text; raises ParseError or ValidationError."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key in [{exc.section}]", exc.lineno, exc.option) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("content before the first [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line) from None
    lines = _key_lines(text)

    for section in cp.sections():
        if section not in _SECTION_KEYS and section not in _FREE_SECTIONS:
            no = next((i for i, raw in enumerate(text.splitlines(), 1)
                       if raw.strip().startswith(f"[{section}")), None)
            raise ParseError(f"unknown section [{section}]", no)
        if section in _SECTION_KEYS:
            for key in cp[section]:
                if key not in _SECTION_KEYS[section]:
                    raise ParseError(f"unknown key in [{section}]", lines.get((section, key)), key)

    def convert(section, key, fn, default):
        if not cp.has_option(section, key):
            return default
        raw = cp[section][key]
        try:
            return fn(raw)
        except ValueError as exc:
            raise ParseError(f"bad value {raw!r}: {exc}", lines.get((section, key)), key) from None

    if not cp.has_option("scenario", "plant"):
        raise ParseError("missing [scenario] plant", key="plant")
    plant = cp["scenario"]["plant"].strip()
    if plant not in PLANTS:
        raise ValidationError([f"unknown plant {plant!r}; known: {', '.join(sorted(PLANTS))}"])
    n, m = _PLANT_SHAPE[plant]

    base = SimConfig()
    sim_kwargs = {}
    for f in dataclasses.fields(SimConfig):
        fn = int if f.name == "rng_seed" else float
        sim_kwargs[f.name] = convert("sim", f.name, fn, getattr(base, f.name))
    sim = SimConfig(**sim_kwargs)

    setpoints = []
    allowed_y = {f"y{i}" for i in range(1, m + 1)}
    if cp.has_section("setpoint"):
        for key in cp["setpoint"]:
            if key not in allowed_y:
                raise ParseError("unknown setpoint output", lines.get(("setpoint", key)), key)
    for i in range(1, m + 1):
        setpoints.append(convert("setpoint", f"y{i}", _profile, SetpointProfile.constant(0.0)))

    controller = {}
    if cp.has_section("controller"):
        for key in cp["controller"]:
            controller[key] = convert("controller", key, float, None)
    params = {}
    if cp.has_section("plant"):
        for key in cp["plant"]:
            params[key] = convert("plant", key, float, None)

    sc = Scenario(
        plant=plant,
        mode=cp.get("scenario", "mode", fallback="hybrid").strip(),
        sim=sim,
        plant_params=params,
        setpoints=tuple(setpoints),
        controller=controller,
        x0=convert("initial", "x0", _floats, (0.0,) * n),
        lambda0=convert("initial", "lambda", float, 0.0),
        lambda_dot0=convert("initial", "lambda_dot", float, 1.0),
        eta_init=cp.get("initial", "eta_init", fallback="manifold").strip(),
    )
    problems = validate(sc)
    if problems:
        raise ValidationError(problems)
    return sc


def parse_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario_text(path.read_text(), source=str(path))


def dump_scenario(sc: Scenario) -> str:
    """Scenario text that parses back to an equal ``Scenario``."""
    out = ["[scenario]", f"plant = {sc.plant}", f"mode = {sc.mode}", "", "[sim]"]
    for f in dataclasses.fields(SimConfig):
        out.append(f"{f.name} = {getattr(sc.sim, f.name)!r}")
    out += ["", "[initial]", "x0 = " + ", ".join(repr(float(v)) for v in sc.x0),
            f"lambda = {sc.lambda0!r}", f"lambda_dot = {sc.lambda_dot0!r}",
            f"eta_init = {sc.eta_init}", "", "[setpoint]"]
    out += [f"y{i} = {p.text()}" for i, p in enumerate(sc.setpoints, 1)]
    if sc.controller:
        out += ["", "[controller]"] + [f"{k} = {v!r}" for k, v in sc.controller.items()]
    if sc.plant_params:
        out += ["", "[plant]"] + [f"{k} = {v!r}" for k, v in sc.plant_params.items()]
    return "\n".join(out) + "\n"


def bundled_scenarios() -> dict:
    """Name -> path of the scenarios shipped with the package."""
    root = resources.files("homcontrol") / "scenarios"
    return {p.name.removesuffix(".scenario"): Path(str(p))
            for p in root.iterdir() if p.name.endswith(".scenario")}


def load_bundled(name: str) -> Scenario:
    return parse_scenario(bundled_scenarios()[name])


def resolve_seed(config_seed: int, cli_seed: Optional[int] = None) -> int:
    """Seed priority: command line, then ``HOMOTOPY_FBLIN_SEED``, then the file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV, "").strip()
    return int(env) if env else int(config_seed)
