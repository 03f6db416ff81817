"""Scenario files: flat ``key = value`` lines with ``#`` comments."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


_CALL = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?$")


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s):
    low = s.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s
    return parse


def _call(**arity):
    """Parse ``name`` or ``name(a, b)`` with a fixed number of float args."""
    def parse(s):
        m = _CALL.match(s.strip())
        if not m or m.group(1) not in arity:
            raise ValueError(f"{s!r} is not one of {', '.join(arity)}")
        name, inner = m.group(1), m.group(2)
        raw = [a.strip() for a in inner.split(",")] if inner and inner.strip() else []
        n = arity[name]
        if name == "profile":
            if raw != ["hot_spot"]:
                raise ValueError("only profile(hot_spot) is available")
            return (name, ("hot_spot",))
        if len(raw) != n:
            raise ValueError(f"{name} takes {n} argument(s)")
        return (name, tuple(float(a) for a in raw))
    return parse


def _int_list(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(_int(p) for p in s.split(","))


def _str(s):
    return s


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "run.label": (_str, "scenario"),
    "run.checkpoint_every": (_int, 0),
    "potential.kind": (_choice("warner", "fene_like"), "warner"),
    "potential.H": (_float, 1.0),
    "potential.b": (_float, 1.0),
    "potential.r": (_float, 0.5),
    "qgrid.n_r": (_int, 16),
    "qgrid.n_a": (_int, 16),
    "xgrid.n_x": (_int, 32),
    "xgrid.n_y": (_int, None),
    "xgrid.L": (_float, 1.0),
    "xgrid.bc": (_choice("periodic", "noflux"), "periodic"),
    "flow.nu": (_float, 0.05),
    "flow.nu_floor": (_float, 0.01),
    "flow.nu_profile": (_choice("constant", "rational_decay"), "constant"),
    "flow.f": (_call(zero=0, constant=2, vortex_forcing=0), ("zero", ())),
    "flow.f_amp": (_float, 1.0),
    "heat.kappa_c0": (_float, 0.05),
    "heat.kappa_c1": (_float, 0.05),
    "heat.beta": (_float, 1.0),
    "heat.picard_iters": (_int, 1),
    "time.dt": (_float, 1e-3),
    "time.t_end": (_float, 0.1),
    "time.output_every": (_int, 10),
    "init.theta": (_call(constant=1, profile=1), ("constant", (1.0,))),
    "init.theta_floor": (_float, 1e-3),
    "init.hot_base": (_float, 1.0),
    "init.hot_amp": (_float, 0.5),
    "init.hot_width": (_float, 0.1),
    "init.phi": (_choice("equilibrium", "uniform", "gaussian_bump", "zero"), "equilibrium"),
    "init.n_p": (_float, 1.0),
    "init.v": (_call(zero=0, taylor_green=0, shear=1), ("zero", ())),
    "init.v_amp": (_float, 1.0),
    "polymer.coupling": (_bool, True),
    "audit.theta_max": (_float, None),
    "audit.phi_neg_tol": (_float, 1e-12),
    "audit.mass_tol": (_float, 1e-10),
    "audit.div_tol": (_float, 1e-10),
    "audit.nP_rel_tol": (_float, 1e-6),
    "audit.energy_rel_tol": (_float, 5e-2),
    "renorm.k_levels": (_int_list, ()),
    "renorm.eps": (_float, 0.1),
}


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=dict)
    text: str = ""

    def __getitem__(self, key):
        return self.values[key]

    @property
    def label(self) -> str:
        return self.values["run.label"]

    @property
    def n_steps(self) -> int:
        return int(round(self["time.t_end"] / self["time.dt"]))

    def with_overrides(self, **kv):
        """Copy with dotted keys given as keyword names using '__' for '.'."""
        lines = [self.text.rstrip("\n")] if self.text else []
        for k, v in kv.items():
            lines.append(f"{k.replace('__', '.')} = {v}")
        return parse_config("\n".join(lines) + "\n")


def parse_config(text: str) -> ScenarioConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", line=lineno, key=key)
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, key=key) from None
    if values["xgrid.n_y"] is None:
        values["xgrid.n_y"] = values["xgrid.n_x"]
    cfg = ScenarioConfig(values, text)
    validate(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate(cfg: ScenarioConfig):
    v = cfg.values

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(msg, key=key)

    need(v["heat.beta"] > 5.0 / 6.0, "heat.beta",
         f"beta = {v['heat.beta']} is not allowed; the heat conductivity exponent must satisfy beta > 5/6")
    need(v["heat.kappa_c0"] >= 0 and v["heat.kappa_c1"] >= 0
         and v["heat.kappa_c0"] + v["heat.kappa_c1"] > 0, "heat.kappa_c0",
         "kappa coefficients must be nonnegative and not both zero")
    need(v["flow.nu_floor"] > 0, "flow.nu_floor", "viscosity floor must be positive")
    need(v["flow.nu"] >= v["flow.nu_floor"], "flow.nu", "flow.nu must be >= flow.nu_floor")
    need(v["time.dt"] > 0, "time.dt", "dt must be positive")
    need(v["time.t_end"] >= v["time.dt"], "time.t_end", "t_end must be >= dt")
    need(v["time.output_every"] >= 1, "time.output_every", "output_every must be >= 1")
    need(v["potential.H"] > 0 and v["potential.b"] > 0, "potential.H", "H and b must be positive")
    if v["potential.kind"] == "fene_like":
        need(0 < v["potential.r"] < 1, "potential.r", "r must lie in (0, 1)")
    need(v["qgrid.n_r"] >= 2 and v["qgrid.n_a"] >= 3, "qgrid.n_r", "q-grid too small")
    need(v["xgrid.n_x"] >= 3 and v["xgrid.n_y"] >= 3, "xgrid.n_x", "x-grid too small")
    need(v["xgrid.L"] > 0, "xgrid.L", "box size must be positive")
    need(v["init.theta_floor"] > 0, "init.theta_floor", "temperature floor must be positive")
    name, args = v["init.theta"]
    if name == "constant":
        need(args[0] >= v["init.theta_floor"], "init.theta",
             "initial temperature must be bounded below by a positive constant")
    else:
        need(v["init.hot_base"] >= v["init.theta_floor"] and v["init.hot_base"] + min(v["init.hot_amp"], 0) >= v["init.theta_floor"],
             "init.hot_base", "initial temperature must be bounded below by a positive constant")
        need(v["init.hot_width"] > 0, "init.hot_width", "hot-spot width must be positive")
    need(v["init.n_p"] >= 0, "init.n_p", "number density must be nonnegative")
    need(all(k >= 1 for k in v["renorm.k_levels"]), "renorm.k_levels", "truncation levels must be >= 1")
    need(0 < v["renorm.eps"] < 1, "renorm.eps", "eps must lie in (0, 1)")
    need(v["heat.picard_iters"] >= 1, "heat.picard_iters", "picard_iters must be >= 1")
