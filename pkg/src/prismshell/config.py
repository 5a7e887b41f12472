"""Run configuration: bracketed sections of ``key = value`` lines.

Example::

    [analysis]
    kind = arclength
    benchmark = SAP

    [orders]
    face = 3
    thick_v = 2
    thick_w = 2

    [load]
    target = 0.8
    ds0 = 1.0

    [output]
    dir = out/sap
    vtk_every = 10

A run on a mesh file names ``mesh = path`` instead of ``benchmark`` and
adds ``[material]``, ``[bcs]``, ``[loads]`` and ``[monitors]``::

    [bcs]
    root = clamp
    [loads]
    tip = point tipset 0 0 -1
    [monitors]
    T = 12 0 0 -1
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("linear", "newton", "arclength", "convergence", "adapt")
LOAD_KINDS = ("point", "edge", "surface", "self_weight", "pressure")


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending line when known."""

    def __init__(self, msg, line: int | None = None, source: str | None = None):
        where = ""
        if source or line:
            where = f"{source or '<config>'}" + (f":{line}" if line else "") + ": "
        super().__init__(where + msg)
        self.line = line


@dataclass
class RunConfig:
    kind: str = "linear"
    benchmark: str | None = None
    mesh: str | None = None
    bench_params: dict = field(default_factory=dict)
    face: int = 3
    thick_v: int = 2
    thick_w: int = 2
    E: float | None = None
    nu: float | None = None
    target: float | None = None
    ds0: float | None = None  # benchmark default when unset
    max_steps: int = 400
    steps: int = 1
    symmetrize: bool = False
    fail_at_steps: tuple = ()
    min_order: int = 1
    max_order: int = 8
    cycles: int = 4
    bcs: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)
    monitors: dict = field(default_factory=dict)
    out_dir: str = "prismshell_out"
    vtk_every: int = 10
    refine: int | None = None
    threads: int = 1

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"analysis kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if (self.benchmark is None) == (self.mesh is None):
            raise ConfigError("give exactly one of 'benchmark' and 'mesh'")
        for name in ("face", "thick_v", "thick_w", "min_order", "max_order"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.min_order > self.max_order:
            raise ConfigError("min_order exceeds max_order")
        bad_ds0 = self.ds0 is not None and self.ds0 <= 0
        if bad_ds0 or self.max_steps < 1 or self.steps < 1 or self.cycles < 1:
            raise ConfigError("ds0, max_steps, steps and cycles must be positive")
        if self.vtk_every < 0:
            raise ConfigError("vtk_every must be >= 0")
        if self.mesh is not None and (self.E is None or self.nu is None):
            raise ConfigError("a mesh run needs [material] E and nu")
        return self

    # --- serialisation ---------------------------------------------------------------

    def to_ini(self) -> str:
        """Effective configuration in the same format :func:`parse_config` reads."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        a = {"kind": self.kind, "symmetrize": str(self.symmetrize).lower()}
        if self.benchmark:
            a["benchmark"] = self.benchmark
        if self.mesh:
            a["mesh"] = self.mesh
        a.update(min_order=str(self.min_order), max_order=str(self.max_order),
                 cycles=str(self.cycles), threads=str(self.threads))
        if self.fail_at_steps:
            a["fail_at_steps"] = " ".join(map(str, self.fail_at_steps))
        cp["analysis"] = a
        if self.bench_params:
            cp["benchmark"] = {k: str(v) for k, v in self.bench_params.items()}
        cp["orders"] = {"face": str(self.face), "thick_v": str(self.thick_v),
                        "thick_w": str(self.thick_w)}
        mat = {k: repr(float(getattr(self, k))) for k in ("E", "nu") if getattr(self, k) is not None}
        if mat:
            cp["material"] = mat
        load = {"max_steps": str(self.max_steps), "steps": str(self.steps)}
        if self.ds0 is not None:
            load["ds0"] = repr(float(self.ds0))
        if self.target is not None:
            load["target"] = repr(float(self.target))
        cp["load"] = load
        for sec in ("bcs", "loads", "monitors"):
            if getattr(self, sec):
                cp[sec] = {k: str(v) for k, v in getattr(self, sec).items()}
        out = {"dir": self.out_dir, "vtk_every": str(self.vtk_every)}
        if self.refine:
            out["refine"] = str(self.refine)
        cp["output"] = out
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# section -> key -> (attribute, converter)
_SCHEMA = {
    "analysis": {"kind": ("kind", str), "benchmark": ("benchmark", str), "mesh": ("mesh", str),
                 "symmetrize": ("symmetrize", "bool"), "min_order": ("min_order", int),
                 "max_order": ("max_order", int), "cycles": ("cycles", int),
                 "threads": ("threads", int), "fail_at_steps": ("fail_at_steps", "ints")},
    "orders": {"face": ("face", int), "thick_v": ("thick_v", int), "thick_w": ("thick_w", int)},
    "material": {"E": ("E", float), "nu": ("nu", float)},
    "load": {"target": ("target", float), "ds0": ("ds0", float), "max_steps": ("max_steps", int),
             "steps": ("steps", int)},
    "output": {"dir": ("out_dir", str), "vtk_every": ("vtk_every", int), "refine": ("refine", int)},
}
_FREE_SECTIONS = ("benchmark", "bcs", "loads", "monitors")


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` to its 1-based line number."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = s.split("=", 1)[0] if "=" in s else s.split(":", 1)[0]
            lines[(section, key.strip())] = i
    return lines


def _convert(value: str, conv):
    if conv == "bool":
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if conv == "ints":
        return tuple(int(t) for t in value.replace(",", " ").split())
    return conv(value.strip())


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_config(text: str, source: str | None = None) -> RunConfig:
    """Parse configuration text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse line {exc.errors[0][1].strip()}", line, source) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno,
                          source) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, source) from None
    where = _key_lines(text)
    cfg = RunConfig()
    for section in cp.sections():
        if section in _FREE_SECTIONS:
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", None, source)
        for key, value in cp[section].items():
            line = where.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
            attr, conv = _SCHEMA[section][key]
            try:
                setattr(cfg, attr, _convert(value, conv))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line, source) from None
    if cp.has_section("benchmark"):
        for key, value in cp["benchmark"].items():
            try:
                cfg.bench_params[key] = _number(value)
            except ValueError:
                raise ConfigError(f"benchmark parameter {key!r} must be numeric",
                                  where.get(("benchmark", key)), source) from None
    for sec in ("bcs", "loads", "monitors"):
        if cp.has_section(sec):
            getattr(cfg, sec).update(cp[sec].items())
    # check the structured entries early so errors point at their lines
    for name, spec in cfg.loads.items():
        try:
            parse_load(spec)
        except ValueError as exc:
            raise ConfigError(str(exc), where.get(("loads", name)), source) from None
    for name, spec in cfg.monitors.items():
        try:
            parse_monitor(spec)
        except ValueError as exc:
            raise ConfigError(str(exc), where.get(("monitors", name)), source) from None
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), None, source) from None


def read_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))


def parse_load(spec: str):
    """``kind set vx vy vz`` (``pressure`` takes a single value)."""
    parts = spec.split()
    if len(parts) < 3 or parts[0] not in LOAD_KINDS:
        raise ValueError(f"load must read '<{'|'.join(LOAD_KINDS)}> <set> <value...>', got {spec!r}")
    kind, set_name = parts[0], parts[1]
    try:
        vals = [float(t) for t in parts[2:]]
    except ValueError:
        raise ValueError(f"non-numeric load value in {spec!r}") from None
    if kind == "pressure":
        if len(vals) != 1:
            raise ValueError("pressure takes one value")
        return kind, set_name, vals[0]
    if len(vals) != 3:
        raise ValueError(f"{kind} load takes three components")
    return kind, set_name, tuple(vals)


def parse_monitor(spec: str):
    """``node dx dy dz``."""
    parts = spec.split()
    if len(parts) != 4:
        raise ValueError(f"monitor must read '<node> <dx> <dy> <dz>', got {spec!r}")
    try:
        return int(parts[0]), tuple(float(t) for t in parts[1:])
    except ValueError:
        raise ValueError(f"bad monitor entry {spec!r}") from None
