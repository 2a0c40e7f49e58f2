"""Flat ``key = value`` run configuration with a typed schema, plus initial-data recipes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .integrator import IntegratorConfig
from .norms import gevrey_norm
from .spectral import GridSpec, SpectralField, random_field, single_mode, taylor_green


class ConfigError(ValueError):
    """Malformed configuration; the message names the line and key."""


# -- value parsers ------------------------------------------------------------------

_PI_RE = re.compile(r"^\s*([-+0-9.eE]*)\s*\*?\s*pi\s*$")


def parse_real(text: str) -> float:
    """A float, or a multiple of pi written ``pi``, ``2pi`` or ``16*pi``."""
    m = _PI_RE.match(text)
    if m:
        c = m.group(1)
        return (float(c) if c not in ("", "+", "-") else float(c + "1")) * math.pi
    x = float(text)
    return x


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _list_of(conv):
    def parse(text: str):
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        return [conv(p) for p in parts]

    return parse


def parse_norm_pairs(text: str) -> list[tuple[float, float]]:
    """``s:a`` pairs separated by commas, e.g. ``0.5:0, 1.5:0.5``."""
    out = []
    for item in [p for p in re.split(r"[,\s]+", text.strip()) if p]:
        s, sep, a = item.partition(":")
        out.append((parse_real(s), parse_real(a) if sep else 0.0))
    return out


def parse_param_sets(text: str) -> list[dict]:
    """``;``-separated sets of ``name=value`` pairs, e.g. ``s=0.5,t=0.5,a=0.2; s=1,t=1,a=0.2``."""
    sets = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        d: dict[str, Any] = {}
        for kv in chunk.split(","):
            k, sep, v = kv.partition("=")
            if not sep:
                raise ValueError(f"expected name=value in {kv!r}")
            k = k.strip()
            d[k] = parse_bool(v) if k == "strict" else parse_real(v.strip())
        sets.append(d)
    return sets


@dataclass(frozen=True)
class Key:
    name: str
    kind: str
    default: Any
    doc: str
    parse: Callable[[str], Any]


def _k(name, kind, default, doc):
    parsers = {
        "int": int,
        "real": parse_real,
        "bool": parse_bool,
        "str": str.strip,
        "reals": _list_of(parse_real),
        "ints": _list_of(int),
        "norms": parse_norm_pairs,
        "params": parse_param_sets,
    }
    return Key(name, kind, default, doc, parsers[kind])


SCHEMA: list[Key] = [
    # grid and integrator
    _k("n", "int", 32, "grid points per axis (even, >= 4)"),
    _k("box_period", "real", 2 * math.pi, "box period L; accepts multiples of pi such as 16*pi"),
    _k("dealias_fraction", "real", 2.0 / 3.0, "retained fraction of the lattice half-width"),
    _k("dt", "real", 0.01, "maximal time step"),
    _k("t_end", "real", 1.0, "final time"),
    _k("scheme", "str", "IF-RK4", "IF-RK4 or IF-Euler"),
    _k("nu", "real", 1.0, "viscosity"),
    _k("cfl_guard", "real", 0.5, "advective safety factor in (0, 1)"),
    _k("nonlinear", "bool", True, "false integrates the heat equation only"),
    _k("diag_count", "int", 20, "number of equal diagnostic intervals on [0, t_end]"),
    _k("diag_times", "reals", None, "explicit diagnostic times; overrides diag_count"),
    _k("norms", "norms", [(0.5, 0.0)], "s:a pairs recorded as Hs_{s}_a{a} columns"),
    _k("gevrey_a", "real", 0.0, "Gevrey radius a of the dissipation integral"),
    _k("radius", "bool", False, "record the analyticity radius"),
    _k("snapshots", "bool", False, "persist GNSF snapshots at diagnostic times"),
    _k("seed", "int", 0, "seed of every randomized step"),
    # initial data
    _k("init", "str", "random_shell", "random_shell | gaussian | taylor_green | single_mode | zero"),
    _k("init_norm", "real", None, "rescale u0 to this H^{1/2}_{a,1} norm (a = init_norm_a)"),
    _k("init_norm_a", "real", 0.0, "Gevrey radius used by init_norm"),
    _k("init_shell", "reals", [1.0, 4.0], "integer-lattice shell radii of random_shell data"),
    _k("init_width", "real", 1.0, "e-folding frequency of the gaussian envelope exp(-|xi|^2 / w^2)"),
    _k("init_amplitude", "real", 1.0, "Taylor-Green amplitude"),
    _k("init_mode", "ints", [1, 0, 0], "lattice mode of single_mode data"),
    _k("init_vec", "reals", [0.0, 0.0, 1.0], "real coefficient vector of single_mode data"),
    # lemma sweeps
    _k("inequality", "str", "all", "product | bilinear | interpolation | all"),
    _k("samples", "int", 100, "samples per sweep"),
    _k("shell_radius", "real", 4.0, "outer lattice radius of sweep samples"),
    _k("sweep_n", "int", 16, "grid of sweep samples"),
    _k("params", "params", None, "parameter sets, e.g. s=0.5,t=0.5,a=0.2; s=1,t=1,a=0.2"),
    _k("reseed_check", "bool", True, "repeat each sweep with seed + 1 and flag unstable reports"),
    _k("reseed_tolerance", "real", 0.10, "allowed relative change of max_ratio on reseeding"),
    # Picard
    _k("picard_T", "real", 1.0, "existence time of the fixed-point solve"),
    _k("picard_a", "real", 0.5, "Gevrey radius of the Picard norms"),
    _k("picard_tol", "real", 1e-12, "relative residual tolerance"),
    _k("picard_max_iter", "int", 20, "iteration cap"),
    _k("picard_steps", "int", 128, "time slices on [0, T]"),
    _k("picard_initial", "str", "heat", "heat | zero first iterate"),
    _k("check_resolution", "bool", True, "re-solve at half the step and flag changes above 10%"),
    _k("compare_integrator", "bool", False, "also run the time integrator and report the distance at T"),
    # studies
    _k("bilinear_constant", "real", None, "C_emp; computed from a bilinear sweep when absent"),
    _k("bilinear_samples", "int", 20, "samples of the sweep that sets C_emp"),
    _k("bilinear_safety", "real", 2.0, "safety factor applied to the swept bilinear ratio"),
    _k("decay_s", "reals", [0.5, 1.0, 1.5, 2.0], "Sobolev indices of the decay fits"),
    _k("decay_window", "reals", [1.0, 8.0], "fit window t_lo, t_hi"),
    _k("decay_samples", "int", 16, "log-spaced samples in the fit window"),
    _k("radius_window", "reals", [0.01, 1.0], "t_lo, t_hi of the analyticity radius study"),
    _k("perturb_eps", "real", 1e-4, "amplitude of the stability perturbation"),
    _k("perturb_mode", "ints", [0, 0, 8], "lattice mode of the stability perturbation"),
    _k("perturb_vec", "reals", [1.0, 0.0, 0.0], "direction of the stability perturbation"),
]

KEYS = {k.name: k for k in SCHEMA}


def schema_text() -> str:
    lines = ["# key = value configuration; '#' starts a comment", ""]
    for k in SCHEMA:
        lines.append(f"{k.name:<20} {k.kind:<7} default {k.default!r:<28} {k.doc}")
    return "\n".join(lines) + "\n"


@dataclass
class RunConfig:
    values: dict
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def with_overrides(self, **kw) -> "RunConfig":
        v = dict(self.values)
        for k, x in kw.items():
            if x is not None:
                v[k] = x
        return RunConfig(v, self.source)

    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.box_period, self.dealias_fraction)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.dt, self.t_end, self.scheme, self.nu, self.cfl_guard, self.nonlinear)

    def diagnostic_times(self) -> list[float]:
        if self.diag_times is not None:
            return list(self.diag_times)
        m = max(1, self.diag_count)
        return list(np.linspace(0.0, self.t_end, m + 1)) if self.t_end > 0 else [0.0]

    def to_text(self) -> str:
        out = []
        for k in SCHEMA:
            v = self.values[k.name]
            if v is None:
                continue
            if k.kind == "norms":
                v = ", ".join(f"{s!r}:{a!r}" for s, a in v)
            elif k.kind == "params":
                v = "; ".join(",".join(f"{n}={x!r}" for n, x in d.items()) for d in v)
            elif isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            else:
                v = repr(v) if isinstance(v, float) else str(v)
            out.append(f"{k.name} = {v}")
        return "\n".join(out) + "\n"


def defaults() -> RunConfig:
    return RunConfig({k.name: k.default for k in SCHEMA})


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    values = {k.name: k.default for k in SCHEMA}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: key {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        spec = KEYS[key]
        try:
            values[key] = spec.parse(val.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: key {key!r} expects {spec.kind}: {exc}") from None
    cfg = RunConfig(values, source)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such config file")
    return parse_config(p.read_text(), str(path))


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.grid()
        cfg.integrator()
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None
    if cfg.init not in RECIPES:
        raise ConfigError(f"{cfg.source}: key 'init' must be one of {sorted(RECIPES)}, got {cfg.init!r}")
    if cfg.inequality not in ("all", "product", "bilinear", "interpolation"):
        raise ConfigError(f"{cfg.source}: key 'inequality' has unknown value {cfg.inequality!r}")
    if len(cfg.init_shell) != 2 or len(cfg.decay_window) != 2 or len(cfg.radius_window) != 2:
        raise ConfigError(f"{cfg.source}: keys init_shell, decay_window and radius_window take two values")
    for name in ("init_mode", "init_vec", "perturb_mode", "perturb_vec"):
        if len(cfg[name]) != 3:
            raise ConfigError(f"{cfg.source}: key {name!r} takes three values")


# -- initial data ---------------------------------------------------------------------


def _random_shell(grid, cfg):
    return random_field(grid, cfg.seed, shell=tuple(cfg.init_shell))


def _gaussian(grid, cfg):
    w = cfg.init_width
    return random_field(grid, cfg.seed, shell=(1.0, float(grid.n)), envelope=lambda r: np.exp(-(r / w) ** 2))


def _taylor_green(grid, cfg):
    return taylor_green(grid, cfg.init_amplitude)


def _single_mode(grid, cfg):
    return single_mode(grid, cfg.init_mode, cfg.init_vec)


def _zero(grid, cfg):
    return SpectralField.zeros(grid)


RECIPES = {
    "random_shell": _random_shell,
    "gaussian": _gaussian,
    "taylor_green": _taylor_green,
    "single_mode": _single_mode,
    "zero": _zero,
}


def rescale(f: SpectralField, target: float, a: float = 0.0) -> SpectralField:
    norm = gevrey_norm(f, 0.5, a)
    if norm == 0:
        return f
    return f * (target / norm)


def initial_field(cfg: RunConfig) -> SpectralField:
    f = RECIPES[cfg.init](cfg.grid(), cfg)
    if cfg.init_norm is not None:
        f = rescale(f, cfg.init_norm, cfg.init_norm_a)
    return f


def perturbation(cfg: RunConfig, eps: float | None = None) -> SpectralField:
    eps = cfg.perturb_eps if eps is None else eps
    vec = np.asarray(cfg.perturb_vec, dtype=float) * eps
    return single_mode(cfg.grid(), cfg.perturb_mode, vec)
