"""Scenario files: TOML in, validated dataclasses out, and back.

A scenario names the four species, the collision kernels (from a closed set
of families), the grid, time stepping, initial profiles, the diffusion
closure and the verification budget.  Unknown keys are errors; the message
names the key, its line and the closest valid spelling.
"""

from __future__ import annotations

import difflib
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomlkit

from .coefficients import AngularPower, KernelSpec, PowerFactor
from .errors import ConfigError, DomainError
from .mixture import PhysicalConstants, ReactionSpec, SpeciesParams, TabulatedWeight

KINETIC_FAMILIES = ("constant", "power", "one_minus_R_power")
ANGULAR_FAMILIES = ("constant", "power")
PROFILES = ("uniform", "step", "gaussian_bump")
INTEGRATORS = ("explicit", "implicit")
CLOSURES = ("zero_mass_flux", "zero_molar_flux")
MAX_KERNEL_EXPONENT = 10.0


@dataclass(frozen=True)
class SpeciesConfig:
    mass: float
    binding_energy: float = 0.0
    alpha: int | None = 0
    weight_table: str | None = None


@dataclass(frozen=True)
class KineticConfig:
    family: str = "constant"
    scale: float = 1.0
    p_self: float = 0.0
    p_partner: float = 0.0
    p_R: float = 0.0


@dataclass(frozen=True)
class AngularConfig:
    family: str = "constant"
    scale: float = 1.0
    exponent: float = 0.0


@dataclass(frozen=True)
class ChannelKernel:
    phi: KineticConfig = field(default_factory=KineticConfig)
    b: AngularConfig = field(default_factory=AngularConfig)


@dataclass(frozen=True)
class KernelConfig:
    gamma: float = 1.0
    elastic: ChannelKernel = field(default_factory=ChannelKernel)
    reaction: ChannelKernel = field(default_factory=ChannelKernel)
    pairs: tuple[tuple[str, ChannelKernel], ...] = ()


@dataclass(frozen=True)
class GridConfig:
    cells: int = 64
    length: float = 1.0


@dataclass(frozen=True)
class TimeConfig:
    t_end: float = 10.0
    dt: float = 0.0
    integrator: str = "explicit"
    output_every: int = 100


@dataclass(frozen=True)
class ProfileConfig:
    profile: str = "uniform"
    value: float = 1.0
    amplitude: float = 0.0
    center: float = 0.5
    width: float = 0.1
    right: float = 1.0
    position: float = 0.5


@dataclass(frozen=True)
class InitialConfig:
    n1: ProfileConfig = field(default_factory=ProfileConfig)
    n2: ProfileConfig = field(default_factory=ProfileConfig)
    n3: ProfileConfig = field(default_factory=ProfileConfig)
    n4: ProfileConfig = field(default_factory=ProfileConfig)
    T: ProfileConfig = field(default_factory=ProfileConfig)


@dataclass(frozen=True)
class DiffusionConfig:
    closure: str = "zero_mass_flux"
    safety: float = 0.4


@dataclass(frozen=True)
class CoefficientsConfig:
    temperatures: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class VerifyConfig:
    mc_samples: int = 200_000
    threads: int = 1
    fault_injection: str = "none"


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ScenarioConfig:
    species: tuple[SpeciesConfig, SpeciesConfig, SpeciesConfig, SpeciesConfig]
    k_B: float = 1.0
    seed: int = 0
    kernel: KernelConfig = field(default_factory=KernelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    coefficients: CoefficientsConfig = field(default_factory=CoefficientsConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = field(default=".", compare=False)

    # -- model objects --------------------------------------------------

    def reaction(self) -> ReactionSpec:
        species = []
        for s in self.species:
            if s.weight_table is not None:
                path = Path(s.weight_table)
                if not path.is_absolute():
                    path = Path(self.base_dir) / path
                weight = TabulatedWeight.from_csv(path)
            else:
                weight = s.alpha
            species.append(SpeciesParams(s.mass, s.binding_energy, weight))
        return ReactionSpec(tuple(species), PhysicalConstants(self.k_B))

    def kernel_spec(self) -> KernelSpec:
        k = self.kernel
        return KernelSpec(
            gamma=k.gamma,
            default_phi=_kinetic(k.elastic.phi),
            default_b=_angular(k.elastic.b),
            phi_elastic={_pair_key(name): _kinetic(ch.phi) for name, ch in k.pairs},
            b_elastic={_pair_key(name): _angular(ch.b) for name, ch in k.pairs},
            phi_react=_kinetic(k.reaction.phi),
            b_react=_angular(k.reaction.b),
        )

    def initial_profiles(self, cells: int | None = None):
        """Cell-centre densities (cells, 4) and temperatures (cells,)."""
        cells = self.grid.cells if cells is None else cells
        x = (np.arange(cells) + 0.5) / cells * self.grid.length
        init = self.initial
        n = np.column_stack([_profile(p, x, self.grid.length) for p in (init.n1, init.n2, init.n3, init.n4)])
        T = _profile(init.T, x, self.grid.length)
        return n, T


def _kinetic(c: KineticConfig) -> PowerFactor:
    if c.family == "constant":
        return PowerFactor(c.scale)
    if c.family == "power":
        return PowerFactor(c.scale, c.p_self, c.p_partner)
    return PowerFactor(c.scale, p_R=c.p_R)


def _angular(c: AngularConfig) -> AngularPower:
    return AngularPower(c.scale, c.exponent if c.family == "power" else 0.0)


def _pair_key(name: str) -> tuple[int, int]:
    i, j = (int(t) - 1 for t in name.split("-"))
    return (min(i, j), max(i, j))


def _profile(p: ProfileConfig, x, length) -> np.ndarray:
    if p.profile == "uniform":
        return np.full_like(x, p.value)
    if p.profile == "step":
        return np.where(x < p.position * length, p.value, p.right)
    return p.value + p.amplitude * np.exp(-(((x - p.center * length) / (p.width * length)) ** 2))


# -- parsing ----------------------------------------------------------------


class _Context:
    def __init__(self, text: str, path: str):
        self.lines = text.splitlines()
        self.path = path

    def line_of(self, key: str) -> int | None:
        pattern = re.compile(rf'^\s*(\[\[?\s*)?([\w."-]+\.)?"?{re.escape(key)}"?\s*(=|\]|\.)')
        for number, line in enumerate(self.lines, start=1):
            if pattern.search(line):
                return number
        return None

    def error(self, where: str, key: str, message: str) -> ConfigError:
        line = self.line_of(key)
        loc = f"{self.path}:{line}" if line else self.path
        dotted = f"{where}.{key}" if where else key
        return ConfigError(f"{loc}: {dotted}: {message}")


def _check_keys(table: dict, allowed, where: str, ctx: _Context) -> None:
    for key in table:
        if key not in allowed:
            hint = difflib.get_close_matches(key, list(allowed), n=1)
            suggestion = f"; did you mean '{hint[0]}'?" if hint else ""
            raise ctx.error(where, key, f"unknown key{suggestion}")


def _number(table, key, default, where, ctx, *, positive=False, minimum=None, maximum=None, integer=False):
    if key not in table:
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ctx.error(where, key, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ctx.error(where, key, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not math.isfinite(value):
        raise ctx.error(where, key, "must be finite")
    if positive and value <= 0:
        raise ctx.error(where, key, f"must be positive, got {value}")
    if minimum is not None and value < minimum:
        raise ctx.error(where, key, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ctx.error(where, key, f"must be <= {maximum}, got {value}")
    return value


def _choice(table, key, default, options, where, ctx):
    if key not in table:
        return default
    value = table[key]
    if value not in options:
        hint = difflib.get_close_matches(str(value), list(options), n=1)
        suggestion = f"; did you mean '{hint[0]}'?" if hint else ""
        raise ctx.error(where, key, f"must be one of {', '.join(options)}, got {value!r}{suggestion}")
    return value


def _table(parent, key, where, ctx) -> dict:
    value = parent.get(key, {})
    if not isinstance(value, dict):
        raise ctx.error(where, key, "expected a table")
    return value


def _names(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))


def _parse_species(raw, ctx) -> tuple[SpeciesConfig, ...]:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ctx.error("", "species", "exactly four [[species]] tables are required")
    out = []
    for idx, t in enumerate(raw, start=1):
        where = f"species[{idx}]"
        _check_keys(t, _names(SpeciesConfig), where, ctx)
        if "mass" not in t:
            raise ctx.error(where, "mass", "is required")
        mass = _number(t, "mass", None, where, ctx, positive=True)
        eb = _number(t, "binding_energy", 0.0, where, ctx)
        table = t.get("weight_table")
        if table is not None and "alpha" in t:
            raise ctx.error(where, "weight_table", "give either alpha or weight_table, not both")
        if table is not None:
            if not isinstance(table, str):
                raise ctx.error(where, "weight_table", "expected a path string")
            out.append(SpeciesConfig(mass, eb, None, table))
        else:
            alpha = _number(t, "alpha", 0, where, ctx, integer=True, minimum=0, maximum=20)
            out.append(SpeciesConfig(mass, eb, alpha, None))
    return tuple(out)


def _parse_kinetic(t, where, ctx) -> KineticConfig:
    _check_keys(t, _names(KineticConfig), where, ctx)
    family = _choice(t, "family", "constant", KINETIC_FAMILIES, where, ctx)
    lim = dict(minimum=0.0, maximum=MAX_KERNEL_EXPONENT)
    cfg = KineticConfig(
        family,
        _number(t, "scale", 1.0, where, ctx, positive=True),
        _number(t, "p_self", 0.0, where, ctx, **lim),
        _number(t, "p_partner", 0.0, where, ctx, **lim),
        _number(t, "p_R", 0.0, where, ctx, **lim),
    )
    if family != "power" and (cfg.p_self or cfg.p_partner):
        raise ctx.error(where, "p_self", f"energy exponents need family = 'power', not {family!r}")
    if family != "one_minus_R_power" and cfg.p_R:
        raise ctx.error(where, "p_R", f"the (1 - R) exponent needs family = 'one_minus_R_power', not {family!r}")
    return cfg


def _parse_angular(t, where, ctx) -> AngularConfig:
    _check_keys(t, _names(AngularConfig), where, ctx)
    family = _choice(t, "family", "constant", ANGULAR_FAMILIES, where, ctx)
    exponent = _number(t, "exponent", 0.0, where, ctx, minimum=0.0, maximum=MAX_KERNEL_EXPONENT)
    if family == "constant" and exponent:
        raise ctx.error(where, "exponent", "an angular exponent needs family = 'power'")
    return AngularConfig(family, _number(t, "scale", 1.0, where, ctx, positive=True), exponent)


def _parse_channel(t, where, ctx) -> ChannelKernel:
    _check_keys(t, ("phi", "b"), where, ctx)
    return ChannelKernel(
        _parse_kinetic(_table(t, "phi", where, ctx), f"{where}.phi", ctx),
        _parse_angular(_table(t, "b", where, ctx), f"{where}.b", ctx),
    )


_PAIR_NAMES = tuple(f"{i}-{j}" for i in range(1, 5) for j in range(i, 5))


def _parse_kernel(t, ctx) -> KernelConfig:
    where = "kernel"
    _check_keys(t, ("gamma", "elastic", "reaction", "pairs"), where, ctx)
    pairs_raw = _table(t, "pairs", where, ctx)
    _check_keys(pairs_raw, _PAIR_NAMES, f"{where}.pairs", ctx)
    pairs = tuple(
        (name, _parse_channel(pairs_raw[name], f"{where}.pairs.{name}", ctx)) for name in sorted(pairs_raw)
    )
    return KernelConfig(
        _number(t, "gamma", 1.0, where, ctx, minimum=1.0, maximum=MAX_KERNEL_EXPONENT),
        _parse_channel(_table(t, "elastic", where, ctx), f"{where}.elastic", ctx),
        _parse_channel(_table(t, "reaction", where, ctx), f"{where}.reaction", ctx),
        pairs,
    )


def _parse_profile(t, where, ctx, *, positive) -> ProfileConfig:
    _check_keys(t, _names(ProfileConfig), where, ctx)
    p = ProfileConfig(
        _choice(t, "profile", "uniform", PROFILES, where, ctx),
        _number(t, "value", 1.0, where, ctx, minimum=0.0),
        _number(t, "amplitude", 0.0, where, ctx),
        _number(t, "center", 0.5, where, ctx, minimum=0.0, maximum=1.0),
        _number(t, "width", 0.1, where, ctx, positive=True),
        _number(t, "right", 1.0, where, ctx, minimum=0.0),
        _number(t, "position", 0.5, where, ctx, minimum=0.0, maximum=1.0),
    )
    low = min(p.value, p.right if p.profile == "step" else p.value, p.value + min(p.amplitude, 0.0))
    if low < 0 or (positive and low <= 0):
        raise ctx.error(where, "value", "the profile must stay " + ("positive" if positive else "non-negative"))
    return p


def _build(raw: dict, ctx: _Context, base_dir: str) -> ScenarioConfig:
    top = ("species", "k_B", "seed", "kernel", "grid", "time", "initial", "diffusion", "coefficients", "verify", "output")
    _check_keys(raw, top, "", ctx)
    species = _parse_species(raw.get("species"), ctx)

    grid_t = _table(raw, "grid", "", ctx)
    _check_keys(grid_t, _names(GridConfig), "grid", ctx)
    grid = GridConfig(
        _number(grid_t, "cells", 64, "grid", ctx, integer=True, minimum=1),
        _number(grid_t, "length", 1.0, "grid", ctx, positive=True),
    )
    time_t = _table(raw, "time", "", ctx)
    _check_keys(time_t, _names(TimeConfig), "time", ctx)
    time = TimeConfig(
        _number(time_t, "t_end", 10.0, "time", ctx, minimum=0.0),
        _number(time_t, "dt", 0.0, "time", ctx, minimum=0.0),
        _choice(time_t, "integrator", "explicit", INTEGRATORS, "time", ctx),
        _number(time_t, "output_every", 100, "time", ctx, integer=True, minimum=1),
    )
    init_t = _table(raw, "initial", "", ctx)
    _check_keys(init_t, _names(InitialConfig), "initial", ctx)
    initial = InitialConfig(
        *(
            _parse_profile(_table(init_t, k, "initial", ctx), f"initial.{k}", ctx, positive=(k == "T"))
            for k in ("n1", "n2", "n3", "n4", "T")
        )
    )
    diff_t = _table(raw, "diffusion", "", ctx)
    _check_keys(diff_t, _names(DiffusionConfig), "diffusion", ctx)
    diffusion = DiffusionConfig(
        _choice(diff_t, "closure", "zero_mass_flux", CLOSURES, "diffusion", ctx),
        _number(diff_t, "safety", 0.4, "diffusion", ctx, positive=True, maximum=0.5),
    )
    coef_t = _table(raw, "coefficients", "", ctx)
    _check_keys(coef_t, _names(CoefficientsConfig), "coefficients", ctx)
    temps = coef_t.get("temperatures", [1.0])
    if not isinstance(temps, list) or any(isinstance(t, bool) or not isinstance(t, (int, float)) for t in temps):
        raise ctx.error("coefficients", "temperatures", "expected a list of numbers")
    if any(not (math.isfinite(t) and t > 0) for t in temps):
        raise ctx.error("coefficients", "temperatures", "temperatures must be positive")
    ver_t = _table(raw, "verify", "", ctx)
    _check_keys(ver_t, _names(VerifyConfig), "verify", ctx)
    verify = VerifyConfig(
        _number(ver_t, "mc_samples", 200_000, "verify", ctx, integer=True, minimum=1),
        _number(ver_t, "threads", 1, "verify", ctx, integer=True, minimum=1),
        _choice(ver_t, "fault_injection", "none", ("none", "corrupt_D"), "verify", ctx),
    )
    out_t = _table(raw, "output", "", ctx)
    _check_keys(out_t, _names(OutputConfig), "output", ctx)
    seed = _number(raw, "seed", 0, "", ctx, integer=True, minimum=0, maximum=2**64 - 1)
    cfg = ScenarioConfig(
        species=species,
        k_B=_number(raw, "k_B", 1.0, "", ctx, positive=True),
        seed=seed,
        kernel=_parse_kernel(_table(raw, "kernel", "", ctx), ctx),
        grid=grid,
        time=time,
        initial=initial,
        diffusion=diffusion,
        coefficients=CoefficientsConfig(tuple(float(t) for t in temps)),
        verify=verify,
        output=OutputConfig(str(out_t.get("dir", "out"))),
        base_dir=base_dir,
    )
    try:
        cfg.reaction()
        cfg.kernel_spec()
    except (DomainError, OSError) as exc:
        raise ConfigError(f"{ctx.path}: {exc}") from exc
    return cfg


def parse_config_text(text: str, path: str = "<string>", base_dir: str = ".") -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from exc
    return _build(raw, _Context(text, path), base_dir)


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config_text(text, str(path), str(path.parent))


# -- serialization ----------------------------------------------------------


def _channel_table(ch: ChannelKernel) -> dict:
    return {"phi": asdict(ch.phi), "b": asdict(ch.b)}


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    species = []
    for s in cfg.species:
        entry: dict[str, Any] = {"mass": s.mass, "binding_energy": s.binding_energy}
        if s.weight_table is not None:
            entry["weight_table"] = s.weight_table
        else:
            entry["alpha"] = s.alpha
        species.append(entry)
    kernel = {
        "gamma": cfg.kernel.gamma,
        "elastic": _channel_table(cfg.kernel.elastic),
        "reaction": _channel_table(cfg.kernel.reaction),
    }
    if cfg.kernel.pairs:
        kernel["pairs"] = {name: _channel_table(ch) for name, ch in cfg.kernel.pairs}
    return {
        "seed": cfg.seed,
        "k_B": cfg.k_B,
        "species": species,
        "kernel": kernel,
        "grid": asdict(cfg.grid),
        "time": asdict(cfg.time),
        "initial": {k: asdict(getattr(cfg.initial, k)) for k in ("n1", "n2", "n3", "n4", "T")},
        "diffusion": asdict(cfg.diffusion),
        "coefficients": {"temperatures": list(cfg.coefficients.temperatures)},
        "verify": asdict(cfg.verify),
        "output": asdict(cfg.output),
    }


def serialize_config(cfg: ScenarioConfig) -> str:
    doc = tomlkit.document()
    data = to_dict(cfg)
    for key in ("seed", "k_B"):
        doc.add(key, data.pop(key))
    species = tomlkit.aot()
    for entry in data.pop("species"):
        species.append(tomlkit.item(entry))
    doc.add("species", species)
    for key, value in data.items():
        doc.add(key, tomlkit.item(value))
    return tomlkit.dumps(doc)
