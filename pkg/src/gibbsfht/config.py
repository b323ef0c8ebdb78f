"""Run configuration.

Configs are TOML files written with dotted keys::

    potential.geometry = "chain1d"
    potential.d = 32
    sampler.scale = 12.0

Unknown keys and out-of-range values raise :class:`ConfigError`. Times
(``burnin_time``, ``baseline_time``) and ``dt`` are given without the
``scale`` factor; the simulated Langevin step is ``dt * scale``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class PotentialConfig:
    geometry: str = "chain1d"
    d: int = 32
    lambda_factor: float = 0.1
    cubic_a: float = 0.0


@dataclass(frozen=True)
class SamplerConfig:
    scale: float = math.nan  # required
    beta0: float = 1.0
    beta: float = 3.0
    schedule: str = "geometric"
    levels: int = 10
    mala_steps: int = 700
    dt: float = 0.0005
    burnin_time: float = 7.0
    baseline_time: float = 0.0  # 0: same number of steps as burn-in + AIS
    n_ensembles: int = 60
    particles: int = 100
    ula_substeps: int = 0  # 0: round(1 / (levels * dt * scale))
    stretch: float = 2.0
    init: str = "all_plus"
    trace_every: int = 100
    snooker: bool = True
    birth_death: bool = True

    @property
    def step(self):
        """Simulated Langevin time step."""
        return self.dt * self.scale


@dataclass(frozen=True)
class FhtConfig:
    q: int = 15
    half_width: float = 2.5
    rank: int = 3
    oversampling: float = 2.0
    svd_tol: float = 1e-8
    sketch_seed: int = 0
    site_order: str = "auto"


@dataclass(frozen=True)
class IoConfig:
    out: str = "run"
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    fht: FhtConfig = field(default_factory=FhtConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, section, **changes):
        new = dataclasses.replace(getattr(self, section), **changes)
        cfg = dataclasses.replace(self, **{section: new})
        validate(cfg)
        return cfg


_CHOICES = {
    ("potential", "geometry"): {"chain1d", "grid2d"},
    ("sampler", "schedule"): {"linear", "geometric"},
    ("sampler", "init"): {"all_plus", "all_minus", "gaussian"},
    ("fht", "site_order"): {"auto", "identity", "morton2d"},
}

# (section, key) -> predicate, message
_RANGES = {
    ("potential", "d"): (lambda v: v >= 2, ">= 2"),
    ("potential", "lambda_factor"): (lambda v: v > 0, "> 0"),
    ("sampler", "scale"): (lambda v: v > 0, "> 0 (required)"),
    ("sampler", "beta0"): (lambda v: v > 0, "> 0"),
    ("sampler", "levels"): (lambda v: v >= 1, ">= 1"),
    ("sampler", "mala_steps"): (lambda v: v >= 0, ">= 0"),
    ("sampler", "dt"): (lambda v: v > 0, "> 0"),
    ("sampler", "burnin_time"): (lambda v: v >= 0, ">= 0"),
    ("sampler", "baseline_time"): (lambda v: v >= 0, ">= 0"),
    ("sampler", "n_ensembles"): (lambda v: v >= 1, ">= 1"),
    ("sampler", "particles"): (lambda v: v >= 1, ">= 1"),
    ("sampler", "ula_substeps"): (lambda v: v >= 0, ">= 0"),
    ("sampler", "stretch"): (lambda v: v > 1, "> 1"),
    ("sampler", "trace_every"): (lambda v: v >= 1, ">= 1"),
    ("fht", "q"): (lambda v: v >= 1, ">= 1"),
    ("fht", "half_width"): (lambda v: v > 0, "> 0"),
    ("fht", "rank"): (lambda v: v >= 1, ">= 1"),
    ("fht", "oversampling"): (lambda v: v >= 1.5, ">= 1.5"),
    ("fht", "svd_tol"): (lambda v: 0 <= v < 1, "in [0, 1)"),
    ("fht", "sketch_seed"): (lambda v: 0 <= v < 2**64, "in [0, 2**64)"),
    ("io", "seed"): (lambda v: 0 <= v < 2**64, "in [0, 2**64)"),
    ("io", "workers"): (lambda v: v >= 1, ">= 1"),
}


def _coerce(section, key, value, default):
    name = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{name}: must be finite")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def validate(cfg: RunConfig):
    for section in ("potential", "sampler", "fht", "io"):
        block = getattr(cfg, section)
        for f in dataclasses.fields(block):
            value = getattr(block, f.name)
            key = (section, f.name)
            if key in _CHOICES and value not in _CHOICES[key]:
                raise ConfigError(f"{section}.{f.name}: {value!r} not in {sorted(_CHOICES[key])}")
            if key in _RANGES:
                ok, msg = _RANGES[key]
                if isinstance(value, float) and math.isnan(value) or not ok(value):
                    raise ConfigError(f"{section}.{f.name} = {value!r}: must be {msg}")
    s = cfg.sampler
    if not s.beta > s.beta0:
        raise ConfigError(f"sampler.beta = {s.beta} must exceed sampler.beta0 = {s.beta0}")
    p = cfg.potential
    if p.geometry == "grid2d" and math.isqrt(p.d) ** 2 != p.d:
        raise ConfigError(f"potential.d = {p.d} must be a perfect square for grid2d")


def from_mapping(data: dict) -> RunConfig:
    """Build a config from a nested mapping such as parsed TOML."""
    sections = {}
    for section, cls in (("potential", PotentialConfig), ("sampler", SamplerConfig),
                         ("fht", FhtConfig), ("io", IoConfig)):
        raw = data.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{section}: expected a table of dotted keys")
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(f'{section}.{k}' for k in sorted(unknown))}")
        values = {k: _coerce(section, k, v, getattr(defaults, k)) for k, v in raw.items()}
        sections[section] = cls(**values)
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    cfg = RunConfig(**sections)
    validate(cfg)
    return cfg


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    return from_mapping(data)


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg: RunConfig) -> str:
    """Flat dotted-key TOML text with every field spelled out."""
    lines = []
    for section, block in cfg.to_dict().items():
        for key, value in block.items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, str):
                text = '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
            else:
                text = repr(value)
            lines.append(f"{section}.{key} = {text}")
    return "\n".join(lines) + "\n"
