"""Declarative experiment configs: a flat, sectioned key-value format.

One experiment per file, INI-style sections ([experiment], [problem],
[noise], [schedule], [optimizer], [checks], [outputs]).  An ``include``
key in [experiment] pulls defaults from another file, with the including
file winning key-by-key.  Parsing and serialization round-trip.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .noise import NoiseSpec, canonical_family
from .optimizers import ALGORITHMS

_SCHEDULE_KINDS = ("constant", "inverse_time", "nonconvex", "strongly_convex", "cclip")
_PROBLEM_KINDS = ("quadratic", "nonconvex")
_DOMAIN_KINDS = ("none", "ball", "box", "interval")


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class ProblemSection:
    kind: str = "quadratic"
    dimension: int = 1
    mu: float = 1.0
    x_star: list[float] = field(default_factory=lambda: [0.0])
    x0: list[float] = field(default_factory=lambda: [1.0])
    domain: str = "none"
    radius: float | str = "auto"  # ball; "auto" = 2 * ||x0 - x_star||
    lo: float = 0.0  # interval
    hi: float = 1.0
    lower: list[float] = field(default_factory=list)  # box
    upper: list[float] = field(default_factory=list)


@dataclass
class NoiseSection:
    family: str = "gaussian"
    tail_index: float = 2.0
    scale: float = 1.0
    per_coordinate_scales: list[float] = field(default_factory=list)

    def build(self, dimension: int) -> NoiseSpec:
        return NoiseSpec(
            family=self.family,
            dimension=dimension,
            scale=self.scale,
            tail_index=self.tail_index,
            per_coordinate_scales=(
                None if not self.per_coordinate_scales else self.per_coordinate_scales
            ),
        )


@dataclass
class ScheduleSection:
    kind: str = "constant"
    eta: float = 0.1
    tau: float = math.inf
    c: float = 1.0
    tau_base: float = math.inf
    tau_exponent: float = 0.0
    alpha: float = 1.5
    G: float | str = "auto"
    sigma: float | str = "auto"
    f0: float | str = "auto"
    L: float | str = "auto"
    mu: float | str = "auto"
    B: list[float] | str = "auto"
    variant: str = "full"
    calibration_draws: int = 100_000


@dataclass
class OptimizerSection:
    algorithm: str = "sgd"
    averaging: bool = False
    beta1: float = 0.9
    beta2: float = 0.99
    acclip_alpha: float = 1.0
    epsilon: float = 1e-5
    warmup: int = 0
    record: str = "log"  # "log", an integer stride, or a comma list


@dataclass
class ChecksSection:
    slope_id: str = ""
    slope_metric: str = "suboptimality"
    slope_kmin: float = 1.0
    slope_kmax: float = math.inf
    slope_expect: float | str = ""
    slope_tol: float = 0.15
    envelope: str = ""  # "", "strongly_convex", "cclip"
    envelope_id: str = ""
    envelope_kmin: int = 10
    ratio_id: str = ""
    ratio_metric: str = ""
    ratio_k_hi: int = 0
    ratio_k_lo: int = 0
    ratio_stat: str = "median"
    ratio_min: float | str = ""
    ratio_max: float | str = ""

    def active(self) -> bool:
        return bool(self.slope_expect != "" or self.envelope or self.ratio_metric)


@dataclass
class OutputsSection:
    csv: str = ""
    report: str = ""
    plots: bool = False


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seeds: int = 1
    master_seed: int = 0
    iterations: int = 1000
    problem: ProblemSection = field(default_factory=ProblemSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    checks: ChecksSection = field(default_factory=ChecksSection)
    outputs: OutputsSection = field(default_factory=OutputsSection)


_SECTION_TYPES = {
    "problem": ProblemSection,
    "noise": NoiseSection,
    "schedule": ScheduleSection,
    "optimizer": OptimizerSection,
    "checks": ChecksSection,
    "outputs": OutputsSection,
}

_LIST_KEYS = {"x_star", "x0", "lower", "upper", "per_coordinate_scales"}
_AUTO_KEYS = {"G", "sigma", "f0", "L", "mu", "radius", "slope_expect", "ratio_min", "ratio_max"}


def _coerce(section: str, key: str, raw: str, target):
    raw = raw.strip()
    if key in _LIST_KEYS:
        return _parse_floats(raw) if raw else []
    if key == "B":
        return "auto" if raw.lower() == "auto" else _parse_floats(raw)
    if key in _AUTO_KEYS:
        if raw.lower() in ("auto", ""):
            return "auto" if raw.lower() == "auto" else ""
        return float(raw)
    if isinstance(target, bool):
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigurationError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    if isinstance(target, int) and not isinstance(target, bool):
        return int(float(raw))
    if isinstance(target, float):
        return float(raw)
    return raw


def _apply(cfg: ExperimentConfig, parser: configparser.ConfigParser, path: Path):
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key == "include":
                continue
            if key == "name":
                cfg.name = raw.strip()
            elif key in ("seeds", "master_seed", "iterations"):
                setattr(cfg, key, int(float(raw)))
            else:
                raise ConfigurationError(f"{path}: unknown key [experiment] {key}")
    for section, obj in (
        ("problem", cfg.problem),
        ("noise", cfg.noise),
        ("schedule", cfg.schedule),
        ("optimizer", cfg.optimizer),
        ("checks", cfg.checks),
        ("outputs", cfg.outputs),
    ):
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if not hasattr(obj, key):
                raise ConfigurationError(f"{path}: unknown key [{section}] {key}")
            setattr(obj, key, _coerce(section, key, raw, getattr(obj, key)))


def _read_parser(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep key case: G, B, L are distinct constants
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return parser


def load_config(path: str | Path, _seen: frozenset = frozenset()) -> ExperimentConfig:
    """Parse a config file, following includes, and validate it."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    resolved = path.resolve()
    if resolved in _seen:
        raise ConfigurationError(f"config include cycle at {path}")
    parser = _read_parser(path)
    include = None
    if parser.has_section("experiment") and parser.has_option("experiment", "include"):
        include = parser.get("experiment", "include").strip()
    if include:
        cfg = load_config(path.parent / include, _seen | {resolved})
    else:
        cfg = ExperimentConfig()
    _apply(cfg, parser, path)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.seeds < 1:
        raise ConfigurationError("[experiment] seeds must be >= 1")
    if cfg.iterations < 1:
        raise ConfigurationError("[experiment] iterations must be >= 1")
    p = cfg.problem
    if p.kind not in _PROBLEM_KINDS:
        raise ConfigurationError(f"[problem] kind must be one of {_PROBLEM_KINDS}")
    if p.dimension < 1:
        raise ConfigurationError("[problem] dimension must be >= 1")
    if p.kind == "quadratic" and p.mu <= 0:
        raise ConfigurationError("[problem] mu must be positive")
    if p.domain not in _DOMAIN_KINDS:
        raise ConfigurationError(f"[problem] domain must be one of {_DOMAIN_KINDS}")
    for key in ("x_star", "x0"):
        vec = getattr(p, key)
        if len(vec) not in (1, p.dimension):
            raise ConfigurationError(
                f"[problem] {key} must be a scalar or have length {p.dimension}"
            )
    cfg.noise.family = canonical_family(cfg.noise.family)
    if cfg.noise.per_coordinate_scales and len(cfg.noise.per_coordinate_scales) != p.dimension:
        raise ConfigurationError("[noise] per_coordinate_scales length must equal dimension")
    s = cfg.schedule
    if s.kind not in _SCHEDULE_KINDS:
        raise ConfigurationError(f"[schedule] kind must be one of {_SCHEDULE_KINDS}")
    if s.kind in ("nonconvex", "strongly_convex", "cclip") and not (1.0 < s.alpha <= 2.0):
        raise ConfigurationError("[schedule] alpha must lie in (1, 2]")
    o = cfg.optimizer
    if o.algorithm not in ALGORITHMS:
        raise ConfigurationError(f"[optimizer] algorithm must be one of {ALGORITHMS}")
    if o.algorithm == "proj_gclip" and p.domain == "none":
        raise ConfigurationError("[optimizer] proj_gclip requires a [problem] domain")
    if o.algorithm == "cclip" and s.kind not in ("cclip", "constant", "inverse_time"):
        raise ConfigurationError("[optimizer] cclip pairs with the cclip/constant schedules")
    c = cfg.checks
    if c.envelope and c.envelope not in ("strongly_convex", "cclip"):
        raise ConfigurationError("[checks] envelope must be 'strongly_convex' or 'cclip'")
    if c.ratio_metric and (c.ratio_k_hi <= 0 or c.ratio_k_lo <= 0):
        raise ConfigurationError("[checks] ratio checks need ratio_k_hi and ratio_k_lo")


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize to the sectioned key-value format (canonical key order)."""
    lines = ["[experiment]"]
    for key in ("name", "seeds", "master_seed", "iterations"):
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    for section, obj in (
        ("problem", cfg.problem),
        ("noise", cfg.noise),
        ("schedule", cfg.schedule),
        ("optimizer", cfg.optimizer),
        ("checks", cfg.checks),
        ("outputs", cfg.outputs),
    ):
        lines.append("")
        lines.append(f"[{section}]")
        for key in vars(obj):
            val = getattr(obj, key)
            if isinstance(val, list) and not val:
                continue
            if val == "" or val is None:
                continue
            lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path: str | Path):
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]):
    """Apply ``section.key=value`` overrides (CLI --set)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        target, raw = item.split("=", 1)
        if "." not in target:
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        section, key = target.split(".", 1)
        section = section.strip()
        key = key.strip()
        if section == "experiment":
            if key == "name":
                cfg.name = raw.strip()
            elif key in ("seeds", "master_seed", "iterations"):
                setattr(cfg, key, int(float(raw)))
            else:
                raise ConfigurationError(f"unknown override key experiment.{key}")
            continue
        if section not in _SECTION_TYPES:
            raise ConfigurationError(f"unknown override section {section!r}")
        obj = getattr(cfg, section)
        if not hasattr(obj, key):
            raise ConfigurationError(f"unknown override key {section}.{key}")
        setattr(obj, key, _coerce(section, key, raw, getattr(obj, key)))
    validate_config(cfg)
