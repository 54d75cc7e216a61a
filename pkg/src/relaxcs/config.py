"""Experiment configuration: flat key = value text with section headers.

The canonical serialization (sorted sections and keys) feeds the config
hash that every metrics row carries, so results stay traceable to the exact
configuration that produced them.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

from .core import ReconParams
from .phantom import PRESETS
from .recon import METHOD_NAMES

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "config_hash"]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


_METHOD_ALIASES = {
    "d": "decoupled", "decoupled": "decoupled",
    "j": "joint_admm", "joint": "joint_admm", "joint_admm": "joint_admm",
    "m": "model_based", "model": "model_based", "model_based": "model_based",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; defaults follow the six-echo GRE protocol."""

    rows: int = 64
    cols: int = 64
    preset: str = "shepp-like"
    phantom_seed: int = 1
    n_coils: int = 4
    n_echoes: int = 6
    te_first: float = 7.64
    te_spacing: float = 5.41
    noise_sigma: float = 0.0
    scheme: str = "complementary"
    rates: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    d_mins: Tuple[float, ...] = (0.0,)
    calib_radius: int = 6
    pattern_seed: int = 0
    noise_seed: int = 0
    methods: Tuple[str, ...] = ("decoupled", "joint_admm", "model_based")
    params: Dict[str, ReconParams] = field(default_factory=dict)
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ConfigError("grid must be at least 2x2")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown phantom preset {self.preset!r}")
        if self.n_coils < 1:
            raise ConfigError("need at least one coil")
        if self.n_echoes < 2:
            raise ConfigError("need at least two echoes")
        if self.scheme not in ("fixed", "complementary"):
            raise ConfigError(f"unknown sampling scheme {self.scheme!r}")
        if not self.rates:
            raise ConfigError("at least one sampling rate is required")
        for r in self.rates:
            if not (0.0 < r <= 1.0):
                raise ConfigError(f"rate {r} outside (0, 1]")
        if len(self.d_mins) not in (1, len(self.rates)):
            raise ConfigError("d_min must be a single value or one per rate")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ConfigError(f"unknown method {m!r}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    def d_min_for(self, rate_index: int) -> float:
        return self.d_mins[rate_index if len(self.d_mins) > 1 else 0]

    def params_for(self, method: str) -> ReconParams:
        return self.params.get(method, self.params.get("", ReconParams()))

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def canonical(self) -> str:
        """Stable text form: sorted sections/keys, full-precision floats."""
        parts = []
        parts.append("[acquisition]")
        parts.append(f"n_coils = {self.n_coils}")
        parts.append(f"n_echoes = {self.n_echoes}")
        parts.append(f"noise_seed = {self.noise_seed}")
        parts.append(f"noise_sigma = {self.noise_sigma!r}")
        parts.append(f"te_first = {self.te_first!r}")
        parts.append(f"te_spacing = {self.te_spacing!r}")
        parts.append("[methods]")
        parts.append(f"methods = {','.join(self.methods)}")
        for m in sorted(set(self.params)):
            p = self.params[m]
            name = m if m else "base"
            parts.append(f"[params.{name}]")
            for key in sorted(vars(p)):
                parts.append(f"{key} = {getattr(p, key)!r}")
        parts.append("[phantom]")
        parts.append(f"cols = {self.cols}")
        parts.append(f"preset = {self.preset}")
        parts.append(f"rows = {self.rows}")
        parts.append(f"seed = {self.phantom_seed}")
        parts.append("[sampling]")
        parts.append(f"calib_radius = {self.calib_radius}")
        parts.append(f"d_min = {','.join(repr(d) for d in self.d_mins)}")
        parts.append(f"pattern_seed = {self.pattern_seed}")
        parts.append(f"rates = {','.join(repr(r) for r in self.rates)}")
        parts.append(f"scheme = {self.scheme}")
        return "\n".join(parts) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.canonical().encode("ascii")).hexdigest()[:12]


def _parse_floats(text: str) -> Tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _params_from_section(sec, base: ReconParams) -> ReconParams:
    kw = {}
    valid = set(vars(base))
    for key, val in sec.items():
        if key not in valid:
            raise ConfigError(f"unknown parameter {key!r}")
        if key in ("outer_iters", "inner_iters", "prox_iters", "power_iters"):
            kw[key] = int(val)
        elif key == "e_max":
            kw[key] = None if val.lower() in ("none", "auto") else float(val)
        else:
            kw[key] = float(val)
    return base.with_(**kw)


def parse_config(text: str, overrides: Dict[str, str] = None) -> ExperimentConfig:
    """Parse INI-style configuration text, with optional key overrides.

    Overrides use dotted keys like ``sampling.rates`` and take precedence
    over the file contents.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    for dotted, val in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, val)

    kw = {}
    if cp.has_section("phantom"):
        sec = cp["phantom"]
        kw["rows"] = sec.getint("rows", 64)
        kw["cols"] = sec.getint("cols", 64)
        kw["preset"] = sec.get("preset", "shepp-like")
        kw["phantom_seed"] = sec.getint("seed", 1)
    if cp.has_section("acquisition"):
        sec = cp["acquisition"]
        kw["n_coils"] = sec.getint("n_coils", 4)
        kw["n_echoes"] = sec.getint("n_echoes", 6)
        kw["te_first"] = sec.getfloat("te_first", 7.64)
        kw["te_spacing"] = sec.getfloat("te_spacing", 5.41)
        kw["noise_sigma"] = sec.getfloat("noise_sigma", 0.0)
        kw["noise_seed"] = sec.getint("noise_seed", 0)
    if cp.has_section("sampling"):
        sec = cp["sampling"]
        kw["scheme"] = sec.get("scheme", "complementary")
        if "rates" in sec:
            kw["rates"] = _parse_floats(sec["rates"])
        if "d_min" in sec:
            kw["d_mins"] = _parse_floats(sec["d_min"])
        kw["calib_radius"] = sec.getint("calib_radius", 6)
        kw["pattern_seed"] = sec.getint("pattern_seed", 0)
    if cp.has_section("methods"):
        raw = cp["methods"].get("methods", "")
        if raw:
            names = []
            for tok in raw.replace(",", " ").split():
                alias = tok.strip().lower()
                if alias not in _METHOD_ALIASES:
                    raise ConfigError(f"unknown method {tok!r}")
                names.append(_METHOD_ALIASES[alias])
            kw["methods"] = tuple(names)
    base = ReconParams()
    if cp.has_section("params"):
        base = _params_from_section(cp["params"], base)
    params = {"": base}
    for section in cp.sections():
        if section.startswith("params."):
            name = section.split(".", 1)[1]
            alias = _METHOD_ALIASES.get(name.lower())
            if alias is None:
                raise ConfigError(f"unknown method section {section!r}")
            params[alias] = _params_from_section(cp[section], base)
    kw["params"] = params
    if cp.has_section("output"):
        sec = cp["output"]
        kw["output_dir"] = sec.get("dir", "results")
        kw["workers"] = sec.getint("workers", 1)

    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
