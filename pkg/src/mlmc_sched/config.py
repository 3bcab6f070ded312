"""Line-oriented configuration: ``key = value`` entries under ``[section]``
headers. Every tuning constant of the package appears here with its default,
so a config file only lists overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

__all__ = ["AppConfig", "ConfigError", "load_config", "DEFAULTS_TEXT"]


class ConfigError(ValueError):
    """Unparseable or unknown configuration content (carries line info)."""


@dataclass(frozen=True)
class MachineSection:
    p_max: int = 8192
    p0_min: int = 1
    s_window: int = 4


@dataclass(frozen=True)
class PerfSection:
    serial_fraction_b: float = 0.02
    factor_kind: str = "constant"  # constant | empirical | half-normal
    factor_var: float = 0.0
    histogram_csv: str = ""
    t_matrix_csv: str = ""


@dataclass(frozen=True)
class SaSection:
    t0: float = 1.0e3
    cooling: float = 0.8
    budget: int = 4000
    mutation: str = "hybrid-b"
    gaussian_rate: float = 0.2
    hybrid_rate: float = 0.1
    seeds: int = 10


@dataclass(frozen=True)
class RobustSection:
    mu_start: int = 64
    mu_cap: int = 512


@dataclass(frozen=True)
class MlmcSection:
    eps: float = 0.02
    split_weight: float = 0.5
    n_init: int = 16
    bessel: bool = False
    adaptive_split: bool = False
    alpha: float = 1.0 / 3.0
    beta: float = 2.0 / 3.0
    gamma: float = 1.0
    max_iterations: int = 100
    # synthetic-backend constants (bias, variance, cost)
    c_b: float = 0.1
    c_v: float = 0.01
    c_c: float = 1.0


@dataclass(frozen=True)
class PdeSection:
    levels: int = 3
    n0: int = 4
    sigma2: float = 1.0
    lam: float = 0.2
    qoi: str = "flux"
    v_per_level: int = 2
    pre_smooth: int = 4
    post_smooth: int = 4
    residual_tol: float = 1.0e-5


@dataclass(frozen=True)
class AppConfig:
    machine: MachineSection = field(default_factory=MachineSection)
    perf: PerfSection = field(default_factory=PerfSection)
    sa: SaSection = field(default_factory=SaSection)
    robust: RobustSection = field(default_factory=RobustSection)
    mlmc: MlmcSection = field(default_factory=MlmcSection)
    pde: PdeSection = field(default_factory=PdeSection)
    root_seed: int = 20170825


_SECTIONS = {
    "machine": MachineSection,
    "perf": PerfSection,
    "sa": SaSection,
    "robust": RobustSection,
    "mlmc": MlmcSection,
    "pde": PdeSection,
}


def _coerce(raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return target_type(raw)


def load_config(path: str | Path | None) -> AppConfig:
    """Parse a config file into an :class:`AppConfig`; None gives defaults."""
    if path is None:
        return AppConfig()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = Path(path).read_text()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    kwargs = {}
    for section_name, section_cls in _SECTIONS.items():
        if not parser.has_section(section_name):
            continue
        known = {f.name: f.type for f in fields(section_cls)}
        types = {f.name: type(getattr(section_cls(), f.name)) for f in fields(section_cls)}
        values = {}
        for key, raw in parser.items(section_name):
            if key not in known:
                line = _line_of(text, section_name, key)
                raise ConfigError(f"{path}:{line}: unknown key {key!r} in [{section_name}]")
            try:
                values[key] = _coerce(raw, types[key])
            except ValueError as exc:
                line = _line_of(text, section_name, key)
                raise ConfigError(f"{path}:{line}: bad value for {key!r}: {exc}") from exc
        kwargs[section_name] = section_cls(**values)
    root_seed = AppConfig().root_seed
    if parser.has_section("run") and parser.has_option("run", "root_seed"):
        root_seed = int(parser.get("run", "root_seed"))
    return AppConfig(root_seed=root_seed, **kwargs)


def _line_of(text: str, section: str, key: str) -> int:
    in_section = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            in_section = stripped[1:-1] == section
        elif in_section and stripped.split("=")[0].strip() == key:
            return lineno
    return 0


DEFAULTS_TEXT = """\
# all keys with their defaults; uncomment to override
[run]
# root_seed = 20170825

[machine]
# p_max = 8192
# p0_min = 1
# s_window = 4

[perf]
# serial_fraction_b = 0.02
# factor_kind = constant
# factor_var = 0.0
# histogram_csv =
# t_matrix_csv =

[sa]
# t0 = 1000.0
# cooling = 0.8
# budget = 4000
# mutation = hybrid-b
# gaussian_rate = 0.2
# hybrid_rate = 0.1
# seeds = 10

[robust]
# mu_start = 64
# mu_cap = 512

[mlmc]
# eps = 0.02
# split_weight = 0.5
# n_init = 16
# bessel = false
# adaptive_split = false
# alpha = 0.3333333333333333
# beta = 0.6666666666666666
# gamma = 1.0
# c_b = 0.1
# c_v = 0.01
# c_c = 1.0

[pde]
# levels = 3
# n0 = 4
# sigma2 = 1.0
# lam = 0.2
# qoi = flux
"""
