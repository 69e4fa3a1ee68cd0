"""Run configuration: INI files with one section per module, overridable field by field."""

from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass, field

from .control import SamplingConfig
from .render import RenderParams
from .testbed import DriftModel, TestbedGeometry
from .trend import AnalysisConfig, Label
from .vision import HcdParams

DEFAULT_SCHEDULE = (10e3, 20e3, 4e6, 2e6)


class ConfigError(ValueError):
    """Bad configuration; ``field`` is the dotted path when one field is to blame."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    frames: int | None = None  # frame budget; empty means enough for the whole schedule
    out_dir: str = "out"
    emit_frames: bool = False
    n_beads: int = 100
    match_tolerance_px: float = 3.0

    def __post_init__(self):
        if self.frames is not None and self.frames < 0:
            raise ValueError("frames must be >= 0")
        if self.n_beads < 0:
            raise ValueError("n_beads must be >= 0")
        if not self.match_tolerance_px > 0:
            raise ValueError("match_tolerance_px must be > 0")


@dataclass(frozen=True)
class DriftOptions:
    crossover_freq: float = 500e3
    max_speed: float = 0.15
    diffusion_sigma: float = 0.03

    def __post_init__(self):
        DriftModel(self.crossover_freq, self.max_speed, self.diffusion_sigma)


@dataclass(frozen=True)
class ScheduleOptions:
    frequencies: tuple[float, ...] = DEFAULT_SCHEDULE

    def __post_init__(self):
        if not self.frequencies:
            raise ValueError("frequencies must not be empty")
        if len(set(self.frequencies)) != len(self.frequencies):
            raise ValueError("frequencies must not repeat")
        if any(not f > 0 for f in self.frequencies):
            raise ValueError("frequencies must be > 0")


@dataclass(frozen=True)
class CrossoverOptions:
    f_low: float = 20e3
    f_high: float = 2e6
    tolerance_ratio: float = 1.2
    max_probes: int | None = None
    probe_ticks: int = 120  # ticks each probe step is watched

    def __post_init__(self):
        if self.probe_ticks < 1:
            raise ValueError("probe_ticks must be >= 1")
        if not 0 < self.f_low < self.f_high:
            raise ValueError("need 0 < f_low < f_high")
        if not self.tolerance_ratio > 1:
            raise ValueError("tolerance_ratio must be > 1")
        if self.max_probes is not None and self.max_probes < 1:
            raise ValueError("max_probes must be >= 1")


# section name -> dataclass holding its fields
SECTIONS: dict[str, type] = {
    "run": RunOptions,
    "geometry": TestbedGeometry,
    "drift": DriftOptions,
    "render": RenderParams,
    "hcd": HcdParams,
    "analysis": AnalysisConfig,
    "controller": SamplingConfig,
    "schedule": ScheduleOptions,
    "crossover": CrossoverOptions,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunOptions = field(default_factory=RunOptions)
    geometry: TestbedGeometry = field(default_factory=TestbedGeometry)
    drift: DriftOptions = field(default_factory=DriftOptions)
    render: RenderParams = field(default_factory=RenderParams)
    hcd: HcdParams = field(default_factory=HcdParams)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    controller: SamplingConfig = field(default_factory=SamplingConfig)
    schedule: ScheduleOptions = field(default_factory=ScheduleOptions)
    crossover: CrossoverOptions = field(default_factory=CrossoverOptions)

    def testbench(self):
        from .system import Testbench

        d = self.drift
        return Testbench(
            geometry=self.geometry,
            drift=DriftModel(d.crossover_freq, d.max_speed, d.diffusion_sigma, rng_seed=self.run.seed),
            render=self.render,
            hcd=self.hcd,
            analysis=self.analysis,
            sampling=self.controller,
            n_beads=self.run.n_beads,
            seed=self.run.seed,
            match_tolerance_px=self.run.match_tolerance_px,
        )


def field_paths() -> list[str]:
    """Every configurable field as ``section.name``."""
    return [f"{s}.{f.name}" for s, cls in SECTIONS.items() for f in dataclasses.fields(cls)]


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _parse_bands(text: str):
    bands = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != 3:
            raise ValueError(f"band {chunk!r} must be 'f_low f_high LABEL'")
        lo, hi = float(parts[0]), float(parts[1])
        try:
            label = Label(parts[2].upper())
        except ValueError:
            raise ValueError(f"unknown label {parts[2]!r}") from None
        if not lo < hi:
            raise ValueError(f"band {chunk!r} needs f_low < f_high")
        bands.append((lo, hi, label))
    return tuple(bands)


def _convert(text: str, tp):
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType) and type(None) in args:
        if text == "" or text.lower() == "none":
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _convert(text, inner)
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if tp is int:
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if tp is float:
        return float(text)
    if tp is str:
        return text
    if origin is tuple and args and args[0] is float:
        items = [t for t in text.replace(",", " ").split() if t]
        return tuple(float(t) for t in items)
    if origin is tuple:
        return _parse_bands(text)
    raise TypeError(f"unsupported field type {tp!r}")


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(f"{lo!r} {hi!r} {Label(lab).value}" for lo, hi, lab in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def build_config(values: dict[str, str]) -> RunConfig:
    """Build a RunConfig from ``{"section.field": text}``; missing fields take defaults."""
    grouped: dict[str, dict] = {s: {} for s in SECTIONS}
    known = set(field_paths())
    for path, text in values.items():
        if path not in known:
            raise ConfigError("unknown configuration field", path)
        section, name = path.split(".", 1)
        tp = _hints(SECTIONS[section])[name]
        try:
            grouped[section][name] = _convert(text, tp)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), path) from None
    parts = {}
    for section, cls in SECTIONS.items():
        try:
            parts[section] = cls(**grouped[section])
        except ValueError as exc:
            raise ConfigError(str(exc), _blame(section, cls, str(exc))) from None
    if parts["controller"].settle_timeout <= parts["analysis"].k:
        raise ConfigError(
            f"must exceed analysis.k ({parts['analysis'].k}), got {parts['controller'].settle_timeout}",
            "controller.settle_timeout",
        )
    return RunConfig(**parts)


def _blame(section, cls, message) -> str:
    # point at the first field the validator message names
    names = sorted((f.name for f in dataclasses.fields(cls)), key=len, reverse=True)
    for name in names:
        if name in message:
            return f"{section}.{name}"
    return section


def read_ini(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError("unknown section", section)
        for key, value in parser.items(section):
            out[f"{section}.{key}"] = value
    return out


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """File values first, then ``overrides`` on top."""
    values: dict[str, str] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(read_ini(fh.read()))
    values.update(overrides or {})
    return build_config(values)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {format_value(getattr(obj, f.name))}".rstrip())
        lines.append("")
    return "\n".join(lines)
