"""Run configuration: nested dataclasses with strict dict/JSON round-tripping.

Unknown keys are rejected rather than ignored so a typo in a config file
fails loudly instead of silently running on defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        # tuples arrive from JSON as lists
        if isinstance(v, list):
            v = tuple(v)
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class VisionConfig:
    clahe_grid: tuple[int, int] = (4, 4)
    clahe_clip: float = 0.03
    corner_grid: tuple[int, int] = (4, 4)
    corner_max_per_cell: int = 8
    corner_quality: float = 0.01
    lk_window: int = 35
    lk_levels: int = 1
    frame_stride: int = 5

    def validate(self) -> None:
        if len(self.clahe_grid) != 2 or min(self.clahe_grid) < 1:
            raise ConfigError(f"bad clahe_grid {self.clahe_grid}")
        if not 0.0 < self.clahe_clip <= 1.0:
            raise ConfigError(f"clahe_clip must be in (0, 1], got {self.clahe_clip}")
        if len(self.corner_grid) != 2 or min(self.corner_grid) < 1:
            raise ConfigError(f"bad corner_grid {self.corner_grid}")
        if self.corner_max_per_cell < 1:
            raise ConfigError("corner_max_per_cell must be >= 1")
        if self.lk_window < 3 or self.lk_window % 2 == 0:
            raise ConfigError("lk_window must be an odd number >= 3")
        if self.lk_levels < 1:
            raise ConfigError("lk_levels must be >= 1")
        if self.frame_stride < 1:
            raise ConfigError("frame_stride must be >= 1")


@dataclass
class FoeConfig:
    delta: float = 1.0
    tol: float = 1.0
    angle_thresh: float = 30.0
    max_refine_iters: int = 10
    min_flows: int = 8
    ring_radii: tuple[float, float, float] = (0.15, 0.30, 0.50)
    smooth_window: int = 5
    smooth_decay: float = 0.5

    def validate(self) -> None:
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not 0.0 < self.angle_thresh < 90.0:
            raise ConfigError("angle_thresh must be in (0, 90) degrees")
        if self.min_flows < 3:
            raise ConfigError("min_flows must be >= 3")
        r = self.ring_radii
        if len(r) != 3 or not (0 < r[0] < r[1] < r[2]):
            raise ConfigError(f"ring_radii must be 3 increasing fractions, got {r}")
        if self.smooth_window < 1:
            raise ConfigError("smooth_window must be >= 1")


@dataclass
class RiskConfig:
    criterion: str = "lane"
    footprint_frac: float = 0.2
    footprint_min_px: float = 10.0

    def validate(self) -> None:
        if self.criterion not in ("lane", "proximity"):
            raise ConfigError(f"criterion must be lane or proximity, "
                              f"got {self.criterion!r}")
        if not 0.0 < self.footprint_frac <= 1.0:
            raise ConfigError("footprint_frac must be in (0, 1]")
        if self.footprint_min_px < 0:
            raise ConfigError("footprint_min_px must be >= 0")


@dataclass
class EmdConfig:
    cross_factor: float = 2.0
    k: int = 5

    def validate(self) -> None:
        if self.cross_factor < 1.0:
            raise ConfigError("cross_factor must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")


@dataclass
class BehaviorConfig:
    trim_seconds: float = 10.0
    rate: float = 10.0
    window: int = 100
    stride: int = 50
    C: float = 1.0
    kernel: str = "linear"
    bandwidth: float | None = None
    smooth_window: int = 10
    smooth_decay: float = 0.5
    rfe_top: int = 8

    def validate(self) -> None:
        if self.trim_seconds < 0:
            raise ConfigError("trim_seconds must be >= 0")
        if self.rate <= 0:
            raise ConfigError("rate must be positive")
        if self.window < 4:
            raise ConfigError("window must be >= 4")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.C <= 0:
            raise ConfigError("C must be positive")
        if self.kernel not in ("linear", "poly2", "poly3", "gaussian"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive when given")
        if self.smooth_window < 1:
            raise ConfigError("smooth_window must be >= 1")
        if not 1 <= self.rfe_top <= 54:
            raise ConfigError("rfe_top must be in [1, 54]")


_SECTIONS = {"vision": VisionConfig, "foe": FoeConfig, "risk": RiskConfig,
             "emd": EmdConfig, "behavior": BehaviorConfig}


@dataclass
class PipelineConfig:
    vision: VisionConfig = field(default_factory=VisionConfig)
    foe: FoeConfig = field(default_factory=FoeConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    emd: EmdConfig = field(default_factory=EmdConfig)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    seed: int = 0
    jobs: int = 1

    def validate(self) -> "PipelineConfig":
        for name in _SECTIONS:
            getattr(self, name).validate()
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
        unknown = set(data) - set(_SECTIONS) - {"seed", "jobs"}
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        kwargs = {}
        for name, sub in _SECTIONS.items():
            if name in data:
                kwargs[name] = _build(sub, data[name], name)
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        if "jobs" in data:
            kwargs["jobs"] = int(data["jobs"])
        return cls(**kwargs).validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    return PipelineConfig.from_dict(data)


def apply_overrides(cfg: PipelineConfig, assignments) -> PipelineConfig:
    """Apply dotted key=value overrides (e.g. "vision.lk_window=21").

    Values parse as JSON where possible, falling back to raw strings, so
    numbers, booleans, null, and lists all work from the command line.
    """
    data = cfg.to_dict()
    for item in assignments:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        parts = key.strip().split(".")
        if len(parts) == 1 and parts[0] in ("seed", "jobs"):
            data[parts[0]] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            data[parts[0]][parts[1]] = value
        else:
            raise ConfigError(f"unknown override target {key!r}")
    return PipelineConfig.from_dict(data)
