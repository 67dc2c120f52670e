"""Experiment configuration: schema, loading and resolution to domain objects.

Configs are TOML (``key = value`` with tables) or JSON with the same keys.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import BoolpercError
from .geom import TargetSet
from .measure import RadiusMeasure

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "KINDS", "schema_json"]

KINDS = ("theta-curve", "derivative", "threshold", "rate-bound", "slab", "stab-radius",
         "mecke", "volume-fraction")

# parameters each kind cannot run without; "t" may be replaced by tc_hat + t_factor
REQUIRED = {
    "theta-curve": ("t_grid", "n"),
    "derivative": ("t", "n"),
    "threshold": ("sizes",),
    "rate-bound": ("tc_hat", "t_grid", "n"),
    "slab": ("t", "K_grid", "length_a"),
    "stab-radius": ("t", "half_width"),
    "mecke": ("t", "region_radius"),
    "volume-fraction": ("t_grid",),
}


class ConfigError(BoolpercError, ValueError):
    """Configuration rejected before any sampling starts."""


class MeasureEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["atom", "segment"]
    r: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    w: float

    @model_validator(mode="after")
    def _fields_for_kind(self):
        if self.kind == "atom" and self.r is None:
            raise ValueError("atom entry needs r")
        if self.kind == "segment" and (self.lo is None or self.hi is None):
            raise ValueError("segment entry needs lo and hi")
        return self

    def as_dict(self) -> dict:
        if self.kind == "atom":
            return {"kind": "atom", "r": self.r, "w": self.w}
        return {"kind": "segment", "lo": self.lo, "hi": self.hi, "w": self.w}


class TargetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["point", "ball", "box", "union-of-balls"] = "ball"
    center: Optional[list[float]] = None
    radius: Optional[float] = None
    lo: Optional[list[float]] = None
    hi: Optional[list[float]] = None
    centers: Optional[list[list[float]]] = None
    radii: Optional[list[float]] = None


class ExperimentConfig(BaseModel):
    """All parameters of one named experiment.

    Only the parameters listed for the chosen ``kind`` are required; the rest
    keep their defaults and are echoed in the run manifest.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal[KINDS]
    dimension: int = Field(2, ge=2)
    measure: list[MeasureEntry] = Field(min_length=1)
    target: TargetSpec = TargetSpec(kind="ball", radius=0.5)
    master_seed: int = Field(0, ge=0, lt=2**64)
    reps: int = Field(1000, ge=2)
    output_dir: str = "boolperc-out"
    workers: int = Field(1, ge=1)
    max_points: int = Field(10**8, ge=1)
    tolerance: float = Field(3.0, gt=0)
    plot: bool = True

    t: Optional[float] = Field(None, gt=0)
    t_grid: Optional[list[float]] = None
    tc_hat: Optional[float] = Field(None, gt=0)
    t_factor: Optional[float] = Field(None, gt=0)
    n: Optional[float] = Field(None, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    scheme: Literal["forward", "central"] = "central"
    delta: Optional[float] = Field(None, gt=0)
    mc_points: int = Field(64, ge=1)
    sizes: Optional[list[float]] = None
    tol: float = Field(0.01, gt=0)
    bracket: Optional[tuple[float, float]] = None
    K_grid: Optional[list[float]] = None
    length_a: Optional[float] = Field(None, gt=0)
    half_width: Optional[float] = Field(None, gt=0)
    k_max: int = Field(10, ge=2)
    region_radius: Optional[float] = Field(None, gt=0)
    m: Optional[int] = Field(None, ge=0)
    drift_reps: int = Field(0, ge=0)
    power_check: bool = True

    @model_validator(mode="after")
    def _required_for_kind(self):
        if self.t is None and self.tc_hat is not None and self.t_factor is not None \
                and self.kind in ("derivative", "slab", "stab-radius", "mecke"):
            self.t = self.tc_hat * self.t_factor
        if self.kind == "volume-fraction" and self.t_grid is None and self.t is not None:
            self.t_grid = [self.t]
        missing = [k for k in REQUIRED[self.kind] if getattr(self, k) is None]
        if missing:
            raise ValueError(f"kind={self.kind!r} requires {', '.join(missing)}")
        if self.t_grid is not None:
            if not self.t_grid or any(v <= 0 for v in self.t_grid):
                raise ValueError("t_grid must be a nonempty list of positive intensities")
            if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
                raise ValueError("t_grid must be strictly increasing")
        if self.kind == "threshold" and len(self.sizes) < 3:
            raise ValueError("threshold needs at least 3 sizes")
        if self.bracket is not None and not 0 < self.bracket[0] < self.bracket[1]:
            raise ValueError("bracket must satisfy 0 < lo < hi")
        if self.kind == "slab" and self.dimension < 3:
            raise ValueError("slab experiments need dimension >= 3")
        return self

    def radius_measure(self) -> RadiusMeasure:
        return RadiusMeasure.from_spec([e.as_dict() for e in self.measure])

    def target_set(self) -> TargetSet:
        spec = self.target.model_dump(exclude_none=True)
        if spec.get("kind") in ("point", "ball") and "center" not in spec:
            spec["center"] = [0.0] * self.dimension
        return TargetSet.from_spec(spec, self.dimension)

    def resolve(self) -> tuple[RadiusMeasure, TargetSet]:
        """Build and cross-check the domain objects; raises :class:`ConfigError`."""
        try:
            F = self.radius_measure()
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"measure: {exc}") from None
        try:
            L = self.target_set()
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"target: {exc}") from None
        if F.is_zero:
            raise ConfigError("measure has zero total mass")
        if L.d != self.dimension:
            raise ConfigError(f"target dimension {L.d} differs from dimension {self.dimension}")
        b = F.support_bound
        if self.n is not None and L.max_norm > self.n - 2 * b:
            raise ConfigError(f"target reaches {L.max_norm:g} > n - 2b = {self.n - 2 * b:g}")
        if self.kind == "threshold" and any(a <= 4 * b for a in self.sizes):
            raise ConfigError(f"sizes must exceed 4b = {4 * b:g}")
        if self.kind == "slab" and any(K <= 2 * b for K in self.K_grid):
            raise ConfigError(f"K_grid entries must exceed 2b = {2 * b:g}")
        if self.kind == "rate-bound" and any(t < self.tc_hat for t in self.t_grid):
            raise ConfigError("rate-bound t_grid entries must be >= tc_hat")
        if self.kind == "derivative":
            dt = self.dt if self.dt is not None else self.t / 10
            if dt > self.t / 10:
                raise ConfigError(f"dt={dt} exceeds t/10")
        return F, L


def _read(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def load_config(path, seed: int | None = None, out: str | None = None,
                workers: int | None = None) -> ExperimentConfig:
    """Parse and validate a config file, applying command-line overrides."""
    path = Path(path)
    try:
        raw = _read(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if seed is not None:
        raw["master_seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    if workers is not None:
        raw["workers"] = workers
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            where = ".".join(str(p) for p in err["loc"]) or "config"
            lines.append(f"{where}: {err['msg']}")
        raise ConfigError("; ".join(lines)) from None
    cfg.resolve()
    return cfg


def schema_json() -> str:
    return json.dumps(ExperimentConfig.model_json_schema(), indent=2, sort_keys=True)
