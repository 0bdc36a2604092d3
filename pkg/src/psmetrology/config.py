"""Experiment configuration: defaults, YAML loading and command-line overrides."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .estimator import EstimatorKind
from .forward import OpticalSetup
from .qcore import PostSelectionMode

VARIANTS = ("exact", "linearized")
FORMATS = ("csv", "json")


def _default_theta_deg() -> list[float]:
    return [float(t) for t in np.arange(0, 181, 5)]


@dataclass(frozen=True)
class ExperimentConfig:
    theta_deg: tuple[float, ...] = field(default_factory=lambda: tuple(_default_theta_deg()))
    modes: tuple[str, ...] = ("same", "sigma3")
    estimators: tuple[str, ...] = ("ps", "meter", "joint")
    variant: str = "exact"
    # tooling default, not a measured coupling
    g_delta_true: float = 0.1
    n_photons: int = 100_000
    n_reps: int = 100
    nu0: float = 0.998
    nu_half: float = 0.966
    delta: float = 286e-6
    wavelength: float = 650e-9
    focal_length: float = 0.25
    d0: float = 0.0
    master_seed: int = 20140101
    calibration_photons: int = 1_000_000
    calibration_d0_true: float = 0.0
    failure_threshold: float = 0.25
    out_dir: str = "results"
    format: str = "csv"
    plot: bool = False

    def __post_init__(self):
        try:
            self.setup
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.theta_deg:
            raise ConfigError("theta grid is empty")
        if not all(math.isfinite(t) for t in self.theta_deg):
            raise ConfigError("theta grid contains non-finite angles")
        if not self.modes:
            raise ConfigError("no post-selection modes")
        for m in self.modes:
            try:
                PostSelectionMode.parse(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if not self.estimators:
            raise ConfigError("no estimators")
        for e in self.estimators:
            try:
                EstimatorKind(e)
            except ValueError:
                raise ConfigError(f"unknown estimator {e!r}") from None
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if not (math.isfinite(self.g_delta_true) and abs(self.g_delta_true) < 1.0):
            raise ConfigError("g_delta_true must lie in (-1, 1)")
        for name in ("n_photons", "n_reps", "calibration_photons"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_reps < 2:
            raise ConfigError("n_reps must be at least 2 to form ensemble statistics")
        if not 0.0 <= self.failure_threshold <= 1.0:
            raise ConfigError("failure_threshold must lie in [0, 1]")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if not abs(self.calibration_d0_true) < self.setup.delta_f:
            raise ConfigError("calibration_d0_true must be smaller than the focal spot size")

    @property
    def setup(self) -> OpticalSetup:
        return OpticalSetup(
            delta=self.delta,
            wavelength=self.wavelength,
            focal_length=self.focal_length,
            nu0=self.nu0,
            nu_half=self.nu_half,
            d0=self.d0,
        )

    @property
    def theta_grid(self) -> list[float]:
        return [math.radians(t) for t in self.theta_deg]

    @property
    def mode_list(self) -> list[PostSelectionMode]:
        return [PostSelectionMode.parse(m) for m in self.modes]

    @property
    def estimator_kinds(self) -> list[EstimatorKind]:
        return [EstimatorKind(e) for e in self.estimators]

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("theta_deg", "modes", "estimators"):
            out[key] = list(out[key])
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return from_mapping({**self.to_dict(), **changes})


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TUPLES = ("theta_deg", "modes", "estimators")


def from_mapping(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLES:
            if isinstance(value, (str, int, float)):
                value = [value]
            value = tuple(float(v) for v in value) if key == "theta_deg" else tuple(str(v) for v in value)
        elif key in ("n_photons", "n_reps", "calibration_photons", "master_seed"):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            value = int(float(value))
        elif key == "plot":
            value = bool(value)
        elif key in ("variant", "format", "out_dir"):
            value = str(value)
        else:
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a number, got {value!r}") from None
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a YAML key-value file; keys missing from the file keep their defaults.

    ``theta_deg`` may be given as a list of angles or as ``{start, stop, step}``
    (inclusive of ``stop``).
    """
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping of keys to values")
    grid = data.get("theta_deg")
    if isinstance(grid, dict):
        try:
            start, stop, step = (float(grid[k]) for k in ("start", "stop", "step"))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("theta_deg range needs numeric start, stop and step") from None
        if step <= 0:
            raise ConfigError("theta_deg step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        data["theta_deg"] = [start + i * step for i in range(n)]
    return from_mapping(data)
