"""
TOML run configuration.

A single file describes grid, solver, initial data, and analysis
parameters; all range checks of the owning modules are applied while
parsing, so a config that loads is a config that runs.
"""

from __future__ import annotations

from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .ensemble import AnalysisParams
from .grid import GridSpec
from .solver import (
    MhdState,
    SolverConfig,
    init_orszag_tang_3d,
    init_random_solenoidal,
)

INITIAL_KINDS = ("random", "orszag-tang")


class ConfigError(ValueError):
    """Invalid or missing configuration value; names the offending key."""


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "random"
    spectrum_slope: float = -2.0
    seed: int = 0
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in INITIAL_KINDS:
            raise ConfigError(
                f"initial.kind must be one of {INITIAL_KINDS}, got {self.kind!r}"
            )

    def build(self, grid: GridSpec) -> MhdState:
        if self.kind == "random":
            return init_random_solenoidal(grid, self.spectrum_slope, self.seed)
        return init_orszag_tang_3d(grid, self.amplitude)


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    solver: SolverConfig
    initial: InitialCondition
    analysis: AnalysisParams
    covers_per_scale: int = 8
    cover_seed: int = 0
    a1_pair_samples: int = 20_000
    a1_seed: int = 0

    def __post_init__(self) -> None:
        if self.covers_per_scale < 1:
            raise ConfigError("analysis.covers_per_scale must be positive")
        if self.a1_pair_samples < 1:
            raise ConfigError("analysis.a1_pair_samples must be positive")


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _take(sec: dict, cls, section_name: str, **extra):
    """Build a dataclass from a config table, rejecting unknown keys."""
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section_name}]: {sorted(unknown)}")
    try:
        return cls(**{**sec, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section_name}]: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a TOML configuration string."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc

    grid_sec = _section(data, "grid")
    grid_sec.setdefault("n", 32)
    grid_sec.setdefault("box_length", 2.0 * 3.141592653589793)
    grid = _take(grid_sec, GridSpec, "grid")

    solver = _take(_section(data, "solver"), SolverConfig, "solver")
    initial = _take(_section(data, "initial"), InitialCondition, "initial")

    ana = _section(data, "analysis")
    covers_per_scale = ana.pop("covers_per_scale", 8)
    cover_seed = ana.pop("cover_seed", 0)
    a1_pair_samples = ana.pop("a1_pair_samples", 20_000)
    a1_seed = ana.pop("a1_seed", 0)
    ana.setdefault("K1", 8)
    ana.setdefault("K2", 8)
    ana.setdefault("K_star", 8.0)
    R0 = ana.setdefault("R0", grid.box_length / 8.0)
    ana.setdefault("scales", [R0, R0 / 2.0, R0 / 4.0])
    ana["scales"] = tuple(float(R) for R in ana["scales"])
    analysis = _take(ana, AnalysisParams, "analysis", T=solver.t_end)

    return RunConfig(
        grid=grid,
        solver=solver,
        initial=initial,
        analysis=analysis,
        covers_per_scale=int(covers_per_scale),
        cover_seed=int(cover_seed),
        a1_pair_samples=int(a1_pair_samples),
        a1_seed=int(a1_seed),
    )


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)
