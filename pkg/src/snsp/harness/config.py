"""Run configuration: YAML in, validated nested dataclasses out."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..forcing import NoiseModel
from ..spectral import GridSpec
from ..stepper import StepperConfig
from ..thermodynamics import PressureLaw, RegularizationParams

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "dump_config"]


class ConfigError(ValueError):
    """Invalid run configuration; ``violations`` lists ``key.path: reason`` strings."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class GridConfig:
    M: int = 16
    L: float = 2 * math.pi
    N: int | None = None


@dataclass(frozen=True)
class PhysicsConfig:
    a: float = 1.0
    gamma: float = 2.0
    b: float = 0.0
    nu_S: float = 0.1
    nu_B: float = 0.0
    theta: float = 1.0
    sigma: int = 1
    rho_bar: float = 0.0


@dataclass(frozen=True)
class RegularizationConfig:
    eps: float = 0.05
    delta: float = 0.0
    Gamma: float = 6.0
    R: float = 1e6


@dataclass(frozen=True)
class SteppingConfig:
    h: float = 1e-2
    T: float = 0.1
    h_min: float | None = None
    cadence: int = 1
    mass_tol: float = 1e-10
    mass_maxiter: int = 500
    tol_mp: float = 1e-4
    rho_floor: float | None = None


@dataclass(frozen=True)
class NoiseConfig:
    K: int = 0
    C: float = 0.1
    alpha: list | None = None
    beta: list | None = None
    eta: list | None = None
    shape: str = "constant"
    support: list | None = None
    eps: float | None = None


@dataclass(frozen=True)
class InitialConfig:
    """Analytic initial data.

    ``smooth``: ``rho = rho_mean (1 + amplitude * s(x))`` with a fixed
    low-mode pattern ``s``, velocity ``velocity * (sin x2, sin x3, sin x1)``.
    ``bump``: localised perturbation of the far field (whole-space runs).
    ``constant``: ``rho = rho_mean``, ``u = velocity * e_1``.
    """

    profile: str = "smooth"
    rho_mean: float = 1.0
    amplitude: float = 0.1
    velocity: float = 0.1
    width: float = 1.0


@dataclass(frozen=True)
class BackgroundConfig:
    profile: str = "constant"
    value: float | None = None
    amplitude: float = 0.0
    path: str | None = None


@dataclass(frozen=True)
class WholeSpaceConfig:
    L: float = 4.0
    window: float | None = None


@dataclass(frozen=True)
class DiagnosticsConfig:
    cadence: int = 1
    energy_form: str = "torus"


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    stepping: SteppingConfig = field(default_factory=SteppingConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    background: BackgroundConfig = field(default_factory=BackgroundConfig)
    whole_space: WholeSpaceConfig | None = None
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 0
    output: str = "out"

    # -- builders ---------------------------------------------------------
    def grid_spec(self) -> GridSpec:
        if self.whole_space is not None:
            L = self.whole_space.L
            return GridSpec(self.grid.M, 2 * L, self.grid.N, origin=-L)
        return GridSpec(self.grid.M, self.grid.L, self.grid.N)

    def law(self) -> PressureLaw:
        p = self.physics
        return PressureLaw("isentropic", p.a, p.gamma, p.b)

    def params(self) -> RegularizationParams:
        p, r = self.physics, self.regularization
        return RegularizationParams(r.delta, r.Gamma, r.eps, r.R, p.nu_S, p.nu_B, p.theta, p.sigma, p.rho_bar)

    def stepper(self) -> StepperConfig:
        s = self.stepping
        return StepperConfig(h=s.h, law=self.law(), params=self.params(), mass_tol=s.mass_tol,
                             mass_maxiter=s.mass_maxiter, rho_floor=s.rho_floor, tol_mp=s.tol_mp, h_min=s.h_min,
                             cadence=s.cadence, energy_form=self.diagnostics.energy_form)

    def noise_model(self) -> NoiseModel | None:
        n = self.noise
        if n.K == 0:
            return None
        eps = self.regularization.eps if n.eps is None else n.eps
        support = None if n.support is None else (tuple(n.support[0]), tuple(n.support[1]))
        return NoiseModel(K=n.K, C=n.C, alpha=n.alpha, beta=n.beta, eta=n.eta, shape=n.shape, support=support,
                          eps=eps)

    def replace(self, **sections) -> "RunConfig":
        """Copy with dotted overrides, e.g. ``replace(**{"stepping.h": 0.01})``."""
        out = self
        for key, value in sections.items():
            head, _, tail = key.partition(".")
            if tail:
                sub = dataclasses.replace(getattr(out, head), **{tail: value})
                out = dataclasses.replace(out, **{head: sub})
            else:
                out = dataclasses.replace(out, **{head: value})
        validate(out)
        return out


_SECTIONS = {
    "grid": GridConfig,
    "physics": PhysicsConfig,
    "regularization": RegularizationConfig,
    "stepping": SteppingConfig,
    "noise": NoiseConfig,
    "initial": InitialConfig,
    "background": BackgroundConfig,
    "whole_space": WholeSpaceConfig,
    "diagnostics": DiagnosticsConfig,
}

_INT_FIELDS = {"M", "N", "sigma", "cadence", "mass_maxiter", "K", "seed"}


def _coerce(path: str, name: str, value: Any, errors: list):
    if value is None:
        return None
    if name in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            errors.append(f"{path}: expected an integer, got {value!r}")
            return value
        return int(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


def _section(cls, data, path, errors):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping")
        return cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kw = {}
    for key, value in data.items():
        if key not in known:
            errors.append(f"{path}.{key}: unknown key")
            continue
        kw[key] = _coerce(f"{path}.{key}", key, value, errors)
    return cls(**kw)


def parse_config(data: dict | None) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a plain mapping."""
    data = {} if data is None else data
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping"])
    kw = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if key == "whole_space" and value is None:
                kw[key] = None
                continue
            kw[key] = _section(_SECTIONS[key], value, key, errors)
        elif key == "seed":
            kw[key] = _coerce("seed", "seed", value, errors)
        elif key == "output":
            kw[key] = str(value)
        else:
            errors.append(f"{key}: unknown key")
    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    e = []
    g, p, r, s, n = cfg.grid, cfg.physics, cfg.regularization, cfg.stepping, cfg.noise
    if g.M <= 0 or g.M % 2:
        e.append("grid.M: must be a positive even integer")
    if not g.L > 0:
        e.append("grid.L: must be positive")
    if g.N is not None and not 1 <= g.N <= g.M / 3:
        e.append("grid.N: must satisfy 1 <= N <= M/3")
    if not p.gamma > 1.5:
        e.append(f"physics.gamma: must exceed 3/2 (got {p.gamma})")
    if not p.a > 0:
        e.append("physics.a: must be positive")
    if not p.nu_S > 0:
        e.append("physics.nu_S: must be positive")
    if p.nu_B < 0:
        e.append("physics.nu_B: must be nonnegative")
    if not p.theta > 0:
        e.append("physics.theta: must be positive")
    if p.sigma not in (1, -1):
        e.append("physics.sigma: must be +1 or -1")
    if p.rho_bar < 0:
        e.append("physics.rho_bar: must be nonnegative")
    if r.eps < 0:
        e.append("regularization.eps: must be nonnegative")
    if r.delta < 0:
        e.append("regularization.delta: must be nonnegative")
    if r.delta > 0 and r.Gamma < max(6.0, p.gamma):
        e.append(f"regularization.Gamma: must be >= max(6, gamma) when delta > 0 (got {r.Gamma})")
    if not r.R > 0:
        e.append("regularization.R: must be positive")
    if not s.h > 0:
        e.append("stepping.h: must be positive")
    if s.T < 0:
        e.append("stepping.T: must be nonnegative")
    elif s.h > 0 and abs(round(s.T / s.h) * s.h - s.T) > 1e-9 * max(s.T, 1.0):
        e.append("stepping.T: must be a multiple of stepping.h")
    if s.cadence < 1:
        e.append("stepping.cadence: must be >= 1")
    if not s.mass_tol > 0:
        e.append("stepping.mass_tol: must be positive")
    if n.K < 0:
        e.append("noise.K: must be nonnegative")
    if n.shape not in ("constant", "fourier"):
        e.append(f"noise.shape: unknown shape {n.shape!r}")
    for name, width in (("alpha", 3), ("beta", 3)):
        val = getattr(n, name)
        if val is not None and np.shape(val) != (n.K, width):
            e.append(f"noise.{name}: expected a {n.K} x {width} list")
    if n.eta is not None and np.shape(n.eta) != (n.K,):
        e.append(f"noise.eta: expected {n.K} values")
    if n.support is not None and np.shape(n.support) != (2, 3):
        e.append("noise.support: expected [[lo1, lo2, lo3], [hi1, hi2, hi3]]")
    if cfg.initial.profile not in ("smooth", "bump", "constant"):
        e.append(f"initial.profile: unknown profile {cfg.initial.profile!r}")
    if cfg.initial.rho_mean < 0:
        e.append("initial.rho_mean: must be nonnegative")
    if cfg.initial.rho_mean == 0 and r.eps == 0:
        e.append("initial.rho_mean: vacuum data needs regularization.eps > 0")
    if cfg.initial.profile == "smooth" and abs(cfg.initial.amplitude) >= 1:
        e.append("initial.amplitude: must be below 1 to keep the density positive")
    if cfg.background.profile not in ("constant", "cosine", "snapshot"):
        e.append(f"background.profile: unknown profile {cfg.background.profile!r}")
    if cfg.background.profile == "snapshot" and not cfg.background.path:
        e.append("background.path: required for snapshot profiles")
    if cfg.diagnostics.energy_form not in ("torus", "whole_space"):
        e.append("diagnostics.energy_form: must be 'torus' or 'whole_space'")
    if cfg.diagnostics.cadence < 1:
        e.append("diagnostics.cadence: must be >= 1")
    ws = cfg.whole_space
    if ws is not None:
        if not ws.L > 0:
            e.append("whole_space.L: must be positive")
        if p.rho_bar < 1:
            e.append("physics.rho_bar: whole-space runs need a far-field density >= 1")
        if n.support is not None:
            lo, hi = np.asarray(n.support, float)
            if np.any(lo < -ws.L) or np.any(hi > ws.L):
                e.append("noise.support: must lie inside the torus [-L, L]^3")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        e.append("seed: must be a nonnegative integer")
    if e:
        raise ConfigError(e)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc}"]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<file>: YAML parse error: {exc}"]) from exc
    return parse_config(data)


def config_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    if d.get("output") is None:
        d.pop("output", None)
    return d


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(config_dict(cfg), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
