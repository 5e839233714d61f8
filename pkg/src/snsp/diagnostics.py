"""Functionals evaluated on simulator states and trajectories.

States are duck-typed: anything with ``grid``, ``rho_values``, ``u_values``,
``f_values`` and a potential ``V`` (with ``values``, ``sigma``, ``mean``)
works, so the functions apply equally to stored snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from .forcing import NoiseModel, eval_g_eps, WienerIncrement
from .poisson import poisson_pressure_identity, potential_energy, solve_potential
from .spectral import GridSpec, ParameterError
from .thermodynamics import (
    PressureLaw,
    RegularizationParams,
    d2potential_reg,
    d2pressure_reg,
    d3potential_reg,
    dpotential_reg,
    dpressure_reg,
    potential_reg,
    pressure_reg,
    relative_potential,
    truncate_Tk,
)

__all__ = [
    "EnergyBreakdown",
    "BalanceIncrements",
    "energy",
    "dissipation_rates",
    "exchange_rate",
    "energy_balance_residual",
    "TestSolution",
    "relative_energy",
    "relative_energy_remainder",
    "martingale_increment",
    "effective_viscous_flux",
    "flux_poisson_identity",
    "pressure_moment",
    "oscillation_defect",
    "MomentEstimate",
    "ensemble_moment",
]


@dataclass
class EnergyBreakdown:
    """Energy components at one instant plus running accumulators.

    ``field`` is the Poisson field energy ``sigma theta / 2 int |grad V|^2``,
    the form that closes the balance against ``theta rho grad V`` in the
    momentum equation.
    """

    kinetic: float
    potential: float
    field: float
    visc_S: float = 0.0
    visc_B: float = 0.0
    eps_u: float = 0.0
    eps_P: float = 0.0
    ito: float = 0.0
    ito_dt: float = 0.0
    stoch: float = 0.0
    exchange: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.field

    @property
    def dissipation(self) -> float:
        return self.visc_S + self.visc_B + self.eps_u + self.eps_P

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["total"] = self.total
        return d


@dataclass
class BalanceIncrements:
    """Per-step contributions to the energy balance (already multiplied by ``h``)."""

    visc_S: float = 0.0
    visc_B: float = 0.0
    eps_u: float = 0.0
    eps_P: float = 0.0
    ito: float = 0.0
    ito_dt: float = 0.0
    stoch: float = 0.0
    exchange: float = 0.0

    @property
    def dissipation(self) -> float:
        return self.visc_S + self.visc_B + self.eps_u + self.eps_P

    def __add__(self, other: "BalanceIncrements") -> "BalanceIncrements":
        return BalanceIncrements(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _pot(state):
    return state.V


def energy(state, law: PressureLaw, params: RegularizationParams, form: str = "torus") -> EnergyBreakdown:
    """Kinetic, pressure-potential and field energy of ``state``.

    ``form="torus"`` integrates ``P(rho)``; ``form="whole_space"`` integrates
    the relative potential ``H(rho, rho_bar)``.
    """
    grid = state.grid
    rho, u = state.rho_values, state.u_values
    kin = 0.5 * grid.integral(rho * np.sum(u**2, axis=0))
    if form == "torus":
        pot = grid.integral(potential_reg(rho, law, params.delta, params.Gamma))
    elif form == "whole_space":
        pot = grid.integral(relative_potential(rho, params.rho_bar, law, params.delta, params.Gamma))
    else:
        raise ValueError(f"unknown energy form {form!r}")
    V = _pot(state)
    fld = 0.5 * potential_energy(V.values, params.theta, V.sigma, grid)
    return EnergyBreakdown(kin, pot, fld)


def dissipation_rates(state, law: PressureLaw, params: RegularizationParams) -> dict:
    """Instantaneous dissipation rates entering the energy balance."""
    grid = state.grid
    rho, u = state.rho_values, state.u_values
    J = grid.jacobian(u)
    divu = J[0, 0] + J[1, 1] + J[2, 2]
    gu2 = np.sum(J**2, axis=(0, 1))
    out = {
        "visc_S": params.nu_S * grid.integral(gu2),
        "visc_B": (params.nu_B + params.nu_S) * grid.integral(divu**2),
        "eps_u": 0.0,
        "eps_P": 0.0,
    }
    if params.eps > 0:
        grho = grid.grad(rho)
        out["eps_u"] = params.eps * grid.integral(rho * gu2)
        out["eps_P"] = params.eps * grid.integral(
            d2potential_reg(rho, law, params.delta, params.Gamma) * np.sum(grho**2, axis=0))
    return out


def exchange_rate(state, chi_value: float, params: RegularizationParams) -> float:
    """Energy exchanged with the field that the cut-off and viscosity leave unbalanced.

    ``theta (1 - chi) int rho u . grad V - eps theta int rho lap V``.
    """
    grid = state.grid
    rho, u = state.rho_values, state.u_values
    V = _pot(state).values
    gV = grid.grad(V)
    out = params.theta * (1.0 - chi_value) * grid.integral(rho * np.sum(u * gV, axis=0))
    if params.eps > 0:
        out -= params.eps * params.theta * grid.integral(rho * grid.lap(V))
    return out


def energy_balance_residual(steps, qv: str = "realized") -> float:
    """Signed residual of the discrete energy balance over a run segment.

    ``steps`` is a trajectory (its ``diagnostics``) or a sequence of step
    diagnostics carrying ``energy_start``, ``energy_end`` and per-step
    increments. ``qv`` selects the Ito term: the realised quadratic variation
    of the kick (``"realized"``) or ``h`` times the correction integrand
    (``"dt"``).
    """
    steps = list(getattr(steps, "diagnostics", steps))
    if not steps:
        raise ValueError("energy balance needs at least one logged step")
    for s in steps:
        if s.energy_start is None or s.energy_end is None:
            raise ValueError("step diagnostics are missing energy logs")
    ito_key = {"realized": "ito", "dt": "ito_dt"}[qv]
    res = steps[-1].energy_end.total - steps[0].energy_start.total
    for s in steps:
        inc = s.increments
        res += inc.dissipation - getattr(inc, ito_key) - inc.stoch - inc.exchange
    return float(res)


# -- relative energy ---------------------------------------------------------

@dataclass
class TestSolution:
    """Smooth comparison state with drift and per-mode diffusion fields.

    ``Ds_r`` has shape ``(K, M, M, M)`` and ``Ds_U`` ``(K, 3, M, M, M)``.
    ``W`` defaults to the potential solved from ``(r, f)``.
    """

    __test__ = False  # not a pytest class

    grid: GridSpec
    r: np.ndarray
    U: np.ndarray
    Dd_r: np.ndarray | None = None
    Dd_U: np.ndarray | None = None
    Ds_r: np.ndarray | None = None
    Ds_U: np.ndarray | None = None
    W: np.ndarray | None = None
    f: np.ndarray | None = None
    sigma: int = 1

    def __post_init__(self):
        g = self.grid
        self.r = np.asarray(self.r, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        if np.any(self.r <= 0):
            raise ValueError("test density must be strictly positive")
        if self.Dd_r is None:
            self.Dd_r = np.zeros(g.shape)
        if self.Dd_U is None:
            self.Dd_U = np.zeros((3, *g.shape))
        if self.Ds_r is None:
            self.Ds_r = np.zeros((0, *g.shape))
        if self.Ds_U is None:
            self.Ds_U = np.zeros((len(self.Ds_r), 3, *g.shape))
        if len(self.Ds_r) != len(self.Ds_U):
            raise ValueError("diffusion fields for r and U need the same mode count")
        if self.W is None:
            f = np.zeros(g.shape) if self.f is None else self.f
            self.W = solve_potential(self.r, f, self.sigma, grid=g).values.copy()

    @property
    def K(self) -> int:
        return len(self.Ds_r)

    @classmethod
    def from_state(cls, state, **kw) -> "TestSolution":
        return cls(state.grid, state.rho_values.copy(), state.u_values.copy(),
                   W=state.V.values.copy(), sigma=state.V.sigma, **kw)


def relative_energy(state, test: TestSolution, law: PressureLaw, params: RegularizationParams) -> float:
    """``int [rho/2 |u - U|^2 + H(rho, r) + sigma theta |grad(V - W)|^2]``."""
    grid = state.grid
    rho, u = state.rho_values, state.u_values
    kin = 0.5 * rho * np.sum((u - test.U) ** 2, axis=0)
    H = relative_potential(rho, test.r, law, params.delta, params.Gamma)
    sigma = state.V.sigma
    fld = potential_energy(state.V.values - test.W, params.theta, sigma, grid)
    return grid.integral(kin + H) + fld


def _g_stack(grid, rho, f, m, model: NoiseModel, K: int):
    phi = model.shape_functions(grid) if model.g is None else [None] * model.K
    out = np.zeros((K, 3, *grid.shape))
    for i in range(min(K, model.K)):
        out[i] = eval_g_eps(i + 1, grid, rho, f, m, model.eps, model, phi[i])
    return out


def relative_energy_remainder(state, test: TestSolution, law: PressureLaw, params: RegularizationParams,
                              model: NoiseModel | None = None) -> dict:
    """The seven remainder addends (keys ``viscous`` ... ``noise``) and their ``total``.

    All addends are instantaneous integrands; the Ito-type pressure term
    and the noise mismatch use the diffusion fields of ``test`` and the
    coefficients ``g_k`` of ``model`` (zero when ``model`` is None).
    """
    grid = state.grid
    d, G = params.delta, params.Gamma
    rho, u, f = state.rho_values, state.u_values, state.f_values
    r, U = test.r, test.U
    JU = grid.jacobian(U)
    Ju = grid.jacobian(u)
    divU = np.trace(JU)
    divu = np.trace(Ju)
    out = {}
    out["viscous"] = grid.integral(params.nu_S * np.sum(JU * (JU - Ju), axis=(0, 1))
                                   + (params.nu_B + params.nu_S) * divU * (divU - divu))
    conv = np.einsum("j...,ij...->i...", u, JU)
    out["convection"] = grid.integral(rho * np.sum((test.Dd_U + conv) * (U - u), axis=0))
    gP1 = grid.grad(dpotential_reg(r, law, d, G))
    out["pressure_potential"] = grid.integral(
        (r - rho) * d2potential_reg(r, law, d, G) * test.Dd_r + np.sum(gP1 * (r * U - rho * u), axis=0))
    out["pressure_work"] = grid.integral((pressure_reg(r, law, d, G) - pressure_reg(rho, law, d, G)) * divU)
    out["field"] = -params.theta * grid.integral(rho * np.sum(U * grid.grad(state.V.values), axis=0))
    w = d2pressure_reg(r, law, d, G) - rho * d3potential_reg(r, law, d, G)
    out["ito_pressure"] = 0.5 * grid.integral(w * np.sum(test.Ds_r**2, axis=0))
    K = max(test.K, model.K if model is not None else 0)
    gk = _g_stack(grid, rho, f, rho * u, model, K) if model is not None else np.zeros((K, 3, *grid.shape))
    DsU = np.zeros((K, 3, *grid.shape))
    DsU[: test.K] = test.Ds_U
    out["noise"] = 0.5 * grid.integral(rho * np.sum((gk - DsU) ** 2, axis=(0, 1)))
    out["total"] = sum(out.values())
    return out


def martingale_increment(state, test: TestSolution, model: NoiseModel | None, increment: WienerIncrement,
                         law: PressureLaw, params: RegularizationParams) -> float:
    """One Euler step of the relative-energy martingale driven by ``increment``."""
    grid = state.grid
    rho, u, f = state.rho_values, state.u_values, state.f_values
    db = np.asarray(increment.values, dtype=float)
    K = len(db)
    gk = _g_stack(grid, rho, f, rho * u, model, K) if model is not None else np.zeros((K, 3, *grid.shape))
    DsU = np.zeros((K, 3, *grid.shape))
    Dsr = np.zeros((K, *grid.shape))
    n = min(K, test.K)
    DsU[:n] = test.Ds_U[:n]
    Dsr[:n] = test.Ds_r[:n]
    w = dpressure_reg(test.r, law, params.delta, params.Gamma) - rho * d2potential_reg(
        test.r, law, params.delta, params.Gamma)
    du = rho * (u - test.U)
    total = 0.0
    for k in range(K):
        integrand = np.sum(du * (gk[k] - DsU[k]), axis=0) + w * Dsr[k]
        total += db[k] * grid.integral(integrand)
    return total


# -- flux and pressure functionals -------------------------------------------

def effective_viscous_flux(state, law: PressureLaw, params: RegularizationParams, weight="rho",
                           k: float | None = None) -> float:
    """``int [p(rho) - (nu_B + 2 nu_S) div u] w`` with ``w`` = rho, T_k(rho) or an array."""
    grid = state.grid
    rho = state.rho_values
    if isinstance(weight, str):
        if weight == "rho":
            w = rho
        elif weight == "Tk":
            if k is None:
                raise ValueError("truncated weight needs k")
            w = truncate_Tk(rho, k)
        else:
            raise ValueError(f"unknown weight {weight!r}")
    else:
        w = np.asarray(weight, dtype=float)
    F = pressure_reg(rho, law, params.delta, params.Gamma) - (params.nu_B + 2 * params.nu_S) * grid.div(state.u_values)
    return grid.integral(F * w)


def flux_poisson_identity(state, law: PressureLaw, params: RegularizationParams):
    """``(lhs, rhs, residual)`` of ``int p sigma lap V = int p (rho - f - mu)``."""
    return poisson_pressure_identity(state, law, params.delta, params.Gamma)


def pressure_moment(rho, law: PressureLaw, delta: float = 0.0, Gamma: float = 6.0, Theta: float = 1 / 3,
                    grid: GridSpec | None = None) -> float:
    """``int p(rho) rho**Theta`` for ``0 < Theta <= 1/3``."""
    if not 0 < Theta <= 1 / 3 + 1e-15:
        raise ParameterError(f"Theta={Theta} outside (0, 1/3]")
    if hasattr(rho, "rho_values"):
        grid, rho = rho.grid, rho.rho_values
    elif hasattr(rho, "values"):
        grid, rho = rho.grid, rho.values
    if grid is None:
        raise ValueError("a grid is needed for plain arrays")
    return grid.integral(pressure_reg(rho, law, delta, Gamma) * np.asarray(rho) ** Theta)


def _series(s):
    if isinstance(s, np.ndarray):
        return s, None
    s = list(s)
    grid = getattr(s[0], "grid", None)
    vals = [getattr(x, "rho_values", getattr(x, "values", x)) for x in s]
    return np.stack([np.asarray(v, dtype=float) for v in vals]), grid


def default_k_ladder(max_rho: float) -> np.ndarray:
    top = max(1, int(math.ceil(math.log2(max(max_rho, 1.0)))))
    return 2.0 ** np.arange(top + 1)


def oscillation_defect(series_a, series_b, gamma: float, k_grid=None, times=None,
                       cell_volume: float | None = None) -> float:
    """``max_k int_Q |T_k(a) - T_k(b)|**(gamma + 1)`` over a space-time series.

    Series are ``(nt, M, M, M)`` arrays or sequences of fields. Space is
    summed exactly (``math.fsum``) with weight ``cell_volume``; time uses the
    trapezoid rule over ``times`` (unit spacing by default). A single time
    level is integrated as a point value.
    """
    a, ga = _series(series_a)
    b, gb = _series(series_b)
    if a.shape != b.shape:
        raise ValueError("series shapes differ")
    grid = ga or gb
    if cell_volume is None:
        cell_volume = grid.cell_volume if grid is not None else 1.0
    nt = a.shape[0]
    t = np.arange(nt, dtype=float) if times is None else np.asarray(times, dtype=float)
    if len(t) != nt:
        raise ValueError("times do not match the series length")
    if k_grid is None:
        k_grid = default_k_ladder(float(max(a.max(), b.max())))
    q = gamma + 1
    best = 0.0
    for k in k_grid:
        # libm pow per sample: numpy's SIMD pow differs by an ulp between CPUs
        spatial = [cell_volume * math.fsum(math.pow(v, q) for v in
                                           np.abs(truncate_Tk(a[i], k) - truncate_Tk(b[i], k)).ravel().tolist())
                   for i in range(nt)]
        if nt == 1:
            val = spatial[0]
        else:
            val = math.fsum(0.5 * (t[i + 1] - t[i]) * (spatial[i] + spatial[i + 1]) for i in range(nt - 1))
        best = max(best, val)
    return best


# -- ensembles ---------------------------------------------------------------

@dataclass
class MomentEstimate:
    mean: float
    half_width: float
    n: int
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def interval(self) -> tuple[float, float]:
        return self.mean - self.half_width, self.mean + self.half_width


def _records(traj):
    if hasattr(traj, "records"):
        return [s for _, s in traj.records]
    return list(np.atleast_1d(traj)) if np.ndim(traj) else [traj]


def ensemble_moment(trajectories, functional=None, p: float = 1.0, confidence: float = 0.95) -> MomentEstimate:
    """Monte Carlo estimate of ``E[sup_t |functional|**p]`` with a normal CI.

    Each trajectory is a :class:`Trajectory` (functional applied to its
    snapshots) or a sequence of already evaluated values.
    """
    if p < 1:
        raise ValueError("moment order must be >= 1")
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("ensemble is empty")
    functional = functional or (lambda x: x)
    sups = np.array([max(abs(float(functional(s))) ** p for s in _records(tr)) for tr in trajectories])
    n = len(sups)
    mean = float(np.mean(sups))
    if n < 2:
        return MomentEstimate(mean, float("nan"), n, sups)
    z = stats.norm.ppf(0.5 + confidence / 2)
    hw = float(z * np.std(sups, ddof=1) / np.sqrt(n))
    return MomentEstimate(mean, hw, n, sups)
