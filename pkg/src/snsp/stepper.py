"""Frozen-coefficient Euler–Maruyama scheme for the Galerkin system.

One macro step of length ``h`` from ``(rho_n, u_n, V_n)``:

1. continuity with frozen velocity ``chi_n u_n``: explicit dealiased
   transport followed by the exact heat semigroup for ``eps lap``;
2. Poisson solve from ``rho_{n+1}`` (stored for the next step);
3. momentum: every drift term frozen at ``t_n`` plus the noise kick
   ``Pi_N[rho_{n+1} sum_k Pi_N g_k dbeta_k]``;
4. velocity recovery by a preconditioned conjugate-gradient solve of the
   mass matrix ``u -> Pi_N(rho u)``.

Weighting the kick with ``rho_{n+1}`` makes the velocity increment exactly
``sum_k Pi_N g_k dbeta_k``, which keeps the discrete energy balance
first-order in ``h``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import BalanceIncrements, EnergyBreakdown, dissipation_rates, energy, exchange_rate
from .forcing import NoiseModel, Stream, WienerIncrement, noise_cutoff, projected_coefficients, wiener_increments
from .poisson import Potential, solve_potential
from .spectral import GridSpec, ScalarField, VectorField
from .thermodynamics import PressureLaw, RegularizationParams, chi, pressure_reg

__all__ = [
    "StepRejected",
    "SolverFailure",
    "TrajectoryAborted",
    "SimState",
    "StepperConfig",
    "StepDiagnostics",
    "Trajectory",
    "initial_state",
    "velocity_cutoff",
    "mass_matrix_apply",
    "mass_matrix_solve",
    "step_continuity",
    "step_momentum",
    "advance",
    "run_trajectory",
]

log = logging.getLogger(__name__)


class StepRejected(RuntimeError):
    """A step left the admissible regime; the caller retries with a smaller step."""

    def __init__(self, msg, kind="rejected"):
        super().__init__(msg)
        self.kind = kind


class SolverFailure(RuntimeError):
    def __init__(self, msg, residual, iterations):
        super().__init__(f"{msg} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class TrajectoryAborted(RuntimeError):
    pass


def _vals(x):
    return x.values if hasattr(x, "values") else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class SimState:
    t: float
    step: int
    rho: ScalarField
    m: VectorField
    u: VectorField
    V: Potential
    f: ScalarField
    N: int

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid

    @property
    def rho_values(self) -> np.ndarray:
        return self.rho.values

    @property
    def u_values(self) -> np.ndarray:
        return self.u.values

    @property
    def m_values(self) -> np.ndarray:
        return self.m.values

    @property
    def f_values(self) -> np.ndarray:
        return self.f.values

    @property
    def mass(self) -> float:
        return self.grid.integral(self.rho.values)


def initial_state(grid: GridSpec, rho, u=None, f=None, sigma: int = 1, N: int | None = None, m=None,
                  t: float = 0.0, **solve_kw) -> SimState:
    """Build a consistent state from density and velocity (or projected momentum).

    The velocity is projected onto the Galerkin space; the momentum unknown
    is then ``Pi_N(rho u)``. When ``m`` is given instead, ``u`` is recovered
    from the mass matrix.
    """
    N = grid.N if N is None else N
    rho = np.asarray(_vals(rho), dtype=float)
    f = np.zeros(grid.shape) if f is None else np.broadcast_to(_vals(f), grid.shape).astype(float)
    if m is None:
        u = np.zeros((3, *grid.shape)) if u is None else np.asarray(_vals(u), dtype=float)
        u = grid.project(u, N)
        m = grid.project(rho * u, N)
    else:
        m = grid.project(np.asarray(_vals(m), dtype=float), N)
        u = mass_matrix_solve(rho, m, N, grid=grid, **solve_kw)[0]
    V = solve_potential(rho, f, sigma, grid=grid)
    return SimState(t, 0, ScalarField(grid, rho), VectorField(grid, m), VectorField(grid, u), V,
                    ScalarField(grid, f), N)


@dataclass(frozen=True)
class StepperConfig:
    """Step size, physics and solver settings for one trajectory.

    ``rho_floor=None`` resolves to ``1e-8`` times the far-field density (or
    the initial mean density on the torus). ``h_min`` bounds the step-halving
    retries; ``cadence`` is the snapshot interval in steps.
    """

    h: float
    law: PressureLaw = field(default_factory=PressureLaw)
    params: RegularizationParams = field(default_factory=RegularizationParams)
    mass_tol: float = 1e-10
    mass_maxiter: int = 500
    rho_floor: float | None = None
    tol_mp: float = 1e-4
    h_min: float | None = None
    cadence: int = 1
    energy_form: str = "torus"
    log_energy: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step must be positive")
        if not self.mass_tol > 0:
            raise ValueError("mass-solve tolerance must be positive")
        if self.mass_maxiter < 1 or self.cadence < 1:
            raise ValueError("iteration cap and cadence must be positive")
        if self.h_min is None:
            object.__setattr__(self, "h_min", self.h / 2**8)
        self.params.check_gamma(self.law.gamma)

    def resolved(self, state: SimState) -> "StepperConfig":
        if self.rho_floor is not None:
            return self
        ref = self.params.rho_bar if self.params.rho_bar > 0 else state.mass / state.grid.volume
        return replace(self, rho_floor=1e-8 * ref)


@dataclass
class StepDiagnostics:
    step: int
    t: float
    h: float
    chi: float
    mu: float
    substeps: int
    mass: float
    cg_iterations: int
    condition: float
    u_norm: float
    increments: BalanceIncrements
    energy_start: EnergyBreakdown | None = None
    energy_end: EnergyBreakdown | None = None

    def row(self) -> dict:
        r = {"step": self.step, "t": self.t, "h": self.h, "chi": self.chi, "mu": self.mu,
             "substeps": self.substeps, "mass": self.mass, "cg_iterations": self.cg_iterations,
             "condition": self.condition, "u_norm": self.u_norm}
        if self.energy_end is not None:
            r.update({f"E_{k}": v for k, v in self.energy_end.as_dict().items()
                      if k in ("kinetic", "potential", "field", "total")})
        r.update({f"d_{k}": v for k, v in self.increments.as_dict().items()})
        return r


@dataclass
class Trajectory:
    cadence: int
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    aborted: bool = False
    stream: Stream | None = None

    @property
    def final(self) -> SimState:
        return self.records[-1][1]

    def energy_totals(self) -> EnergyBreakdown:
        """Energy at the last logged step with every accumulator summed."""
        last = self.diagnostics[-1].energy_end
        acc = BalanceIncrements()
        for d in self.diagnostics:
            acc = acc + d.increments
        return EnergyBreakdown(last.kinetic, last.potential, last.field, **acc.as_dict())


# -- elementary operators ----------------------------------------------------

def velocity_cutoff(u, R: float, N: int | None = None, grid: GridSpec | None = None) -> float:
    """``chi(||u|| - R)`` with the grid L2 norm of ``u``."""
    grid = grid or u.grid
    v = _vals(u)
    if N is not None:
        v = grid.project(v, N)
    norm = np.sqrt(grid.integral(np.sum(v**2, axis=0)))
    return float(chi(norm - R))


def mass_matrix_apply(rho, u, N: int, grid: GridSpec | None = None) -> VectorField:
    """``Pi_N(rho u)`` evaluated pointwise on the grid, dealiased and projected."""
    grid = grid or rho.grid
    return VectorField(grid, grid.project(_vals(rho) * _vals(u), N))


def _lanczos_condition(alphas, betas) -> float:
    n = len(alphas)
    if n == 0:
        return 1.0
    a = np.asarray(alphas)
    b = np.asarray(betas[: n - 1])
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(np.maximum(b, 0.0)) / a[:-1]
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    ev = np.linalg.eigvalsh(T)
    return float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")


def mass_matrix_solve(rho, m, N: int, tol: float = 1e-10, maxiter: int = 500, x0=None,
                      floor: float = 0.0, grid: GridSpec | None = None):
    """Solve ``Pi_N(rho u) = m`` for ``u`` in the Galerkin space.

    Conjugate gradients preconditioned by the (constant) Fourier diagonal
    ``1/mean(rho)``. Returns ``(u, info)`` with ``info`` holding the
    iteration count, final relative residual and a Lanczos estimate of the
    condition number.
    """
    grid = grid or getattr(rho, "grid", None) or getattr(m, "grid", None)
    rho = _vals(rho)
    if rho.min() <= floor:
        raise StepRejected(f"density {rho.min():.3e} at or below floor {floor:.3e}", kind="floor_violation")
    b = _vals(m)

    def A(v):
        return grid.project(rho * v, N)

    def dot(x, y):
        return float(np.vdot(x, y))

    pre = 1.0 / float(np.mean(rho))
    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0:
        return VectorField(grid, np.zeros_like(b)), {"iterations": 0, "residual": 0.0, "condition": 1.0}
    x = b * pre if x0 is None else np.array(_vals(x0), dtype=float)
    r = b - A(x)
    z = pre * r
    p = z.copy()
    rz = dot(r, z)
    alphas, betas = [], []
    it = 0
    res = np.sqrt(dot(r, r)) / bnorm
    while res > tol and it < maxiter:
        Ap = A(p)
        alpha = rz / dot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        alphas.append(alpha)
        it += 1
        res = np.sqrt(dot(r, r)) / bnorm
        if res <= tol:
            break
        z = pre * r
        rz_new = dot(r, z)
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
    true_res = float(np.sqrt(np.sum((A(x) - b) ** 2)) / bnorm)
    if true_res > 10 * tol:
        raise SolverFailure("mass-matrix solve did not converge", true_res, it)
    info = {"iterations": it, "residual": true_res, "condition": _lanczos_condition(alphas, betas)}
    return VectorField(grid, x), info


# -- sub-steps ---------------------------------------------------------------

def step_continuity(rho_n, u_frozen, chi_value: float, eps: float, h: float, grid: GridSpec | None = None,
                    floor: float = 0.0, tol_mp: float | None = 1e-4) -> ScalarField:
    """Advance the density by ``h`` with the velocity ``chi_value * u_frozen`` held fixed.

    Raises :class:`StepRejected` when the result leaves the exponential
    envelope ``exp(-+h ||div w||_inf)`` around the previous extrema by more
    than ``tol_mp`` (relative), or drops to ``floor``.
    """
    grid = grid or rho_n.grid
    rho = _vals(rho_n)
    w = chi_value * _vals(u_frozen)
    flux = grid.truncate(rho * w)
    out = rho - h * grid.div(flux)
    if eps > 0:
        out = grid.heat(out, eps * h)
    if not np.all(np.isfinite(out)):
        raise StepRejected("non-finite density")
    if tol_mp is not None:
        dmax = float(np.max(np.abs(grid.div(w)))) * h
        lo = rho.min() * np.exp(-dmax) * (1 - tol_mp)
        hi = rho.max() * np.exp(dmax) * (1 + tol_mp)
        if out.min() < lo or out.max() > hi:
            raise StepRejected(
                f"maximum-principle envelope violated: [{out.min():.6g}, {out.max():.6g}] vs [{lo:.6g}, {hi:.6g}]",
                kind="envelope_violation")
    if out.min() <= floor:
        raise StepRejected(f"density {out.min():.3e} at or below floor {floor:.3e}", kind="floor_violation")
    return ScalarField(grid, out)


def momentum_drift(state: SimState, V: Potential, chi_value: float, config: StepperConfig) -> np.ndarray:
    """Galerkin-projected drift of the momentum equation at frozen coefficients."""
    grid, N = state.grid, state.N
    prm = config.params
    rho, u = state.rho_values, state.u_values
    w = chi_value * u
    m_phys = rho * u
    conv = np.stack([grid.div(grid.truncate(rho * w * u[i])) for i in range(3)])
    F = -conv
    if chi_value > 0:
        F -= chi_value * grid.grad(grid.truncate(pressure_reg(rho, config.law, prm.delta, prm.Gamma)))
    if prm.eps > 0:
        F += prm.eps * grid.lap(grid.truncate(m_phys))
    F += prm.nu_S * grid.lap(u) + (prm.nu_B + prm.nu_S) * grid.grad(grid.div(u))
    F += prm.theta * grid.truncate(rho * grid.grad(V.values))
    return grid.project(F, N)


def noise_velocity(state: SimState, increment: WienerIncrement, model: NoiseModel) -> np.ndarray:
    """``sum_k Pi_N g_{k,eps}(rho, f, rho u) dbeta_k`` (a Galerkin field)."""
    grid = state.grid
    rho = state.rho_values
    pg = projected_coefficients(grid, rho, state.f_values, rho * state.u_values, model, model.eps, state.N)
    return np.tensordot(np.asarray(increment.values), pg, axes=(0, 0))


def step_momentum(state: SimState, rho_next, V_n: Potential, increment: WienerIncrement | None,
                  config: StepperConfig, model: NoiseModel | None = None, h: float | None = None,
                  chi_value: float | None = None) -> VectorField:
    """Euler–Maruyama update of the projected momentum."""
    h = config.h if h is None else h
    if chi_value is None:
        chi_value = velocity_cutoff(state.u, config.params.R)
    m_next, _ = _momentum(state, _vals(rho_next), V_n, increment, config, model, h, chi_value)
    return VectorField(state.grid, m_next)


def _momentum(state, rho_next, V_n, increment, config, model, h, chi_value):
    grid, N = state.grid, state.N
    m = state.m_values + h * momentum_drift(state, V_n, chi_value, config)
    G = None
    if model is not None and model.K > 0 and increment is not None:
        G = noise_velocity(state, increment, model)
        m = m + grid.project(rho_next * G, N)
    if not np.all(np.isfinite(m)):
        raise StepRejected("non-finite momentum")
    return m, G


# -- composed step -------------------------------------------------------------

def _single_step(state: SimState, config: StepperConfig, model: NoiseModel | None, increment, h: float, events):
    grid, prm = state.grid, config.params
    chi_n = velocity_cutoff(state.u, prm.R)
    u_norm = float(np.sqrt(grid.integral(np.sum(state.u_values**2, axis=0))))
    t = state.t
    if chi_n < 1:
        events.append({"t": t, "step": state.step, "kind": "cutoff_engaged", "value": chi_n})
    if u_norm > prm.R:
        events.append({"t": t, "step": state.step, "kind": "stopping_crossing", "value": u_norm})
    if model is not None and model.K > 0 and model.eps > 0:
        cut = noise_cutoff(state.rho_values, state.rho_values * state.u_values, model.eps)
        if cut.min() < 1:
            events.append({"t": t, "step": state.step, "kind": "noise_cutoff_engaged", "value": float(cut.min())})

    rho_next = step_continuity(state.rho, state.u, chi_n, prm.eps, h, floor=config.rho_floor, tol_mp=config.tol_mp)
    V_next = solve_potential(rho_next, state.f, state.V.sigma)
    m_next, G = _momentum(state, rho_next.values, state.V, increment, config, model, h, chi_n)
    u_next, info = mass_matrix_solve(rho_next, m_next, state.N, tol=config.mass_tol, maxiter=config.mass_maxiter,
                                     x0=state.u_values, floor=config.rho_floor)

    inc = BalanceIncrements()
    if config.log_energy:
        rates = dissipation_rates(state, config.law, prm)
        inc.visc_S, inc.visc_B = h * rates["visc_S"], h * rates["visc_B"]
        inc.eps_u, inc.eps_P = h * rates["eps_u"], h * rates["eps_P"]
        inc.exchange = h * exchange_rate(state, chi_n, prm)
        if G is not None:
            rho = state.rho_values
            inc.ito = 0.5 * grid.integral(rho_next.values * np.sum(G**2, axis=0))
            pg = projected_coefficients(grid, rho, state.f_values, rho * state.u_values, model, model.eps, state.N)
            inc.ito_dt = h * 0.5 * grid.integral(rho * np.sum(pg**2, axis=(0, 1)))
            inc.stoch = grid.integral(np.sum(rho * state.u_values * G, axis=0))
    new = SimState(t + h, state.step + 1, rho_next, VectorField(grid, m_next), u_next, V_next, state.f, state.N)
    return new, inc, info, chi_n, u_norm


def advance(state: SimState, config: StepperConfig, model: NoiseModel | None = None, stream: Stream | None = None,
            h: float | None = None, _sub: int = 0, _events=None):
    """One macro step; on rejection retries as two half steps down to ``h_min``.

    Returns ``(new_state, StepDiagnostics)``. Brownian increments are drawn
    from ``stream`` at counter ``(step, sub)`` where half steps use the
    heap-ordered child indices ``2 sub + 1`` and ``2 sub + 2``.
    """
    h = config.h if h is None else h
    if config.rho_floor is None:
        config = config.resolved(state)
    events = [] if _events is None else _events
    increment = None
    if model is not None and model.K > 0:
        if stream is None:
            raise ValueError("a stream id is needed for a stochastic step")
        increment = wiener_increments(h, model.K, stream.at(state.step, _sub))
    e0 = energy(state, config.law, config.params, config.energy_form) if config.log_energy else None
    try:
        new, inc, info, chi_n, u_norm = _single_step(state, config, model, increment, h, events)
    except (StepRejected, SolverFailure) as exc:
        kind = getattr(exc, "kind", "solver_failure")
        events.append({"t": state.t, "step": state.step, "kind": kind if kind == "floor_violation" else "step_rejected",
                       "value": h, "message": str(exc)})
        if h / 2 < config.h_min:
            raise TrajectoryAborted(f"step size fell below h_min={config.h_min:g}: {exc}") from exc
        log.info("step %d rejected at h=%g: %s", state.step, h, exc)
        mid, d1 = advance(state, config, model, stream, h / 2, 2 * _sub + 1, events)
        # keep the macro step counter so that later draws do not depend on retries
        mid = replace(mid, step=state.step)
        new, d2 = advance(mid, config, model, stream, h / 2, 2 * _sub + 2, events)
        new = replace(new, step=state.step + 1)
        diag = StepDiagnostics(state.step, new.t, h, min(d1.chi, d2.chi), d2.mu, d1.substeps + d2.substeps,
                               new.mass, d1.cg_iterations + d2.cg_iterations, max(d1.condition, d2.condition),
                               d1.u_norm, d1.increments + d2.increments, d1.energy_start, d2.energy_end)
        return new, diag
    e1 = energy(new, config.law, config.params, config.energy_form) if config.log_energy else None
    diag = StepDiagnostics(state.step, new.t, h, chi_n, new.V.mean, 1, new.mass, info["iterations"],
                           info["condition"], u_norm, inc, e0, e1)
    return new, diag


def run_trajectory(initial: SimState, T: float, config: StepperConfig, model: NoiseModel | None = None,
                   stream: Stream | None = None) -> Trajectory:
    """Integrate to time ``T`` with ``round(T/h)`` macro steps."""
    if T < 0:
        raise ValueError("final time must be nonnegative")
    config = config.resolved(initial)
    nsteps = int(round(T / config.h))
    if abs(nsteps * config.h - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a multiple of h={config.h}")
    traj = Trajectory(config.cadence, stream=stream)
    traj.records.append((initial.t, initial))
    state = initial
    for n in range(nsteps):
        events = []
        try:
            state, diag = advance(state, config, model, stream, _events=events)
        except TrajectoryAborted as exc:
            traj.events.extend(events)
            traj.events.append({"t": state.t, "step": state.step, "kind": "aborted", "value": config.h_min,
                                "message": str(exc)})
            traj.aborted = True
            log.warning("trajectory aborted at t=%g: %s", state.t, exc)
            break
        traj.events.extend(events)
        traj.diagnostics.append(diag)
        if (n + 1) % config.cadence == 0 or n + 1 == nsteps:
            traj.records.append((state.t, state))
    return traj
