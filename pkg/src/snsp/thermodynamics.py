"""Pressure laws, pressure potentials and the scalar cut-off functions.

All functions are vectorised over numpy arrays and reject negative densities.

The regularised law adds ``delta * (rho + rho**Gamma)`` to the pressure. Its
potential is chosen so that ``rho P'(rho) - P(rho) = p(rho)`` holds exactly:
the linear summand integrates to ``delta * rho * log(rho)`` (with ``0 log 0 = 0``)
and the power summand to ``delta / (Gamma - 1) * rho**Gamma``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "DomainError",
    "PressureLaw",
    "RegularizationParams",
    "pressure",
    "pressure_reg",
    "dpressure_reg",
    "d2pressure_reg",
    "potential",
    "potential_reg",
    "dpotential_reg",
    "d2potential_reg",
    "d3potential_reg",
    "relative_potential",
    "chi",
    "truncate_Tk",
    "dtruncate_Tk",
    "renorm_Lk",
    "PressureLawReport",
    "validate_pressure_law",
]


class DomainError(ValueError):
    """Negative density passed to a thermodynamic function."""


def _rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError(f"density must be nonnegative (min {rho.min():g})")
    return rho


@dataclass(frozen=True)
class PressureLaw:
    """Barotropic pressure law.

    ``kind="isentropic"`` gives ``p = a rho**gamma``. ``kind="generalized"``
    takes a user pressure ``p`` (and optionally ``dp`` and the potential
    ``P``); ``a`` and ``b`` are then the envelope constants of
    ``rho**(gamma-1)/a - b <= p'(rho) <= a rho**(gamma-1) + b``.
    """

    kind: str = "isentropic"
    a: float = 1.0
    gamma: float = 2.0
    b: float = 0.0
    p: Callable | None = field(default=None, compare=False)
    dp: Callable | None = field(default=None, compare=False)
    P: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("isentropic", "generalized"):
            raise ValueError(f"unknown pressure law kind {self.kind!r}")
        if not self.a > 0:
            raise ValueError("pressure constant a must be positive")
        # gamma > 3/2 is a requirement on runs and is enforced by the run configuration
        if not self.gamma > 1:
            raise ValueError(f"adiabatic exponent must exceed 1, got {self.gamma}")
        if self.kind == "generalized" and self.p is None:
            raise ValueError("generalized law needs a pressure function p")


@dataclass(frozen=True)
class RegularizationParams:
    """Physical constants and regularisation knobs of the approximate system."""

    delta: float = 0.0
    Gamma: float = 6.0
    eps: float = 0.0
    R: float = 1e6
    nu_S: float = 1.0
    nu_B: float = 0.0
    theta: float = 1.0
    sigma: int = 1
    rho_bar: float = 0.0

    def __post_init__(self):
        errs = []
        if self.delta < 0:
            errs.append("delta must be nonnegative")
        if self.eps < 0:
            errs.append("eps must be nonnegative")
        if not self.R > 0:
            errs.append("R must be positive")
        if not self.nu_S > 0:
            errs.append("nu_S must be positive")
        if self.nu_B < 0:
            errs.append("nu_B must be nonnegative")
        if not self.theta > 0:
            errs.append("theta must be positive")
        if self.sigma not in (1, -1):
            errs.append("sigma must be +1 or -1")
        if self.rho_bar < 0:
            errs.append("rho_bar must be nonnegative")
        if self.delta > 0 and self.Gamma < 6:
            errs.append(f"Gamma={self.Gamma} must be >= 6 when delta > 0")
        if errs:
            raise ValueError("; ".join(errs))

    def check_gamma(self, gamma: float):
        if self.delta > 0 and self.Gamma < max(6.0, gamma):
            raise ValueError(f"Gamma={self.Gamma} must be >= max(6, gamma={gamma}) when delta > 0")


# -- base law ----------------------------------------------------------------

def _fd(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    step = h * np.maximum(1.0, np.abs(x))
    lo = np.maximum(x - step, 0.0)
    return (fun(x + step) - fun(lo)) / (x + step - lo)


def pressure(rho, law: PressureLaw):
    rho = _rho(rho)
    if law.kind == "isentropic":
        return law.a * rho**law.gamma
    return np.asarray(law.p(rho), dtype=float)


def dpressure(rho, law: PressureLaw):
    rho = _rho(rho)
    if law.kind == "isentropic":
        return law.a * law.gamma * rho ** (law.gamma - 1)
    if law.dp is not None:
        return np.asarray(law.dp(rho), dtype=float)
    return _fd(law.p, rho)


def d2pressure(rho, law: PressureLaw):
    rho = _rho(rho)
    if law.kind == "isentropic":
        g = law.gamma
        return law.a * g * (g - 1) * rho ** (g - 2)
    return _fd(lambda r: dpressure(r, law), rho)


def _generalized_potential(rho, law):
    # P(rho) = rho * int_1^rho p(z)/z^2 dz  solves  rho P' - P = p
    def one(r):
        if r == 0.0:
            return 0.0
        val, _ = integrate.quad(lambda z: law.p(z) / z**2, 1.0, r, limit=200)
        return r * val

    return np.vectorize(one, otypes=[float])(rho)


def potential(rho, law: PressureLaw):
    """Pressure potential with ``rho P' - P = p`` and ``P(0) = 0``."""
    rho = _rho(rho)
    if law.kind == "isentropic":
        return law.a / (law.gamma - 1) * rho**law.gamma
    if law.P is not None:
        return np.asarray(law.P(rho), dtype=float)
    return _generalized_potential(rho, law)


def dpotential(rho, law: PressureLaw):
    rho = _rho(rho)
    if law.kind == "isentropic":
        return law.a * law.gamma / (law.gamma - 1) * rho ** (law.gamma - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rho > 0, (pressure(rho, law) + potential(rho, law)) / np.where(rho > 0, rho, 1.0), 0.0)


def d2potential(rho, law: PressureLaw):
    rho = _rho(rho)
    if law.kind == "isentropic":
        return law.a * law.gamma * rho ** (law.gamma - 2)
    return dpressure(rho, law) / rho


def d3potential(rho, law: PressureLaw):
    rho = _rho(rho)
    if law.kind == "isentropic":
        g = law.gamma
        return law.a * g * (g - 2) * rho ** (g - 3)
    return (d2pressure(rho, law) * rho - dpressure(rho, law)) / rho**2


# -- regularised law ---------------------------------------------------------

def pressure_reg(rho, law: PressureLaw, delta: float = 0.0, Gamma: float = 6.0):
    """``p(rho) + delta (rho + rho**Gamma)``."""
    rho = _rho(rho)
    return pressure(rho, law) + delta * (rho + rho**Gamma)


def dpressure_reg(rho, law, delta=0.0, Gamma=6.0):
    rho = _rho(rho)
    return dpressure(rho, law) + delta * (1.0 + Gamma * rho ** (Gamma - 1))


def d2pressure_reg(rho, law, delta=0.0, Gamma=6.0):
    rho = _rho(rho)
    return d2pressure(rho, law) + delta * Gamma * (Gamma - 1) * rho ** (Gamma - 2)


def _xlogx(rho):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rho > 0, rho * np.log(np.where(rho > 0, rho, 1.0)), 0.0)


def potential_reg(rho, law: PressureLaw, delta: float = 0.0, Gamma: float = 6.0):
    rho = _rho(rho)
    out = potential(rho, law)
    if delta:
        out = out + delta * (_xlogx(rho) + rho**Gamma / (Gamma - 1))
    return out


def dpotential_reg(rho, law, delta=0.0, Gamma=6.0):
    rho = _rho(rho)
    out = dpotential(rho, law)
    if delta:
        with np.errstate(divide="ignore"):
            out = out + delta * (np.log(rho) + 1.0 + Gamma / (Gamma - 1) * rho ** (Gamma - 1))
    return out


def d2potential_reg(rho, law, delta=0.0, Gamma=6.0):
    rho = _rho(rho)
    out = d2potential(rho, law)
    if delta:
        with np.errstate(divide="ignore"):
            out = out + delta * (1.0 / rho + Gamma * rho ** (Gamma - 2))
    return out


def d3potential_reg(rho, law, delta=0.0, Gamma=6.0):
    rho = _rho(rho)
    out = d3potential(rho, law)
    if delta:
        with np.errstate(divide="ignore"):
            out = out + delta * (-1.0 / rho**2 + Gamma * (Gamma - 2) * rho ** (Gamma - 3))
    return out


def relative_potential(rho, r, law: PressureLaw, delta: float = 0.0, Gamma: float = 6.0):
    """``H(rho, r) = P(rho) - P'(r)(rho - r) - P(r)``."""
    rho = _rho(rho)
    r = _rho(r)
    if delta and np.any(r == 0):
        raise DomainError("relative potential of the regularised law needs r > 0")
    return (
        potential_reg(rho, law, delta, Gamma)
        - dpotential_reg(r, law, delta, Gamma) * (rho - r)
        - potential_reg(r, law, delta, Gamma)
    )


# -- cut-offs ----------------------------------------------------------------

def chi(v):
    """Monotone C1 cut-off: 1 for ``v <= 0``, smoothstep down to 0 at ``v >= 1``."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    out = 1.0 - v * v * (3.0 - 2.0 * v)
    return out if out.ndim else float(out)


def truncate_Tk(s, k):
    """``T_k(s) = k T(s/k)`` with ``T`` quadratic and concave on ``(1, 3)``.

    On the transition ``T_k(s) = s - (s - k)**2 / (4k)``, the cubic Hermite
    interpolant of ``T(1)=1, T'(1)=1, T(3)=2, T'(3)=0`` (its cubic term vanishes).
    """
    s = np.asarray(s, dtype=float)
    out = np.where(s <= k, s, np.where(s >= 3 * k, 2.0 * k, s - (s - k) ** 2 / (4.0 * k)))
    return out if out.ndim else float(out)


def dtruncate_Tk(s, k):
    s = np.asarray(s, dtype=float)
    out = np.where(s <= k, 1.0, np.where(s >= 3 * k, 0.0, 1.0 - (s - k) / (2.0 * k)))
    return out if out.ndim else float(out)


def renorm_Lk(z, k):
    """Renormalising function with ``z L_k'(z) - L_k(z) = T_k(z)``.

    ``z log z`` below ``k``; above, ``z log k + z * int_k^z T_k(s)/s**2 ds``
    evaluated in closed form for the quadratic transition of ``truncate_Tk``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("L_k needs z >= 0")
    zc = np.clip(z, k, 3 * k)
    # int_k^zc (1/s - (s-k)^2/(4 k s^2)) ds
    inner = 1.5 * np.log(zc / k) - (zc - k) / (4.0 * k) + 0.25 * (k / zc - 1.0)
    zt = np.maximum(z, 3 * k)
    inner = inner + 2.0 * k * (1.0 / (3.0 * k) - 1.0 / zt)
    upper = z * np.log(k) + z * inner
    out = np.where(z < k, _xlogx(z), upper)
    return out if out.ndim else float(out)


# -- validation --------------------------------------------------------------

@dataclass
class PressureLawReport:
    passed: bool
    p0: float
    envelope_a: float
    envelope_b: float
    violations: list[str]


def validate_pressure_law(law: PressureLaw, samples, envelope_a: float | None = None,
                          envelope_b: float | None = None, tol: float = 1e-10):
    """Check ``p(0) = 0`` and the two-sided ``p'`` envelope on sampled densities.

    The envelope constant ``a`` is fitted: the report carries the smallest
    ``a >= 1`` for which ``rho**(gamma-1)/a - b <= p' <= a rho**(gamma-1) + b``
    holds on every sample (``inf`` when no finite ``a`` works). A generalized
    law additionally fails when the fit exceeds its declared ``a`` (or
    ``envelope_a`` when given). ``p'`` comes from ``law.dp`` or a central
    difference.
    """
    samples = _rho(np.atleast_1d(samples))
    b = law.b if envelope_b is None else envelope_b
    violations = []
    p0 = float(pressure(np.array(0.0), law))
    if abs(p0) > tol:
        violations.append(f"p(0) = {p0:g} != 0")
    dp = dpressure(samples, law)
    if law.kind == "generalized" and law.dp is None:
        h = 1e-5 * np.maximum(1.0, samples)
        lo = np.maximum(samples - h, 0.0)
        dp = (pressure(samples + h, law) - pressure(lo, law)) / (samples + h - lo)
    pos = samples > 0
    w = samples[pos] ** (law.gamma - 1)
    d = dp[pos]
    a_fit = 1.0
    if w.size:
        upper = (d - b) / w
        a_fit = max(a_fit, float(np.max(upper)))
        low_ok = d + b > 0
        if not np.all(low_ok):
            bad = samples[pos][~low_ok][0]
            violations.append(f"p'({bad:g}) + b <= 0: lower envelope unattainable")
            a_fit = np.inf
        else:
            a_fit = max(a_fit, float(np.max(w / (d + b))))
    if envelope_a is None and law.kind == "generalized":
        envelope_a = law.a
    if envelope_a is not None and np.isfinite(a_fit) and a_fit > envelope_a * (1 + 1e-9):
        violations.append(f"p' leaves the envelope with a={envelope_a:g} (needs a={a_fit:g})")
    return PressureLawReport(not violations, p0, a_fit, b, violations)
