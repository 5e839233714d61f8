"""Ensemble and refinement drivers.

Each path is a pure function of ``(config, path index)``: its Brownian
increments come from the stream ``(seed, path)``. Paths are scheduled on a
process pool and merged in path order, so outputs do not depend on the
worker count.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path

import numpy as np

from ..diagnostics import energy_balance_residual, ensemble_moment
from ..forcing import Stream
from ..stepper import run_trajectory
from .config import ConfigError, RunConfig, dump_config
from .initial import build_initial
from .io import write_snapshot, write_timeseries

__all__ = ["PathResult", "EnsembleRecord", "run_path", "run_ensemble", "StudyReport", "refinement_study"]

log = logging.getLogger(__name__)

SERIES = ("kinetic", "total", "u_norm")


@dataclass
class PathResult:
    path: int
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, rho, m)
    series: dict = field(default_factory=dict)
    mass0: float = float("nan")
    massT: float = float("nan")
    residual: float = float("nan")
    residual_dt: float = float("nan")
    L: float = float("nan")
    origin: float = 0.0
    failed: bool = False
    error: str = ""
    u_final: np.ndarray | None = None

    @property
    def final(self):
        return self.snapshots[-1] if self.snapshots else None


def run_path(cfg: RunConfig, path: int) -> PathResult:
    """Run one trajectory of ``cfg`` with stream ``(seed, path)``."""
    res = PathResult(path)
    try:
        state0, _ = build_initial(cfg)
        stepper = cfg.stepper()
        traj = run_trajectory(state0, cfg.stepping.T, stepper, cfg.noise_model(), Stream(cfg.seed, path))
    except Exception as exc:  # a failed path is recorded, the ensemble goes on
        res.failed, res.error = True, f"{type(exc).__name__}: {exc}"
        log.warning("path %d failed: %s", path, res.error)
        return res
    grid = state0.grid
    res.L, res.origin = grid.L, grid.origin
    res.mass0 = state0.mass
    res.massT = traj.final.mass
    res.events = [dict(e) for e in traj.events]
    res.snapshots = [(t, s.rho_values.copy(), s.m_values.copy()) for t, s in traj.records]
    cad = cfg.diagnostics.cadence
    res.rows = [d.row() for i, d in enumerate(traj.diagnostics) if (i + 1) % cad == 0]
    e0 = traj.diagnostics[0].energy_start if traj.diagnostics else None
    ts = [0.0] + [d.t for d in traj.diagnostics]
    kin = [e0.kinetic if e0 else 0.0] + [d.energy_end.kinetic for d in traj.diagnostics]
    tot = [e0.total if e0 else 0.0] + [d.energy_end.total for d in traj.diagnostics]
    final_norm = float(np.sqrt(grid.integral(np.sum(traj.final.u_values**2, axis=0))))
    un = [d.u_norm for d in traj.diagnostics] + [final_norm]
    res.u_final = traj.final.u_values.copy()
    res.series = {"t": np.array(ts), "kinetic": np.array(kin), "total": np.array(tot), "u_norm": np.array(un)}
    if traj.diagnostics:
        res.residual = energy_balance_residual(traj)
        res.residual_dt = energy_balance_residual(traj, qv="dt")
    if traj.aborted:
        res.failed, res.error = True, "trajectory aborted: step size fell below h_min"
    return res


@dataclass
class EnsembleRecord:
    config: RunConfig
    results: list
    moments: dict
    mean_rows: list

    @property
    def failures(self) -> list[int]:
        return [r.path for r in self.results if r.failed]


def _map(fn, cfg, indices, workers):
    if workers <= 1:
        return [fn(cfg, i) for i in indices]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, repeat(cfg), indices))


def run_ensemble(cfg: RunConfig, M_paths: int, workers: int = 1, out=None) -> EnsembleRecord:
    """Run ``M_paths`` trajectories and merge their diagnostics in path order."""
    if M_paths < 1:
        raise ValueError("need at least one path")
    results = _map(run_path, cfg, range(M_paths), workers)
    ok = [r for r in results if not r.failed]
    moments = {}
    for name in SERIES:
        for p in (1, 2):
            if len(ok) >= 1:
                moments[f"{name}_p{p}"] = ensemble_moment([r.series[name] for r in ok], None, p)
    mean_rows = []
    if ok:
        n = min(len(r.series["t"]) for r in ok)
        for j in range(n):
            row = {"t": ok[0].series["t"][j]}
            for name in SERIES:
                vals = np.array([r.series[name][j] for r in ok])
                row[f"{name}_mean"] = float(np.mean(vals))
                row[f"{name}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            mean_rows.append(row)
    rec = EnsembleRecord(cfg, results, moments, mean_rows)
    if out is not None:
        write_ensemble(rec, out)
    return rec


def write_ensemble(rec: EnsembleRecord, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    # the output location is left out so two runs of one config compare byte for byte
    dump_config(dataclasses.replace(rec.config, output=None), out / "config.yaml")
    for r in rec.results:
        pdir = out / "paths" / f"path_{r.path:04d}"
        pdir.mkdir(parents=True, exist_ok=True)
        if r.failed and not r.snapshots:
            (pdir / "FAILED").write_text(r.error + "\n")
            continue
        write_timeseries(pdir / "timeseries.csv", r.rows)
        write_timeseries(pdir / "events.csv", r.events)
        grid_stub = _Stub(r.L)
        for i, (t, rho, m) in enumerate(r.snapshots):
            write_snapshot(pdir / f"snap_{i:05d}_rho.snsp", rho, t, grid_stub)
            write_snapshot(pdir / f"snap_{i:05d}_m.snsp", m, t, grid_stub)
        if r.failed:
            (pdir / "FAILED").write_text(r.error + "\n")
    write_timeseries(out / "ensemble_mean.csv", rec.mean_rows)
    mrows = [{"functional": k, "mean": v.mean, "half_width_95": v.half_width, "paths": v.n}
             for k, v in rec.moments.items()]
    write_timeseries(out / "moments.csv", mrows)
    (out / "summary.txt").write_text(summary_text(rec))


class _Stub:
    def __init__(self, L):
        self.L = L


def summary_text(rec: EnsembleRecord) -> str:
    lines = ["snsp ensemble summary", f"paths: {len(rec.results)}", f"failed paths: {len(rec.failures)}"]
    if rec.failures:
        lines.append("failed: " + ", ".join(str(p) for p in rec.failures))
    ok = [r for r in rec.results if not r.failed]
    if ok:
        drift = max(abs(r.massT - r.mass0) / r.mass0 for r in ok)
        lines.append(f"max relative mass drift: {drift:.3e}")
        lines.append(f"mean |energy residual| (realized QV): {np.mean([abs(r.residual) for r in ok]):.6e}")
        lines.append(f"mean |energy residual| (dt Ito term): {np.mean([abs(r.residual_dt) for r in ok]):.6e}")
        kinds = {}
        for r in ok:
            for e in r.events:
                kinds[e["kind"]] = kinds.get(e["kind"], 0) + 1
        lines.append("events: " + (", ".join(f"{k}={v}" for k, v in sorted(kinds.items())) or "none"))
    for k, v in rec.moments.items():
        name, p = k.rsplit("_p", 1)
        hw = f" +- {v.half_width:.2e}" if np.isfinite(v.half_width) else " (one path, no interval)"
        lines.append(f"E[sup {name}^{p}] = {v.mean:.6e}{hw}")
    return "\n".join(lines) + "\n"


# -- refinement ----------------------------------------------------------------

AXES = ("h", "N", "eps", "delta", "L")


@dataclass
class StudyReport:
    axis: str
    values: list
    diffs_u: list
    diffs_rho: list
    ratios: list
    orders: list
    masses: list
    residuals: list
    failed: list

    def rows(self) -> list[dict]:
        out = []
        for i, v in enumerate(self.values):
            r = {"level": i, self.axis: v, "mass_T": self.masses[i], "energy_residual": self.residuals[i]}
            if i < len(self.diffs_u):
                r.update(diff_u=self.diffs_u[i], diff_rho=self.diffs_rho[i])
            if i < len(self.ratios):
                r.update(ratio=self.ratios[i], order=self.orders[i])
            out.append(r)
        return out


def _level_config(cfg: RunConfig, axis: str, value, base: RunConfig) -> RunConfig:
    if axis == "h":
        return cfg.replace(**{"stepping.h": float(value)})
    if axis == "N":
        return cfg.replace(**{"grid.N": int(value)})
    if axis == "eps":
        return cfg.replace(**{"regularization.eps": float(value)})
    if axis == "delta":
        return cfg.replace(**{"regularization.delta": float(value)})
    if axis == "L":
        if base.whole_space is None:
            raise ConfigError(["whole_space: the L axis needs a whole-space configuration"])
        M = base.grid.M * float(value) / base.whole_space.L
        if abs(M - round(M)) > 1e-9 or round(M) % 2:
            raise ConfigError([f"grid.M: L={value} does not keep the grid spacing on an even grid"])
        return cfg.replace(**{"whole_space.L": float(value), "grid.M": int(round(M))})
    raise ConfigError([f"axis: unknown refinement axis {axis!r} (expected one of {AXES})"])


def _window(values, L, M, K):
    """Samples of a torus field ``[-L, L)^3`` lying in the box ``[-K, K]^3``, ordered by coordinate."""
    dx = 2 * L / M
    idx = np.arange(M)
    x = -L + dx * idx
    sel = idx[np.abs(x) <= K + 1e-9 * dx]
    ix = np.ix_(sel, sel, sel)
    return values[ix] if values.ndim == 3 else values[(slice(None),) + ix]


def refinement_study(cfg: RunConfig, axis: str, ladder, path: int = 0, workers: int = 1) -> StudyReport:
    """Run ``cfg`` at each ladder value and report successive differences and rates.

    Differences are L2 norms of terminal fields between consecutive levels;
    ``ratios[i] = diff[i] / diff[i + 1]`` and ``orders`` rescale them by the
    ladder spacing. The L axis compares fields on the fixed window
    ``whole_space.window`` (default: half the smallest torus half-width).
    """
    ladder = list(ladder)
    if len(ladder) < 3:
        raise ValueError("a refinement ladder needs at least three values")
    cfgs = [_level_config(cfg, axis, v, cfg) for v in ladder]
    results = [_map(run_path, c, [path], 1)[0] for c in cfgs] if workers <= 1 else _run_levels(cfgs, path, workers)
    failed = [i for i, r in enumerate(results) if r.failed]
    finals = [r.final for r in results]
    diffs_u, diffs_rho = [], []
    K = None
    if axis == "L":
        K = cfg.whole_space.window or min(ladder) / 2
    for i in range(len(ladder) - 1):
        a, b = finals[i], finals[i + 1]
        if a is None or b is None:
            diffs_u.append(float("nan"))
            diffs_rho.append(float("nan"))
            continue
        ca, cb = cfgs[i], cfgs[i + 1]
        ra, rb = a[1], b[1]
        ua, ub = results[i].u_final, results[i + 1].u_final
        if axis == "L":
            ra = _window(ra, ca.whole_space.L, ca.grid.M, K)
            rb = _window(rb, cb.whole_space.L, cb.grid.M, K)
            ua = _window(ua, ca.whole_space.L, ca.grid.M, K)
            ub = _window(ub, cb.whole_space.L, cb.grid.M, K)
        dv = cfgs[i].grid_spec().cell_volume
        diffs_u.append(float(np.sqrt(np.sum((ua - ub) ** 2) * dv)))
        diffs_rho.append(float(np.sqrt(np.sum((ra - rb) ** 2) * dv)))
    ratios, orders = [], []
    for i in range(len(diffs_u) - 1):
        r = diffs_u[i] / diffs_u[i + 1] if diffs_u[i + 1] > 0 else float("inf")
        ratios.append(r)
        step = abs(math.log(ladder[i] / ladder[i + 1])) if ladder[i] != ladder[i + 1] else float("nan")
        orders.append(math.log(r) / step if r > 0 and np.isfinite(r) and step > 0 else float("nan"))
    masses = [r.massT for r in results]
    residuals = [r.residual for r in results]
    return StudyReport(axis, ladder, diffs_u, diffs_rho, ratios, orders, masses, residuals, failed)


def _run_levels(cfgs, path, workers):
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run_path, cfgs, repeat(path)))
