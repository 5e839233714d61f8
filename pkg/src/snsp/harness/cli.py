"""Command-line entry point: ``python -m snsp <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 one or more path failures.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from ..diagnostics import effective_viscous_flux, energy, oscillation_defect, pressure_moment
from ..forcing import validate_noise_model
from ..poisson import solve_potential
from ..stepper import initial_state
from ..thermodynamics import validate_pressure_law
from .config import ConfigError, RunConfig, load_config, parse_config
from .drivers import AXES, refinement_study, run_ensemble
from .initial import build_initial, whole_space_energy_check, whole_space_profiles
from .io import read_snapshot, write_snapshot, write_timeseries

EXIT_OK, EXIT_CONFIG, EXIT_PATHS = 0, 2, 3


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, output=args.out)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    rec = run_ensemble(cfg, 1, 1, out=cfg.output)
    print(Path(cfg.output, "summary.txt").read_text(), end="")
    return EXIT_PATHS if rec.failures else EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _config(args)
    rec = run_ensemble(cfg, args.paths, args.workers, out=cfg.output)
    print(Path(cfg.output, "summary.txt").read_text(), end="")
    return EXIT_PATHS if rec.failures else EXIT_OK


def cmd_refine(args) -> int:
    cfg = _config(args)
    ladder = [float(v) for v in args.ladder.split(",")]
    if args.axis == "N":
        ladder = [int(v) for v in ladder]
    rep = refinement_study(cfg, args.axis, ladder, workers=args.workers)
    out = Path(cfg.output)
    write_timeseries(out / f"refine_{args.axis}.csv", rep.rows())
    for row in rep.rows():
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_PATHS if rep.failed else EXIT_OK


def cmd_wholespace(args) -> int:
    cfg = _config(args)
    if cfg.whole_space is None:
        raise ConfigError(["whole_space: section required for this subcommand"])
    state, data = build_initial(cfg)
    out = Path(cfg.output)
    write_snapshot(out / "rho0.snsp", data.rho0, 0.0, data.grid)
    write_snapshot(out / "m0.snsp", data.m0, 0.0, data.grid)
    write_snapshot(out / "f.snsp", data.f, 0.0, data.grid)
    rho0, m0, _ = whole_space_profiles(cfg)
    prm = cfg.params()
    check = whole_space_energy_check(data, rho0, m0, cfg.law(), cfg.physics.rho_bar, prm.delta, prm.Gamma)
    lines = [f"torus [-{cfg.whole_space.L}, {cfg.whole_space.L})^3, M={data.grid.M}",
             f"discarded background mass: {data.discarded_mass:.6e}",
             f"energy of built data: {check['E_built']:.6e}",
             f"energy of original data on the box: {check['E_original']:.6e}",
             f"max pointwise excess: {check['max_pointwise_excess']:.3e}",
             f"convexity bound: {'pass' if check['passed'] else 'FAIL'}"]
    (out / "wholespace.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if check["passed"] else EXIT_CONFIG


def cmd_validate(args) -> int:
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    rho = np.concatenate([[0.0], rng.uniform(0, 10, 2000)])
    rep = validate_pressure_law(cfg.law(), rho)
    print(f"pressure law: {'pass' if rep.passed else 'FAIL'} (a={rep.envelope_a:.4g}, b={rep.envelope_b:.4g})")
    for v in rep.violations:
        print("  " + v)
    ok = rep.passed
    model = cfg.noise_model()
    if model is not None:
        samples = [(None, float(r), float(f), rng.normal(size=3)) for r, f in
                   zip(rng.uniform(0, 5, 200), rng.uniform(0, 2, 200))]
        nrep = validate_noise_model(model, samples)
        print(f"noise model: {'pass' if nrep.passed else 'FAIL'} (growth {nrep.growth_ratio:.4g}, "
              f"derivative {nrep.derivative_ratio:.4g}, sum c_k^2 {nrep.summability:.4g})")
        for v in nrep.violations:
            print("  " + v)
        ok = ok and nrep.passed
    return EXIT_OK if ok else EXIT_CONFIG


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    grid = cfg.grid_spec()
    law, prm = cfg.law(), cfg.params()
    root = Path(args.run)
    paths = sorted(p for p in (root / "paths").iterdir() if p.is_dir()) if (root / "paths").exists() else [root]
    _, data = build_initial(cfg)
    rows = []
    series = {}
    for pdir in paths:
        snaps = sorted(pdir.glob("snap_*_rho.snsp"))
        for s in snaps:
            rho, meta = read_snapshot(s, grid=grid)
            m, _ = read_snapshot(str(s).replace("_rho.snsp", "_m.snsp"), grid=grid)
            st = initial_state(grid, rho, f=data.f, sigma=prm.sigma, m=m, tol=cfg.stepping.mass_tol)
            e = energy(st, law, prm, cfg.diagnostics.energy_form)
            rows.append({"path": pdir.name, "t": meta["t"], "kinetic": e.kinetic, "potential": e.potential,
                         "field": e.field, "total": e.total,
                         "flux_rho": effective_viscous_flux(st, law, prm, "rho"),
                         "pressure_moment": pressure_moment(st, law, prm.delta, prm.Gamma, 1 / 3),
                         "poisson_mean": solve_potential(rho, data.f, prm.sigma, grid=grid).mean})
            series.setdefault(pdir.name, []).append((meta["t"], rho))
    if args.compare:
        other = Path(args.compare)
        for name, ser in series.items():
            snaps = sorted((other / "paths" / name).glob("snap_*_rho.snsp"))
            b = [read_snapshot(s, grid=grid)[0] for s in snaps]
            if len(b) == len(ser):
                osc = oscillation_defect(np.stack([r for _, r in ser]), np.stack(b), law.gamma,
                                         times=[t for t, _ in ser], cell_volume=grid.cell_volume)
                print(f"{name}: oscillation defect vs {other}: {osc:.6e}")
    write_timeseries(root / "diagnose.csv", rows)
    print(f"wrote {len(rows)} rows to {root / 'diagnose.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snsp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="YAML run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        return sp

    common(sub.add_parser("simulate", help="run one trajectory")).set_defaults(func=cmd_simulate)
    sp = common(sub.add_parser("ensemble", help="run a Monte Carlo ensemble"))
    sp.add_argument("--paths", type=int, default=8)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_ensemble)
    sp = common(sub.add_parser("refine", help="refinement study along one parameter axis"))
    sp.add_argument("--axis", choices=AXES, required=True)
    sp.add_argument("--ladder", required=True, help="comma-separated values, at least three")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_refine)
    common(sub.add_parser("wholespace", help="build and check increasing-torus data")).set_defaults(
        func=cmd_wholespace)
    common(sub.add_parser("validate", help="check the pressure law and noise model")).set_defaults(
        func=cmd_validate)
    sp = common(sub.add_parser("diagnose", help="evaluate functionals on stored snapshots"))
    sp.add_argument("run", help="run directory written by simulate/ensemble")
    sp.add_argument("--compare", metavar="DIR", help="second run for the oscillation defect")
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
