"""Command-line entry point: ``cell``, ``simulate``, ``converge`` and ``check``.

Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .. import __version__, energy, io, materials, minimize, plate, rve
from . import checks, studies
from .config import ConfigError, RunConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3

VALIDATION_ERRORS = (ConfigError, materials.MaterialError, plate.PlateMeshError, rve.MeshError,
                     minimize.AdmissibilityError, energy.CacheMissError)
SOLVER_ERRORS = (rve.CorrectorSolveError, minimize.LineSearchError, minimize.RetractionError,
                 np.linalg.LinAlgError)


def metadata(cfg: RunConfig, command: str) -> dict:
    return {"tool": "twoscale_plate", "version": __version__, "command": command,
            "seed": cfg.seed, "config_file": cfg.source, "config": cfg.raw,
            "warnings": list(cfg.warnings)}


def _ensure_out(cfg: RunConfig):
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# coefficients


def coefficient_field(cfg: RunConfig, mesh: plate.Triangulation, rve_mesh=None):
    c = cfg.raw["coefficients"]
    if c.get("mode", "cell") == "analytic":
        B = np.asarray(c.get("Beff", np.zeros((2, 2))), float)
        return energy.CoefficientField.isotropic(mesh, float(c.get("lam", 1.0)), float(c.get("mu", 1.0)), B)
    spec = cfg.material()
    rmesh = rve_mesh or cfg.rve_mesh(spec=spec)
    return energy.CoefficientField.from_cell_solves(mesh, spec, cfg.gamma, rmesh, threads=cfg.threads)


# ---------------------------------------------------------------------------
# subcommands


def cmd_cell(cfg: RunConfig):
    spec = cfg.material()
    mesh = cfg.rve_mesh(spec=spec)
    s = np.asarray(cfg.raw["cell"].get("s", [0.0, 0.0]), float)
    outs = rve.solve_correctors(spec, s, cfg.gamma, mesh)
    out = _ensure_out(cfg)
    doc = {"metadata": metadata(cfg, "cell"), "s": s, **outs.to_dict()}
    io.write_json(out / "cell.json", doc)
    if cfg.raw["cell"].get("export_vtk"):
        pts = mesh.nodes()
        data = {f"corrector_{i}": c.phi for i, c in enumerate(outs.correctors)}
        io.write_vtk(out / "correctors.vtk", pts, mesh.element_nodes(), io.VTK_HEXAHEDRON,
                     point_data=data)
    print(io.dumps_json({"Qhat": outs.Qhat, "Bhat": outs.Bhat, "Beff": outs.Beff}))
    return outs


def cmd_simulate(cfg: RunConfig):
    mesh = cfg.plate_mesh()
    bc = cfg.dirichlet(mesh)
    coeffs = coefficient_field(cfg, mesh)
    scfg = cfg.solver()
    seed = dict(scfg.seed)
    if seed.get("kind") == "perturbed":
        seed.setdefault("seed", cfg.seed)
    w0 = minimize.seed_deformation(seed, mesh, bc)
    out = _ensure_out(cfg)
    try:
        w, report = minimize.minimize_energy(w0, coeffs, bc, scfg)
    except minimize.LineSearchError as exc:
        exc.report.write_csv(out / "iterations.csv")
        raise
    report.write_csv(out / "iterations.csv")
    rep = energy.assemble_energy(w, coeffs, with_offset=True)
    w.export_vtk(out / "deformation.vtk")
    doc = {"metadata": metadata(cfg, "simulate"), "status": report.status,
           "iterations": report.iterations, "area": float(np.sum(mesh.area)),
           "mean_curvature_magnitude": energy.mean_curvature_magnitude(w),
           "max_isometry_violation": float(np.max(w.isometry_violation(), initial=0.0)),
           **rep.to_dict()}
    io.write_json(out / "energy.json", doc)
    print(f"status={report.status} iterations={report.iterations} energy={io.fmt(rep.total)}")
    return w, report, rep


def _macro_reference(cfg: RunConfig, mesh, u):
    """Exact reformulated energy for analytic coefficients on a rectangle, else ``None``."""
    c = cfg.raw["coefficients"]
    p = cfg.raw["plate"]
    if c.get("mode", "cell") != "analytic" or p.get("mesh_file"):
        return None
    Q = rve.analytic_qhat_isotropic(float(c.get("lam", 1.0)), float(c.get("mu", 1.0)))
    B = np.asarray(c.get("Beff", np.zeros((2, 2))), float)
    bounds = (0.0, float(p["width"]), 0.0, float(p["height"]))
    full = energy.reference_energy_original(u, lambda s: Q, lambda s: B, bounds)
    offset = rve.qhom_eval(Q, B) * float(p["width"]) * float(p["height"])
    return full - offset, "derived", "continuum energy of the analytic map minus the constant offset"


def cmd_converge(cfg: RunConfig):
    conv = cfg.raw["converge"]
    mode = conv.get("mode", "micro")
    hs = [int(n) for n in conv.get("h_list", [4, 8, 16])]
    levels = [int(k) for k in conv.get("H_levels", [0, 1, 2])]
    if mode in ("micro", "simultaneous", "commute") and len(hs) < 3:
        raise ConfigError("converge.h_list needs at least 3 levels")
    if mode in ("macro", "simultaneous", "commute") and len(levels) < 3:
        raise ConfigError("converge.H_levels needs at least 3 levels")
    spec = cfg.material()
    u = studies.deformation_from_desc(conv.get("deformation"))
    base = cfg.plate_mesh()
    if mode == "micro":
        table = studies.micro_study(spec, cfg.gamma, hs, conv.get("s", (0.0, 0.0)), cfg.threads)
    elif mode == "macro":
        table = studies.macro_study(base, levels, u, lambda m: coefficient_field(cfg, m),
                                    _macro_reference(cfg, base, u))
    elif mode == "simultaneous":
        table = studies.simultaneous_study(spec, cfg.gamma, hs, base, levels, u, cfg.threads)
    else:
        table = studies.commute_study(spec, cfg.gamma, hs, base, levels, u, cfg.threads)
    out = _ensure_out(cfg)
    table.reference["metadata"] = metadata(cfg, "converge")
    table.write(out)
    sys.stdout.write(table.csv())
    if table.summary:
        print(io.dumps_json(table.summary))
    return table


def cmd_check(cfg: RunConfig, battery=None):
    results = checks.run_battery(cfg.seed, battery)
    for r in results:
        print(r.line())
    out = _ensure_out(cfg)
    io.write_json(out / "check.json", {"metadata": metadata(cfg, "check"),
                                       "results": [r.to_dict() for r in results]})
    return results


# ---------------------------------------------------------------------------
# argument handling


def build_parser():
    parser = argparse.ArgumentParser(prog="twoscale-plate", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--threads", type=int, help="worker threads for independent cell solves")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("cell", "solve one cell problem"), ("simulate", "minimize the plate energy"),
                       ("converge", "run a convergence study"), ("check", "run the invariant battery")):
        p = sub.add_parser(name, help=text)
        p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")
    return parser


def _fail(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = RunConfig.load(args.config, args.overrides, out=args.out, seed=args.seed,
                             threads=args.threads)
        for w in cfg.warnings:
            log.warning(w)
        if args.command == "check":
            results = cmd_check(cfg)
            return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK
        {"cell": cmd_cell, "simulate": cmd_simulate, "converge": cmd_converge}[args.command](cfg)
    except VALIDATION_ERRORS as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    except SOLVER_ERRORS as exc:
        return _fail(EXIT_SOLVER, "solver", exc)
    except OSError as exc:
        return _fail(EXIT_VALIDATION, "io", exc)
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
