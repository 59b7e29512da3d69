"""Command line entry point: ``python -m latticeskin <command> --config FILE``.

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("latticeskin")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latticeskin", description="Lattice-skin analysis and optimisation")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("analyze", "single coupled solve"),
                       ("topopt", "lattice topology optimisation"),
                       ("shapeopt", "FFD shape optimisation"),
                       ("sequential", "shape then topology optimisation"),
                       ("extract", "threshold, recover and fill a lattice; count mechanisms")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="YAML run configuration or bundled preset name")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, default=None, help="BLAS thread count")
        s.add_argument("--seed", type=int, default=0, help="reserved; runs are deterministic")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ValueError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _resolve_config(arg: str):
    from .io import load_config
    from .presets import config_path
    p = Path(arg)
    if not p.exists() and config_path(arg).exists():
        p = config_path(arg)
    return load_config(p)


def _topopt_config(block: dict):
    from .topopt import TopOptConfig
    keys = ("volume_fraction", "radius", "penalisation", "max_iter", "rtol", "window", "move",
            "curvature", "method", "filter", "snapshot_every")
    return TopOptConfig(**{k: block[k] for k in keys if k in block})


def _shape_config(block: dict):
    from .shape import ShapeOptConfig
    keys = ("max_iter", "rtol", "window", "method", "bound", "step", "snapshot_every")
    return ShapeOptConfig(**{k: block[k] for k in keys if k in block})


def _export_structure(path, st, sol=None, kept=None, subdivisions=2):
    from .io import export_vtk
    export_vtk(path, st.lattice, st.shell.mesh if st.shell is not None else None,
               u_lattice=None if sol is None else sol.u_lattice,
               u_shell=None if sol is None else sol.u_shell, kept=kept, subdivisions=subdivisions)


def _extraction(out: Path, lattice, threshold, report: dict, fixed_joints=None):
    from .extraction import extraction_pipeline
    from .io import write_lattice
    rep = extraction_pipeline(lattice, lattice.areas, threshold, fixed_joints=fixed_joints)
    kept_lat = lattice.with_areas(lattice.areas)
    write_lattice(out / "extracted_lattice.txt", _subset(kept_lat, rep.kept))
    report.update({"extraction_threshold": threshold, "kept_struts": rep.n_kept,
                   "removed_struts": rep.n_removed, "mechanisms": rep.mechanisms})
    return rep


def _subset(lat, kept):
    """Lattice restricted to kept struts; removed struts get zero area in cells."""
    import numpy as np
    from dataclasses import replace
    areas = np.where(kept, np.maximum(lat.areas, 0.0), 0.0)
    ids = np.flatnonzero(kept)
    remap = -np.ones(lat.n_struts, dtype=np.int64)
    remap[ids] = np.arange(len(ids))
    cells = []
    for c in lat.cells:
        s = tuple(int(remap[i]) for i in c.strut_ids if remap[i] >= 0)
        if s:
            d = tuple(int(remap[i]) for i in c.diagonal_ids if remap[i] >= 0)
            cells.append(replace(c, id=len(cells), strut_ids=s, diagonal_ids=d))
    return replace(lat, struts=lat.struts[ids], areas=areas[ids], reference_areas=lat.reference_areas[ids],
                   cells=cells)


def _fixed_joints(structure):
    """Joints held by the shell count as fixed in the lattice mechanism check."""
    if structure.coupling is None:
        return None
    return structure.coupling.joints


def _write_topopt(out: Path, res, cfg, report: dict, prefix: str = ""):
    from .io import write_csv, write_histogram
    from .topopt import intermediate_fraction
    write_csv(out / f"{prefix}history.csv", ["iteration", "J", "volume_fraction"],
              [(i, J, V) for i, (J, V) in enumerate(zip(res.J_history, res.volume_history))])
    lat = res.lattice
    write_csv(out / f"{prefix}areas.csv", ["strut", "area", "relative_area"],
              [(i, a, r) for i, (a, r) in enumerate(zip(res.areas, res.rho))])
    write_histogram(out / f"{prefix}histogram.csv", res.areas, lat.reference_areas, cfg.output["histogram_bins"])
    L = lat.lengths()
    report.update({"J": res.J, "status": res.status, "iterations": len(res.J_history) - 1,
                   "volume_fraction": float(res.areas @ L) / float(lat.reference_areas @ L),
                   "intermediate_fraction": intermediate_fraction(res.areas, lat.reference_areas)})


def cmd_analyze(cfg, case, out: Path) -> dict:
    from .io import write_report
    st = case.structure
    sol, _ = st.solve()
    report = {"command": "analyze", "J": sol.J, "energy": sol.energy, "coupling_residual": sol.residual,
              **(case.notes or {})}
    _export_structure(out / "result.vtk", st, sol, subdivisions=cfg.output["vis_subdivisions"])
    write_report(out / "report.txt", report)
    return report


def cmd_topopt(cfg, case, out: Path) -> dict:
    from dataclasses import replace
    from .io import write_lattice, write_report
    from .topopt import run_topopt
    tcfg = _topopt_config(cfg.topopt)
    st = case.structure
    snaps = out / "snapshots"

    def cb(it, x, f):
        log.info("topopt iteration %d J=%.6g", it, f)
        if tcfg.snapshot_every and it % tcfg.snapshot_every == 0:
            snaps.mkdir(exist_ok=True)
            write_lattice(snaps / f"density_{it:04d}.txt", st.lattice.with_areas(x * st.lattice.reference_areas))

    res = run_topopt(st, tcfg, callback=cb)
    report = {"command": "topopt", **(case.notes or {})}
    _write_topopt(out, res, cfg, report)
    final = replace(st, lattice=res.lattice)
    rep = _extraction(out, res.lattice, float(cfg.extraction["threshold"]), report, _fixed_joints(st))
    _export_structure(out / "result.vtk", final, kept=rep.kept, subdivisions=cfg.output["vis_subdivisions"])
    write_report(out / "report.txt", report)
    return report


def _shape_callback(cfg, scfg, model, out: Path):
    from .io import export_vtk

    def cb(it, D, f):
        log.info("shapeopt iteration %d J=%.6g", it, f)
        if scfg.snapshot_every and it % scfg.snapshot_every == 0:
            (out / "geometry").mkdir(exist_ok=True)
            st = model.structure(D)
            export_vtk(out / "geometry" / f"shape_{it:04d}.vtk", st.lattice,
                       st.shell.mesh if st.shell is not None else None, subdivisions=cfg.output["vis_subdivisions"])
    return cb


def cmd_shapeopt(cfg, case, out: Path) -> dict:
    from .io import write_csv, write_report
    from .shape import run_shapeopt
    scfg = _shape_config(cfg.shapeopt)
    model = case.model
    res = run_shapeopt(model, scfg, callback=_shape_callback(cfg, scfg, model, out))
    write_csv(out / "history.csv", ["iteration", "J", "volume"],
              [(i, J, V) for i, (J, V) in enumerate(zip(res.J_history, res.volume_history))])
    write_csv(out / "control_displacements.csv", ["point", "dx", "dy", "dz"],
              [(i, *d) for i, d in enumerate(res.displacements)])
    st = res.structure()
    sol, _ = st.solve()
    _export_structure(out / "result.vtk", st, sol, subdivisions=cfg.output["vis_subdivisions"])
    report = {"command": "shapeopt", **(case.notes or {}), "J_initial": res.J_history[0], "J": res.J,
              "status": res.status, "iterations": len(res.J_history) - 1,
              "volume_initial": res.volume_history[0], "volume": model.volume(res.displacements)}
    write_report(out / "report.txt", report)
    return report


def cmd_sequential(cfg, case, out: Path) -> dict:
    from .io import write_csv, write_report
    from .shape import run_sequential
    scfg = _shape_config(cfg.shapeopt)
    tcfg = _topopt_config(cfg.topopt)
    model = case.model
    res = run_sequential(model, scfg, tcfg, shape_callback=_shape_callback(cfg, scfg, model, out),
                         topopt_callback=lambda it, x, f: log.info("topopt iteration %d J=%.6g", it, f))
    rows = [("shape", i, J) for i, J in enumerate(res.shape.J_history)]
    rows.append(("reduction", 0, res.J_reduced))
    rows += [("topology", i, J) for i, J in enumerate(res.topology.J_history)]
    write_csv(out / "history.csv", ["stage", "iteration", "J"], rows)
    report = {"command": "sequential", **(case.notes or {}), "J_initial": res.shape.J_history[0],
              "J_shape": res.shape.J, "J_reduced": res.J_reduced}
    topo = {}
    _write_topopt(out, res.topology, cfg, topo, prefix="topology_")
    report.update({"J_final": topo["J"], "topology_status": topo["status"],
                   "volume_fraction": topo["volume_fraction"],
                   "intermediate_fraction": topo["intermediate_fraction"]})
    rep = _extraction(out, res.topology.lattice, float(cfg.extraction["threshold"]), report,
                      _fixed_joints(res.structure))
    _export_structure(out / "result.vtk", res.structure, kept=rep.kept, subdivisions=cfg.output["vis_subdivisions"])
    write_report(out / "report.txt", report)
    return report


def cmd_extract(cfg, case, out: Path) -> dict:
    from .io import write_report
    report = {"command": "extract"}
    st = case.structure
    rep = _extraction(out, st.lattice, float(cfg.extraction["threshold"]), report, _fixed_joints(st))
    _export_structure(out / "result.vtk", st, kept=rep.kept, subdivisions=cfg.output["vis_subdivisions"])
    write_report(out / "report.txt", report)
    return report


COMMANDS = {"analyze": cmd_analyze, "topopt": cmd_topopt, "shapeopt": cmd_shapeopt,
            "sequential": cmd_sequential, "extract": cmd_extract}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _set_threads(args.threads)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .coupling import CouplingError, MechanismError
    from .io import ConfigError
    from .optimizer import OptimizerError
    from .shell import DegenerateGeometryError
    from .presets import build_case

    try:
        cfg = _resolve_config(args.config)
        if cfg.problem != args.command:
            raise ConfigError(f"config is for '{cfg.problem}', not '{args.command}'")
        if args.out:
            cfg.output["directory"] = args.out
        out = Path(cfg.output["directory"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(cfg.dump())
        case = build_case(cfg)
    except (ConfigError, FileNotFoundError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MechanismError, CouplingError, DegenerateGeometryError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    t0 = time.time()
    try:
        report = COMMANDS[args.command](cfg, case, out)
    except (MechanismError, CouplingError, OptimizerError, DegenerateGeometryError, FloatingPointError,
            ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for k, v in report.items():
        print(f"{k}: {v}")
    print(f"seed: {args.seed}")
    print(f"elapsed_s: {time.time() - t0:.1f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
