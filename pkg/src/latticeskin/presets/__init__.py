"""Named model builders and the bundled run configurations."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import problems
from ..coupling import build_coupling
from ..ffd import FFDPrism
from ..shape import ShapeModel, calibrate_form_factor, form_find
from ..shell import ShellMaterial, assemble_shell
from ..topopt import Structure

CONFIG_DIR = Path(__file__).parent


@dataclass
class Case:
    """A ready-to-solve structure plus, for shape work, its FFD model."""
    structure: Structure
    model: ShapeModel | None = None
    notes: dict | None = None


def _lattice_case(fn):
    def build(params):
        return Case(Structure(fn(**params)))
    return build


def _sandwich(params):
    return Case(problems.sandwich_cantilever(**params))


def _roof(params):
    model = problems.pentagon_roof(**params)
    return Case(model.structure(), model)


BUILDERS = {
    "cantilever_2d": _lattice_case(problems.cantilever_2d),
    "mbb": _lattice_case(problems.mbb),
    "mbb_nonuniform": _lattice_case(problems.mbb_nonuniform),
    "sandwich_cantilever": _sandwich,
    "pentagon_roof": _roof,
}


def available() -> list[str]:
    """Bundled configuration files by stem."""
    return sorted(p.stem for p in CONFIG_DIR.glob("*.yaml"))


def config_path(name: str) -> Path:
    return CONFIG_DIR / f"{name}.yaml"


def shape_model(structure: Structure, prism_cfg: dict) -> ShapeModel:
    """Wrap a structure for shape work with a prism fitted around it."""
    pts = [structure.lattice.joints]
    mesh = material = None
    supports, pressure, loaded = {}, (0.0, 0.0, 0.0), None
    if structure.shell is not None:
        sh = structure.shell
        mesh, material = sh.mesh, sh.material
        pts.append(mesh.vertices)
        fixed = sh.fixed.reshape(-1, 3)
        supports = {int(v): tuple(bool(x) for x in fixed[v]) for v in np.flatnonzero(fixed.any(axis=1))}
        pressure, loaded = sh.pressure, sh.loaded_faces
    prism = FFDPrism.around(np.vstack(pts), tuple(prism_cfg.get("degrees", (2, 2, 2))),
                            float(prism_cfg.get("inflate", 0.01)))
    if prism_cfg.get("fixed"):
        prism = prism.with_fixed(prism_cfg["fixed"])
    return ShapeModel(structure.lattice, prism, mesh, material, structure.coupling, pressure, supports, loaded)


def refit_prism(model: ShapeModel, prism_cfg: dict) -> ShapeModel:
    pts = [model.lattice.joints] + ([model.mesh.vertices] if model.mesh is not None else [])
    prism = FFDPrism.around(np.vstack(pts), tuple(prism_cfg.get("degrees", (2, 2, 2))),
                            float(prism_cfg.get("inflate", 0.01)))
    if prism_cfg.get("fixed"):
        prism = prism.with_fixed(prism_cfg["fixed"])
    return replace(model, prism=prism)


def apply_formfind(model: ShapeModel, spec: dict) -> tuple[ShapeModel, dict]:
    """Form-find with a given ``scale`` or calibrate it to a ``target`` compliance."""
    if "scale" in spec:
        s = float(spec["scale"])
        new = form_find(model, s)
        return new, {"form_factor": s}
    s, new, J = calibrate_form_factor(model, float(spec["target"]), float(spec["s_max"]),
                                      rtol=float(spec.get("rtol", 1e-3)))
    return new, {"form_factor": s, "form_found_J": J}


def build_case(cfg) -> Case:
    """Model described by a :class:`~latticeskin.io.RunConfig`."""
    from ..io import read_lattice, read_mesh
    m = cfg.model
    if "preset" in m:
        case = BUILDERS[m["preset"]](dict(m.get("params") or {}))
    else:
        lat = read_lattice(cfg.path(m["lattice_file"]))
        shell = coupling = None
        if "mesh_file" in m:
            mesh = read_mesh(cfg.path(m["mesh_file"]))
            sh = m["shell"]
            mat = ShellMaterial(float(sh["E"]), float(sh["nu"]), float(sh["t"]))
            sup = {int(v): (True, True, True) for v in sh.get("supports", [])}
            shell = assemble_shell(mesh, mat, tuple(sh.get("pressure", (0, 0, 0))), supports=sup)
            if lat.attached.any():
                coupling = build_coupling(mesh, lat)
        case = Case(Structure(lat, shell, coupling))
    notes = {}
    if "formfind" in m:
        model = case.model or shape_model(case.structure, cfg.prism)
        model, notes = apply_formfind(model, m["formfind"])
        case = Case(model.structure(), model)
    if cfg.problem in ("shapeopt", "sequential"):
        model = case.model
        model = shape_model(case.structure, cfg.prism) if model is None else refit_prism(model, cfg.prism)
        case = Case(case.structure, model)
    case.notes = notes
    return case
