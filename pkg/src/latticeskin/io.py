"""Run configuration, model files and result export.

All numbers are written with 17 significant digits and in a fixed order, so
repeated runs produce identical files.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import LatticeModel, UnitCell
from .subdivision import ShellMesh

COMMANDS = ("analyze", "topopt", "shapeopt", "sequential", "extract")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# run configuration

_DEFAULTS = {
    "topopt": {"volume_fraction": 0.4, "radius": 1.0, "penalisation": {"kind": "power", "p": 3.0},
               "max_iter": 300, "rtol": 1e-5, "window": 3, "move": 0.05, "curvature": "auto",
               "method": "sqp-diag", "filter": True, "snapshot_every": 0},
    "shapeopt": {"max_iter": 300, "rtol": 1e-5, "window": 3, "method": "slsqp", "bound": 0.5, "step": 0.02,
                 "snapshot_every": 0},
    "prism": {"degrees": [2, 2, 2], "fixed": [], "inflate": 0.01},
    "extraction": {"threshold": 0.001},
    "output": {"directory": "out", "histogram_bins": 20, "vis_subdivisions": 2},
}

_MODEL_KEYS = {"preset", "params", "lattice_file", "mesh_file", "shell", "formfind"}
_TOP_KEYS = {"problem", "model", "topopt", "shapeopt", "prism", "extraction", "output"}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    problem: str
    model: dict
    topopt: dict = field(default_factory=dict)
    shapeopt: dict = field(default_factory=dict)
    prism: dict = field(default_factory=dict)
    extraction: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        problem = data.get("problem")
        if problem not in COMMANDS:
            raise ConfigError(f"problem must be one of {COMMANDS}, got {problem!r}")
        model = data.get("model")
        if not isinstance(model, dict):
            raise ConfigError("missing 'model' block")
        blocks = {k: _merge(_DEFAULTS[k], data.get(k) or {}) for k in _DEFAULTS}
        if problem in ("shapeopt", "sequential") and "prism" not in data:
            raise ConfigError(f"'{problem}' needs a 'prism' block")
        cfg = cls(problem, copy.deepcopy(model), base_dir=Path(base_dir), **blocks)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {"problem": self.problem, "model": copy.deepcopy(self.model),
                "topopt": copy.deepcopy(self.topopt), "shapeopt": copy.deepcopy(self.shapeopt),
                "prism": copy.deepcopy(self.prism), "extraction": copy.deepcopy(self.extraction),
                "output": copy.deepcopy(self.output)}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        m = self.model
        unknown = set(m) - _MODEL_KEYS
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        if ("preset" in m) == ("lattice_file" in m):
            raise ConfigError("model needs exactly one of 'preset' or 'lattice_file'")
        if "preset" in m:
            from .presets import BUILDERS
            if m["preset"] not in BUILDERS:
                raise ConfigError(f"unknown preset {m['preset']!r}; known: {sorted(BUILDERS)}")
        for key in ("lattice_file", "mesh_file"):
            if key in m and not self.path(m[key]).is_file():
                raise ConfigError(f"{key} not found: {m[key]}")
        if "mesh_file" in m and "shell" not in m:
            raise ConfigError("a mesh file needs a 'shell' block with material data")
        t = self.topopt
        vf = t.get("volume_fraction")
        if not isinstance(vf, (int, float)) or not 0.0 < vf <= 1.0:
            raise ConfigError(f"topopt.volume_fraction must lie in (0, 1], got {vf!r}")
        if not t.get("radius", 0) > 0:
            raise ConfigError("topopt.radius must be positive")
        if int(t.get("max_iter", 0)) < 0 or int(self.shapeopt.get("max_iter", 0)) < 0:
            raise ConfigError("max_iter must be non-negative")
        try:
            from .topopt import make_penalisation
            make_penalisation(t["penalisation"])
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"topopt.penalisation: {exc}") from exc
        deg = self.prism.get("degrees")
        if not (isinstance(deg, (list, tuple)) and len(deg) == 3 and all(int(d) >= 1 for d in deg)):
            raise ConfigError("prism.degrees must be three integers >= 1")
        if float(self.extraction.get("threshold", 0)) < 0:
            raise ConfigError("extraction.threshold must be non-negative")
        ff = m.get("formfind")
        if ff is not None and not ({"scale"} <= set(ff) or {"target", "s_max"} <= set(ff)):
            raise ConfigError("formfind needs 'scale' or both 'target' and 's_max'")


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return RunConfig.from_dict(data, base_dir=p.parent)


# ---------------------------------------------------------------------------
# lattice and mesh files

LATTICE_HEADER = "# latticeskin lattice 1"
MESH_HEADER = "# latticeskin mesh 1"


def write_lattice(path, lat: LatticeModel) -> None:
    lines = [LATTICE_HEADER, f"dim {lat.dim}", f"E {fmt(lat.E)}", f"joints {lat.n_joints}"]
    for p, a in zip(lat.joints, lat.attached):
        lines.append(" ".join(fmt(x) for x in p) + f" {int(a)}")
    lines.append(f"struts {lat.n_struts}")
    for (a, b), A, Ar in zip(lat.struts, lat.areas, lat.reference_areas):
        lines.append(f"{a} {b} {fmt(A)} {fmt(Ar)}")
    lines.append(f"cells {lat.n_cells}")
    for c in lat.cells:
        lines.append(" ".join([c.cell_type, *(fmt(x) for x in c.size),
                               str(len(c.corner_joints)), *map(str, c.corner_joints),
                               str(len(c.strut_ids)), *map(str, c.strut_ids),
                               str(len(c.diagonal_ids)), *map(str, c.diagonal_ids)]))
    lines.append(f"supports {len(lat.supports)}")
    for j in sorted(lat.supports):
        lines.append(f"{j} " + " ".join(str(int(bool(m))) for m in lat.supports[j]))
    nz = np.flatnonzero(np.any(lat.loads != 0, axis=1))
    lines.append(f"loads {len(nz)}")
    for j in nz:
        lines.append(f"{j} " + " ".join(fmt(x) for x in lat.loads[j]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_lattice(path) -> LatticeModel:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != LATTICE_HEADER:
        raise ConfigError(f"{path}: not a lattice file")
    it = iter(text[1:])

    def section(name):
        key, n = next(it).split()
        if key != name:
            raise ConfigError(f"{path}: expected section {name!r}, found {key!r}")
        return n

    try:
        dim = int(section("dim"))
        E = float(section("E"))
        nj = int(section("joints"))
        J = [next(it).split() for _ in range(nj)]
        joints = np.array([[float(x) for x in r[:3]] for r in J]).reshape(-1, 3)
        attached = np.array([bool(int(r[3])) for r in J], bool)
        ns = int(section("struts"))
        S = [next(it).split() for _ in range(ns)]
        struts = np.array([[int(r[0]), int(r[1])] for r in S], np.int64).reshape(-1, 2)
        areas = np.array([float(r[2]) for r in S])
        ref = np.array([float(r[3]) for r in S])
        nc = int(section("cells"))
        cells = []
        for cid in range(nc):
            r = next(it).split()
            tag, size = r[0], np.array([float(x) for x in r[1:4]])
            k = 4
            n = int(r[k]); corners = tuple(int(x) for x in r[k + 1:k + 1 + n]); k += 1 + n
            n = int(r[k]); sids = tuple(int(x) for x in r[k + 1:k + 1 + n]); k += 1 + n
            n = int(r[k]); dids = tuple(int(x) for x in r[k + 1:k + 1 + n])
            cells.append(UnitCell(cid, sids, dids, corners, joints[list(corners)].mean(axis=0), tag, size))
        nsup = int(section("supports"))
        supports = {}
        for _ in range(nsup):
            r = next(it).split()
            supports[int(r[0])] = tuple(bool(int(x)) for x in r[1:4])
        nl = int(section("loads"))
        loads = np.zeros_like(joints)
        for _ in range(nl):
            r = next(it).split()
            loads[int(r[0])] = [float(x) for x in r[1:4]]
    except (StopIteration, ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed lattice file ({exc})") from exc
    return LatticeModel(joints, struts, areas, ref, cells, E=E, dim=dim, supports=supports,
                        loads=loads, attached=attached)


def write_mesh(path, mesh: ShellMesh) -> None:
    lines = [MESH_HEADER, f"vertices {mesh.n_vertices}"]
    lines += [" ".join(fmt(x) for x in v) for v in mesh.vertices]
    lines.append(f"faces {mesh.n_faces}")
    lines += [" ".join(str(int(i)) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, depth: int = 3) -> ShellMesh:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MESH_HEADER:
        raise ConfigError(f"{path}: not a mesh file")
    try:
        nv = int(text[1].split()[1])
        V = np.array([[float(x) for x in r.split()] for r in text[2:2 + nv]]).reshape(-1, 3)
        nf = int(text[2 + nv].split()[1])
        F = np.array([[int(x) for x in r.split()] for r in text[3 + nv:3 + nv + nf]]).reshape(-1, 4)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed mesh file ({exc})") from exc
    return ShellMesh(V, F, depth=depth)


# ---------------------------------------------------------------------------
# tabular output

def write_csv(path, header, rows) -> None:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(str(x) if isinstance(x, (int, np.integer, str)) else fmt(x) for x in r))
    Path(path).write_text("\n".join(out) + "\n")


def area_histogram(areas, reference_areas, bins=20):
    """Counts of relative areas ``A / Abar`` over ``bins`` (count or explicit edges)."""
    r = np.asarray(areas, float) / np.asarray(reference_areas, float)
    edges = np.linspace(0.0, 1.0, int(bins) + 1) if np.isscalar(bins) else np.asarray(bins, float)
    counts, edges = np.histogram(np.clip(r, edges[0], edges[-1]), bins=edges)
    return counts, edges


def write_histogram(path, areas, reference_areas, bins=20) -> None:
    counts, edges = area_histogram(areas, reference_areas, bins)
    write_csv(path, ["lower", "upper", "count"], [(a, b, int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)])


def write_report(path, items: dict) -> None:
    lines = []
    for k, v in items.items():
        if isinstance(v, (float, np.floating)):
            v = fmt(v)
        lines.append(f"{k}: {v}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# visualisation

def _shell_samples(mesh: ShellMesh, k: int, u_shell=None):
    """Points, quads and displacements of a ``k`` x ``k`` sampling of every face."""
    s = np.linspace(0.0, 1.0, k + 1)
    pts, disp, quads = [], [], []
    for f in range(mesh.n_faces):
        base = len(pts)
        for v in s:
            for u in s:
                vid, N, _, _ = mesh.basis_real(f, u, v)
                pts.append(N @ mesh.vertices[vid])
                disp.append(N @ u_shell[vid] if u_shell is not None else np.zeros(3))
        for j in range(k):
            for i in range(k):
                a = base + j * (k + 1) + i
                quads.append((a, a + 1, a + k + 2, a + k + 1))
    return np.array(pts), np.array(disp), np.array(quads, np.int64)


def export_vtk(path, lattice: LatticeModel | None = None, mesh: ShellMesh | None = None, *,
               u_lattice=None, u_shell=None, kept=None, subdivisions: int = 2, title: str = "latticeskin") -> None:
    """Legacy ASCII unstructured grid: shell quads, then struts as lines.

    Cell data ``area`` holds the strut area (0 on shell cells) and ``kind`` is
    0 for shell, 1 for strut. Point data ``displacement`` is written when a
    solution is given.
    """
    P, U, cells, types, area, kind = [], [], [], [], [], []
    off = 0
    if mesh is not None:
        us = None if u_shell is None else np.asarray(u_shell, float).reshape(-1, 3)
        sp_, sd, sq = _shell_samples(mesh, subdivisions, us)
        P.append(sp_)
        U.append(sd)
        cells += [(4, *q) for q in sq.tolist()]
        types += [9] * len(sq)
        area += [0.0] * len(sq)
        kind += [0] * len(sq)
        off = len(sp_)
    if lattice is not None:
        P.append(lattice.joints)
        ul = np.zeros_like(lattice.joints)
        if u_lattice is not None:
            uu = np.asarray(u_lattice, float).reshape(lattice.n_joints, -1)
            ul[:, :uu.shape[1]] = uu
        U.append(ul)
        ids = np.arange(lattice.n_struts) if kept is None else np.flatnonzero(kept)
        cells += [(2, int(a) + off, int(b) + off) for a, b in lattice.struts[ids]]
        types += [3] * len(ids)
        area += lattice.areas[ids].tolist()
        kind += [1] * len(ids)
    P = np.vstack(P) if P else np.zeros((0, 3))
    U = np.vstack(U) if U else np.zeros((0, 3))
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {len(P)} double"]
    lines += [" ".join(fmt(x) for x in p) for p in P]
    size = sum(len(c) for c in cells)
    lines.append(f"CELLS {len(cells)} {size}")
    lines += [" ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(t) for t in types]
    lines += [f"CELL_DATA {len(cells)}", "SCALARS area double 1", "LOOKUP_TABLE default"]
    lines += [fmt(a) for a in area]
    lines += ["SCALARS kind int 1", "LOOKUP_TABLE default"] + [str(k) for k in kind]
    if u_lattice is not None or u_shell is not None:
        lines += [f"POINT_DATA {len(P)}", "VECTORS displacement double"]
        lines += [" ".join(fmt(x) for x in u) for u in U]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_cell_scalar(path, name: str = "area") -> np.ndarray:
    """Values of a cell scalar from a file written by :func:`export_vtk`."""
    lines = Path(path).read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith(f"SCALARS {name} "))
    n = int(next(l for l in lines if l.startswith("CELL_DATA")).split()[1])
    return np.array([float(x) for x in lines[i + 2:i + 2 + n]])
