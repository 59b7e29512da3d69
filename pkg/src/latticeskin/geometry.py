"""Lattice models built from unit-cell templates.

A lattice is stored as flat numpy arrays (joint coordinates, strut
connectivity, areas) plus a list of :class:`UnitCell` records that keep the
cell membership needed by the sensitivity filter and the extraction step.
Coordinates are always three-dimensional; planar lattices carry ``dim == 2``
and live in the plane ``z = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree


class LatticeError(ValueError):
    pass


class DegenerateStrutError(LatticeError):
    pass


class OutOfPrismError(ValueError):
    pass


@dataclass(frozen=True)
class UnitCell:
    id: int
    strut_ids: tuple[int, ...]
    diagonal_ids: tuple[int, ...]
    corner_joints: tuple[int, ...]
    centroid: np.ndarray
    cell_type: str
    size: np.ndarray


@dataclass(frozen=True)
class CellTemplate:
    """Strut layout of a unit cell in terms of its corner joints.

    Corners are indexed by bit pattern ``i + 2 j (+ 4 k)``; index ``ncorner``
    is the centre joint.
    """
    name: str
    dim: int
    edges: tuple[tuple[int, int], ...]
    diagonals: tuple[tuple[int, int], ...]

    @property
    def ncorner(self) -> int:
        return 2 ** self.dim


def _bit_edges(dim):
    n = 2 ** dim
    return tuple((a, a | (1 << b)) for a in range(n) for b in range(dim) if not a & (1 << b))


TEMPLATES: dict[str, CellTemplate] = {}


def register_template(template: CellTemplate) -> None:
    TEMPLATES[template.name] = template


register_template(CellTemplate("square-X2D", 2, _bit_edges(2), tuple((c, 4) for c in range(4))))
register_template(CellTemplate("BCC3D", 3, _bit_edges(3), tuple((c, 8) for c in range(8))))


@dataclass(frozen=True)
class LatticeModel:
    """Pin-jointed lattice.

    Attributes
    ----------
    joints : (n, 3) array
        Joint coordinates.
    struts : (m, 2) int array
        Joint index pairs.
    areas, reference_areas : (m,) arrays
        Current and original cross-sectional areas.
    cells : list of UnitCell
    E : float
        Young's modulus.
    dim : int
        2 for planar lattices, 3 otherwise.
    supports : dict
        ``joint -> tuple of bools`` (one flag per displacement component, True = fixed).
    loads : (n, 3) array
        Nodal forces.
    attached : (n,) bool array
        Joints tied to a shell mid-surface.
    """
    joints: np.ndarray
    struts: np.ndarray
    areas: np.ndarray
    reference_areas: np.ndarray
    cells: list = field(default_factory=list)
    E: float = 1.0
    dim: int = 3
    supports: dict = field(default_factory=dict)
    loads: np.ndarray | None = None
    attached: np.ndarray | None = None

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=float).reshape(-1, 3)
        struts = np.asarray(self.struts, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "struts", struts)
        object.__setattr__(self, "areas", np.asarray(self.areas, dtype=float).reshape(-1))
        object.__setattr__(self, "reference_areas", np.asarray(self.reference_areas, dtype=float).reshape(-1))
        if self.loads is None:
            object.__setattr__(self, "loads", np.zeros_like(joints))
        if self.attached is None:
            object.__setattr__(self, "attached", np.zeros(len(joints), dtype=bool))
        if not np.all(np.isfinite(joints)):
            raise LatticeError("joint positions must be finite")
        if len(struts):
            if struts.min() < 0 or struts.max() >= len(joints):
                raise LatticeError("strut references an unknown joint")
            if np.any(struts[:, 0] == struts[:, 1]):
                raise LatticeError("strut joints must be distinct")
        if self.areas.shape != (len(struts),) or self.reference_areas.shape != (len(struts),):
            raise LatticeError("one area and one reference area per strut required")
        if np.any(self.areas <= 0) or np.any(self.reference_areas <= 0):
            raise LatticeError("strut areas must be positive")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_struts(self) -> int:
        return len(self.struts)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def lengths(self) -> np.ndarray:
        d = self.joints[self.struts[:, 1]] - self.joints[self.struts[:, 0]]
        return np.linalg.norm(d, axis=1)

    def strut_centroids(self) -> np.ndarray:
        return 0.5 * (self.joints[self.struts[:, 0]] + self.joints[self.struts[:, 1]])

    def cell_centroids(self) -> np.ndarray:
        return np.array([c.centroid for c in self.cells]).reshape(-1, 3)

    def with_areas(self, areas) -> "LatticeModel":
        areas = np.broadcast_to(np.asarray(areas, dtype=float), (self.n_struts,)).copy()
        return replace(self, areas=areas)

    def with_joints(self, joints) -> "LatticeModel":
        joints = np.asarray(joints, dtype=float)
        cells = [replace(c, centroid=joints[list(c.corner_joints)].mean(axis=0)) for c in self.cells]
        return replace(self, joints=joints, cells=cells)

    def scaled_areas(self, factor: float) -> "LatticeModel":
        return self.with_areas(self.areas * factor)

    def with_supports(self, supports: dict) -> "LatticeModel":
        return replace(self, supports=dict(supports))

    def with_loads(self, loads) -> "LatticeModel":
        return replace(self, loads=np.asarray(loads, dtype=float).reshape(-1, 3))

    def with_attached(self, attached) -> "LatticeModel":
        return replace(self, attached=np.asarray(attached, dtype=bool))

    def strut_cells(self) -> list[list[int]]:
        """Owning cells of each strut."""
        owners: list[list[int]] = [[] for _ in range(self.n_struts)]
        for c in self.cells:
            for s in c.strut_ids:
                owners[s].append(c.id)
        return owners

    def diagonal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_struts, dtype=bool)
        for c in self.cells:
            mask[list(c.diagonal_ids)] = True
        return mask


def merge_tolerance(points: np.ndarray) -> float:
    ext = np.ptp(points, axis=0).max() if len(points) else 1.0
    return 1e-8 * max(ext, 1e-300)


def _dedup_points(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge points closer than ``tol``; returns (unique points, inverse map).

    Unique points are numbered in order of first appearance.
    """
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))
    if len(pairs):
        # union by smallest index; pairs are few so a plain loop is fine
        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        parent = np.array([find(i) for i in range(len(points))])
    roots, inverse = np.unique(parent, return_inverse=True)
    return points[roots], inverse


def build_lattice(cell_corners: np.ndarray, template: str, *, area: float = 1.0, E: float = 1.0,
                  tol: float | None = None) -> LatticeModel:
    """Tile unit cells given their corner coordinates.

    Parameters
    ----------
    cell_corners : (ncell, 2**dim, 3) array
        Corner coordinates of every cell, bit-ordered (see :class:`CellTemplate`).
    template : str
        Registered template name.
    """
    tpl = TEMPLATES.get(template)
    if tpl is None:
        raise LatticeError(f"unknown cell template {template!r}; known: {sorted(TEMPLATES)}")
    cell_corners = np.asarray(cell_corners, dtype=float)
    ncell = len(cell_corners)
    nc = tpl.ncorner
    if cell_corners.shape[1:] != (nc, 3):
        raise LatticeError(f"{template} cells need {nc} corners, got shape {cell_corners.shape}")
    centres = cell_corners.mean(axis=1)
    raw = np.concatenate([cell_corners.reshape(-1, 3), centres])
    tol = merge_tolerance(raw) if tol is None else tol
    joints, inverse = _dedup_points(raw, tol)
    corner_ids = inverse[: ncell * nc].reshape(ncell, nc)
    centre_ids = inverse[ncell * nc:]
    local = np.concatenate([corner_ids, centre_ids[:, None]], axis=1)

    strut_index: dict[tuple[int, int], int] = {}
    struts: list[tuple[int, int]] = []
    cells: list[UnitCell] = []
    for c in range(ncell):
        ids, diag = [], []
        for group, is_diag in ((tpl.edges, False), (tpl.diagonals, True)):
            for a, b in group:
                ja, jb = int(local[c, a]), int(local[c, b])
                key = (ja, jb) if ja < jb else (jb, ja)
                s = strut_index.get(key)
                if s is None:
                    s = strut_index[key] = len(struts)
                    struts.append(key)
                ids.append(s)
                if is_diag:
                    diag.append(s)
        size = np.ptp(cell_corners[c], axis=0)
        cells.append(UnitCell(c, tuple(ids), tuple(diag), tuple(int(j) for j in corner_ids[c]),
                              joints[corner_ids[c]].mean(axis=0), template, size))
    struts_arr = np.array(struts, dtype=np.int64)
    model = LatticeModel(joints, struts_arr, np.full(len(struts), area), np.full(len(struts), area),
                         cells, E=E, dim=tpl.dim)
    lengths = model.lengths()
    if np.any(lengths <= tol):
        raise DegenerateStrutError("cell template produced a zero-length strut")
    return model


def grid_cell_corners(box_min: Sequence[float], box_max: Sequence[float], cell_size: Sequence[float],
                      dim: int) -> np.ndarray:
    """Corner coordinates of an axis-aligned grid of cells, bit-ordered per cell."""
    lo = np.zeros(3)
    hi = np.zeros(3)
    h = np.ones(3)
    lo[:dim] = np.asarray(box_min, dtype=float)[:dim]
    hi[:dim] = np.asarray(box_max, dtype=float)[:dim]
    h[:dim] = np.asarray(cell_size, dtype=float)[:dim]
    counts = []
    for k in range(dim):
        ext = hi[k] - lo[k]
        if ext <= 0 or h[k] <= 0:
            raise LatticeError("box extents and cell size must be positive")
        n = int(round(ext / h[k]))
        residual = ext - n * h[k]
        if n < 1 or abs(residual) > 1e-9 * ext:
            raise LatticeError(f"extent {ext} along axis {k} is not an integer multiple of cell size "
                               f"{h[k]} (residual {residual:.3e})")
        counts.append(n)
    axes = [lo[k] + h[k] * np.arange(counts[k] + 1) for k in range(dim)]
    cells = []
    # x varies fastest so cell ids run along the length first
    for idx in product(*[range(n) for n in reversed(counts)]):
        idx = idx[::-1]
        corners = []
        for bits in range(2 ** dim):
            p = np.zeros(3)
            for k in range(dim):
                p[k] = axes[k][idx[k] + ((bits >> k) & 1)]
            corners.append(p)
        cells.append(corners)
    return np.array(cells)


def generate_grid_lattice(box_min, box_max, cell_size, template: str = "square-X2D", *,
                          area: float = 1.0, E: float = 1.0) -> LatticeModel:
    """Uniform grid lattice filling an axis-aligned box."""
    tpl = TEMPLATES.get(template)
    if tpl is None:
        raise LatticeError(f"unknown cell template {template!r}")
    corners = grid_cell_corners(box_min, box_max, cell_size, tpl.dim)
    return build_lattice(corners, template, area=area, E=E)


def concatenate_lattices(parts: Sequence[LatticeModel]) -> LatticeModel:
    """Join lattice blocks, merging coincident joints and struts."""
    if not parts:
        raise LatticeError("nothing to concatenate")
    template = parts[0].cells[0].cell_type
    corners = np.concatenate([p.joints[[list(c.corner_joints) for c in p.cells]] for p in parts])
    return build_lattice(corners, template, area=float(parts[0].areas[0]), E=parts[0].E)


def tensor_grid_lattice(xs: Sequence[float], ys: Sequence[float], zs: Sequence[float] | None = None,
                        template: str = "square-X2D", *, area: float = 1.0, E: float = 1.0) -> LatticeModel:
    """Grid lattice with arbitrary (monotone) grid lines per axis."""
    axes = [np.asarray(xs, float), np.asarray(ys, float)]
    if zs is not None:
        axes.append(np.asarray(zs, float))
    dim = len(axes)
    counts = [len(a) - 1 for a in axes]
    cells = []
    for idx in product(*[range(n) for n in reversed(counts)]):
        idx = idx[::-1]
        corners = []
        for bits in range(2 ** dim):
            p = np.zeros(3)
            for k in range(dim):
                p[k] = axes[k][idx[k] + ((bits >> k) & 1)]
            corners.append(p)
        cells.append(corners)
    return build_lattice(np.array(cells), template, area=area, E=E)


def lattice_volume(lattice: LatticeModel) -> float:
    """Total strut material volume, sum of area times length."""
    return float(np.dot(lattice.areas, lattice.lengths()))


def strut_geometry(lattice: LatticeModel, strut_id: int):
    """Length, centroid and unit direction of one strut."""
    a, b = lattice.struts[strut_id]
    x0, x1 = lattice.joints[a], lattice.joints[b]
    d = x1 - x0
    length = float(np.linalg.norm(d))
    if length <= merge_tolerance(lattice.joints):
        raise DegenerateStrutError(f"strut {strut_id} has coincident endpoints")
    return length, 0.5 * (x0 + x1), d / length


def joints_where(lattice: LatticeModel, predicate: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Indices of joints whose coordinates satisfy a vectorised predicate."""
    return np.flatnonzero(predicate(lattice.joints))


def immerse(points, prism) -> np.ndarray:
    """Parametric coordinates of points inside an axis-aligned prism.

    ``prism`` needs ``box_min`` and ``box_max`` attributes.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(prism.box_min, float)
    hi = np.asarray(prism.box_max, float)
    span = hi - lo
    eta = (pts - lo) / span
    slack = 1e-12
    bad = np.any((eta < -slack) | (eta > 1 + slack), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise OutOfPrismError(f"point {i} at {pts[i].tolist()} lies outside the prism [{lo.tolist()}, {hi.tolist()}]")
    return np.clip(eta, 0.0, 1.0)
