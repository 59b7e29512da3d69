"""Builders for the benchmark structures used in tests, demos and presets."""
from __future__ import annotations

import numpy as np

from .geometry import LatticeModel, concatenate_lattices, generate_grid_lattice, lattice_volume


def _fixed(lattice: LatticeModel, ids, mask=(True, True, True)) -> dict:
    return {int(j): tuple(mask) for j in ids}


def _nearest(lattice: LatticeModel, point) -> int:
    return int(np.argmin(np.linalg.norm(lattice.joints - np.asarray(point, float), axis=1)))


def _scale_to_volume(lattice: LatticeModel, volume: float | None) -> LatticeModel:
    if volume is None:
        return lattice
    a = volume / float(lattice.lengths().sum())
    n = lattice.n_struts
    from dataclasses import replace
    return replace(lattice, areas=np.full(n, a), reference_areas=np.full(n, a))


def cantilever_2d(cell: float = 0.5, *, length: float = 20.0, height: float = 10.0, E: float = 7e7,
                  volume: float | None = 10.0, area: float | None = None, load: float = 100.0) -> LatticeModel:
    """Planar cantilever: left end fixed, point load at mid-height of the right end."""
    lat = generate_grid_lattice([0, 0, 0], [length, height, 0], [cell, cell, cell], "square-X2D",
                                area=area or 1.0, E=E)
    lat = _scale_to_volume(lat, None if area else volume)
    tol = 1e-9 * length
    left = np.flatnonzero(lat.joints[:, 0] < tol)
    tip = _nearest(lat, [length, height / 2, 0])
    loads = np.zeros_like(lat.joints)
    loads[tip, 1] = -load
    return lat.with_supports(_fixed(lat, left)).with_loads(loads)


def _mbb_supports(lat: LatticeModel, length: float, variant: str) -> dict:
    if variant == "pin-roller":
        a = _nearest(lat, [0, 0, 0])
        b = _nearest(lat, [length, 0, 0])
        return {a: (True, True, True), b: (False, True, True)}
    if variant == "pin-pin":
        a = _nearest(lat, [0, 0, 0])
        b = _nearest(lat, [length, 0, 0])
        return {a: (True, True, True), b: (True, True, True)}
    raise ValueError(f"unknown support variant {variant!r}")


def mbb(*, cell: float = 1.0, length: float = 60.0, height: float = 10.0, E: float = 7e7,
        area: float = 0.01685, load: float = 100.0, supports: str = "pin-roller") -> LatticeModel:
    """Simply supported beam with a point load at the top midpoint."""
    lat = generate_grid_lattice([0, 0, 0], [length, height, 0], [cell, cell, cell], "square-X2D", area=area, E=E)
    loads = np.zeros_like(lat.joints)
    loads[_nearest(lat, [length / 2, height, 0]), 1] = -load
    return lat.with_supports(_mbb_supports(lat, length, supports)).with_loads(loads)


# column widths of the graded beam, left to right
NONUNIFORM_BLOCKS = ((0.0, 20.0, 2.0), (20.0, 40.0, 1.0), (40.0, 60.0, 2.0))


def mbb_nonuniform(*, height: float = 10.0, E: float = 7e7, volume: float = 50.0, load: float = 100.0,
                   supports: str = "pin-roller", blocks=NONUNIFORM_BLOCKS) -> LatticeModel:
    """Beam with cell widths graded along the span, finer under the load.

    Each block is a uniform grid; blocks are joined by merging shared joints.
    """
    parts = []
    for a, b, w in blocks:
        parts.append(generate_grid_lattice([a, 0, 0], [b, height, 0], [w, 1.0, 1.0], "square-X2D", E=E))
    lat = _scale_to_volume(concatenate_lattices(parts), volume)
    length = blocks[-1][1]
    loads = np.zeros_like(lat.joints)
    loads[_nearest(lat, [length / 2, height, 0]), 1] = -load
    return lat.with_supports(_mbb_supports(lat, length, supports)).with_loads(loads)


def total_volume(lattice: LatticeModel) -> float:
    return lattice_volume(lattice)


def _trapezoid_weights(values, lo: float, hi: float, tol: float) -> np.ndarray:
    """Nodal weights of a uniform grid restricted to ``[lo, hi]`` (half weight at the ends)."""
    w = ((values > lo - tol) & (values < hi + tol)).astype(float)
    w[np.abs(values - lo) < tol] = 0.5
    w[np.abs(values - hi) < tol] = 0.5
    return w


def sandwich_cantilever(t: float, *, cell: float = 0.25, size=(10.0, 5.0, 0.5), E: float = 7e7,
                        nu: float = 0.35, total_volume: float = 40.0, load: float = 200.0,
                        patch: float = 0.5, depth: int = 3):
    """Lattice core between two face sheets, clamped at ``x = 0``.

    The face sheets lie at ``z = 0`` and ``z = size[2]``. A downward (``-y``)
    load is spread over a ``patch`` x full-depth square at the centre of the
    free end. The lattice takes whatever volume the sheets leave of
    ``total_volume``. Returns a :class:`~latticeskin.topopt.Structure`.
    """
    from .coupling import build_coupling
    from .shell import ShellMaterial, assemble_shell, clamped
    from .subdivision import grid_mesh, merge_meshes
    from .topopt import Structure

    L, H, D = size
    nx, ny = int(round(L / cell)), int(round(H / cell))
    lat = generate_grid_lattice([0, 0, 0], [L, H, D], [cell, cell, cell], "BCC3D", E=E)
    v_shell = 2.0 * L * H * t
    v_lat = total_volume - v_shell
    if v_lat <= 0:
        raise ValueError("face sheets use up the whole volume")
    lat = _scale_to_volume(lat, v_lat)
    tol = 1e-9 * L
    z = lat.joints[:, 2]
    attached = (np.abs(z) < tol) | (np.abs(z - D) < tol)
    lat = lat.with_attached(attached)
    left = np.flatnonzero((lat.joints[:, 0] < tol) & ~attached)
    right = np.abs(lat.joints[:, 0] - L) < tol
    wy = _trapezoid_weights(lat.joints[:, 1], 0.5 * (H - patch), 0.5 * (H + patch), tol)
    wz = _trapezoid_weights(z, 0.0, D, tol) if patch >= D else _trapezoid_weights(z, 0.5 * (D - patch), 0.5 * (D + patch), tol)
    w = right * wy * wz
    loads = np.zeros_like(lat.joints)
    loads[:, 1] = -load * w / w.sum()
    lat = lat.with_supports(_fixed(lat, left)).with_loads(loads)

    mesh = merge_meshes([grid_mesh(nx, ny, (L, H), (0, 0, 0), depth=depth),
                         grid_mesh(nx, ny, (L, H), (0, 0, D), depth=depth)])
    edge = np.flatnonzero(mesh.vertices[:, 0] < tol)
    mat = ShellMaterial(E, nu, t)
    shell = assemble_shell(mesh, mat, supports=clamped(mesh, edge))
    return Structure(lat, shell, build_coupling(mesh, lat))


def _extruded_corners(mesh, depth: float, layers: int) -> np.ndarray:
    """Hexahedral cell corners below each shell face, bit-ordered, one cell per face and layer."""
    q = mesh.faces[:, [0, 1, 3, 2]]          # bit order (0,0), (1,0), (0,1), (1,1)
    V = mesh.vertices
    cells = []
    for layer in range(layers):
        lo = V[q] - np.array([0, 0, (layer + 1) * depth])
        hi = V[q] - np.array([0, 0, layer * depth])
        cells.append(np.concatenate([lo, hi], axis=1))
    return np.concatenate(cells)


def pentagon_roof(m: int = 17, *, radius: float = 10.0, cell_depth: float = 0.2, layers: int = 2,
                  t: float = 0.04, diameter: float = 0.01, E: float = 70e6, nu: float = 0.35,
                  pressure: float = 50.0, degrees=(2, 2, 2), depth: int = 3):
    """Flat pentagonal plate on a BCC lattice hanging below it.

    Units are m, kN and kN/m^2 (so ``E = 70e6`` is 70 GPa). Each block of the
    plate mesh is ``m`` x ``m`` faces; every face carries ``layers`` cells.
    The plate is pinned at the five edge midpoints (midpoint vertex plus its
    two boundary neighbours) and loaded by a downward pressure. Returns a
    :class:`~latticeskin.shape.ShapeModel` with a degree-``degrees`` prism.
    """
    from .coupling import build_coupling
    from .ffd import FFDPrism
    from .geometry import build_lattice
    from .shape import ShapeModel
    from .shell import ShellMaterial
    from .subdivision import polygon_mesh

    mesh = polygon_mesh(5, radius, m, depth=depth)
    area = np.pi * diameter ** 2 / 4
    lat = build_lattice(_extruded_corners(mesh, cell_depth, layers), "BCC3D", area=area, E=E)
    tol = 1e-9 * radius
    lat = lat.with_attached(np.abs(lat.joints[:, 2]) < tol)
    coupling = build_coupling(mesh, lat)

    ang = 2 * np.pi * np.arange(5) / 5 + np.pi / 2
    corners = radius * np.stack([np.cos(ang), np.sin(ang), np.zeros(5)], -1)
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    boundary = set(mesh.boundary_vertices.tolist())
    supports = {}
    for p in mids:
        v = int(np.argmin(np.linalg.norm(mesh.vertices - p, axis=1)))
        supports[v] = (True, True, True)
        for w in mesh.ring_neighbours(v):
            if int(w) in boundary:
                supports[int(w)] = (True, True, True)
    prism = FFDPrism.around(np.vstack([mesh.vertices, lat.joints]), degrees)
    return ShapeModel(lat, prism, mesh, ShellMaterial(E, nu, t), coupling, (0.0, 0.0, -pressure),
                      dict(sorted(supports.items())))
