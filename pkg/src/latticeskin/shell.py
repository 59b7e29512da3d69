"""Linear Kirchhoff-Love thin shell on subdivision surfaces.

Membrane strains are the linearised change of the surface metric and bending
strains the linearised change of the second fundamental form; both are
contracted with the isotropic tensor built from the contravariant metric.
All element quantities are evaluated per quadrature group with stacked
numpy arrays and assembled on the extended (ghost) vertex set, then reduced
to real control vertices with the prolongation ``P``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .subdivision import QuadGroup, ShellMesh


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ShellMaterial:
    E: float
    nu: float
    t: float

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("Poisson's ratio must lie in (-1, 0.5)")
        if not self.t > 0:
            raise ValueError("thickness must be positive")

    @property
    def membrane(self) -> float:
        return self.E * self.t / (1.0 - self.nu ** 2)

    @property
    def bending(self) -> float:
        return self.E * self.t ** 3 / (12.0 * (1.0 - self.nu ** 2))


@dataclass
class ShellSystem:
    mesh: ShellMesh
    material: ShellMaterial
    K: sp.csr_matrix
    f: np.ndarray
    fixed: np.ndarray
    pressure: tuple = (0.0, 0.0, 0.0)
    loaded_faces: np.ndarray | None = None

    @property
    def ndof(self) -> int:
        return self.K.shape[0]


_VOIGT = [0, 2, 1]  # basis stores uu, uv, vv; strains are ordered 11, 22, 12


def _surface(X, g: QuadGroup):
    a = np.einsum("eqks,esd->eqkd", g.dN, X)
    xab = np.einsum("eqks,esd->eqkd", g.ddN[:, :, _VOIGT], X)
    a3 = np.cross(a[:, :, 0], a[:, :, 1])
    j = np.linalg.norm(a3, axis=-1)
    if np.any(j <= 1e-14 * max(1.0, float(np.abs(X).max()) ** 2)):
        raise DegenerateGeometryError("zero-area quadrature point in shell geometry")
    n = a3 / j[..., None]
    return a, xab, n, j


def _voigt_tensor(a, nu):
    """Isotropic constitutive matrix in Voigt form (e11, e22, e12)."""
    g11 = np.einsum("eqd,eqd->eq", a[:, :, 0], a[:, :, 0])
    g22 = np.einsum("eqd,eqd->eq", a[:, :, 1], a[:, :, 1])
    g12 = np.einsum("eqd,eqd->eq", a[:, :, 0], a[:, :, 1])
    det = g11 * g22 - g12 ** 2
    c11, c22, c12 = g22 / det, g11 / det, -g12 / det
    D = np.empty(c11.shape + (3, 3))
    D[..., 0, 0] = c11 ** 2
    D[..., 1, 1] = c22 ** 2
    D[..., 0, 1] = D[..., 1, 0] = nu * c11 * c22 + (1 - nu) * c12 ** 2
    D[..., 0, 2] = D[..., 2, 0] = 2 * c11 * c12
    D[..., 1, 2] = D[..., 2, 1] = 2 * c22 * c12
    D[..., 2, 2] = 4 * (nu * c12 ** 2 + 0.5 * (1 - nu) * (c11 * c22 + c12 ** 2))
    return D


def _strain_operators(X, g: QuadGroup):
    """Membrane and bending strain operators, shape (ne, nq, 3, ns, 3)."""
    a, xab, n, j = _surface(X, g)
    a1, a2 = a[:, :, 0], a[:, :, 1]
    dN1, dN2 = g.dN[:, :, 0], g.dN[:, :, 1]
    ne, nq, ns = g.N.shape
    Bm = np.empty((ne, nq, 3, ns, 3))
    Bm[:, :, 0] = dN1[..., None] * a1[:, :, None, :]
    Bm[:, :, 1] = dN2[..., None] * a2[:, :, None, :]
    Bm[:, :, 2] = 0.5 * (dN1[..., None] * a2[:, :, None, :] + dN2[..., None] * a1[:, :, None, :])
    w = xab - np.einsum("eqkd,eqd->eqk", xab, n)[..., None] * n[:, :, None, :]
    c1 = np.cross(a2[:, :, None, :], w) / j[..., None, None]
    c2 = np.cross(w, a1[:, :, None, :]) / j[..., None, None]
    Bb = (g.ddN[:, :, _VOIGT, :, None] * n[:, :, None, None, :]
          + dN1[:, :, None, :, None] * c1[:, :, :, None, :]
          + dN2[:, :, None, :, None] * c2[:, :, :, None, :])
    return Bm, Bb, a, j


def group_stiffness(X, g: QuadGroup, material: ShellMaterial) -> np.ndarray:
    """Element stiffness matrices of a quadrature group over stencil dofs ``3 s + d``."""
    Bm, Bb, a, j = _strain_operators(X, g)
    D = _voigt_tensor(a, material.nu)
    ne, nq, _, ns, _ = Bm.shape
    Bm = Bm.reshape(ne, nq, 3, 3 * ns)
    Bb = Bb.reshape(ne, nq, 3, 3 * ns)
    wj = g.w * j
    Km = np.einsum("eqiA,eqij,eqjB,eq->eAB", Bm, D, Bm, wj, optimize=True)
    Kb = np.einsum("eqiA,eqij,eqjB,eq->eAB", Bb, D, Bb, wj, optimize=True)
    return material.membrane * Km + material.bending * Kb


def group_energy(X, U, g: QuadGroup, material: ShellMaterial) -> np.ndarray:
    """``u_e . K_e(X) u_e`` for every element of a group (no factor one half)."""
    a, xab, n, j = _surface(X, g)
    a1, a2 = a[:, :, 0], a[:, :, 1]
    du = np.einsum("eqks,esd->eqkd", g.dN, U)
    ddu = np.einsum("eqks,esd->eqkd", g.ddN[:, :, _VOIGT], U)
    u1, u2 = du[:, :, 0], du[:, :, 1]
    em = np.stack([np.einsum("eqd,eqd->eq", a1, u1), np.einsum("eqd,eqd->eq", a2, u2),
                   0.5 * (np.einsum("eqd,eqd->eq", a1, u2) + np.einsum("eqd,eqd->eq", a2, u1))], -1)
    w = xab - np.einsum("eqkd,eqd->eqk", xab, n)[..., None] * n[:, :, None, :]
    c1 = np.cross(a2[:, :, None, :], w)
    c2 = np.cross(w, a1[:, :, None, :])
    eb = (np.einsum("eqkd,eqd->eqk", ddu, n)
          + (np.einsum("eqd,eqkd->eqk", u1, c1) + np.einsum("eqd,eqkd->eqk", u2, c2)) / j[..., None])
    D = _voigt_tensor(a, material.nu)
    dens = (material.membrane * np.einsum("eqi,eqij,eqj->eq", em, D, em)
            + material.bending * np.einsum("eqi,eqij,eqj->eq", eb, D, eb))
    return np.sum(dens * g.w * j, axis=1)


def _dof_ids(stencils):
    return (3 * stencils[..., None] + np.arange(3)).reshape(stencils.shape[0], -1)


def _prolongation3(mesh: ShellMesh) -> sp.csr_matrix:
    return sp.kron(mesh.P, sp.identity(3), format="csr")


def shell_element_stiffness(mesh: ShellMesh, face: int, material: ShellMaterial):
    """Stiffness of one face on real vertex dofs; returns ``(vertex_ids, K_e)``."""
    for g in mesh.quadrature.groups:
        hit = np.flatnonzero(g.faces == face)
        if len(hit):
            break
    else:
        raise IndexError(f"face {face} not in mesh")
    k = hit[0]
    sub = QuadGroup(g.faces[[k]], g.stencils[[k]], g.N[[k]], g.dN[[k]], g.ddN[[k]], g.w[[k]], g.points[[k]])
    X = mesh.ext_positions()[sub.stencils]
    Ke = group_stiffness(X, sub, material)[0]
    P3 = _prolongation3(mesh)[_dof_ids(sub.stencils)[0]]
    verts = np.unique(P3.indices // 3)
    cols = (3 * verts[:, None] + np.arange(3)).ravel()
    T = P3[:, cols].toarray()
    return verts, T.T @ Ke @ T


def assemble_shell(mesh: ShellMesh, material: ShellMaterial, pressure=(0.0, 0.0, 0.0), *,
                   supports: dict | None = None, loaded_faces=None) -> ShellSystem:
    """Assemble stiffness and surface-load vector.

    ``pressure`` is a force per unit mid-surface area with a fixed direction;
    ``loaded_faces`` restricts it to a subset of faces.
    """
    Xext = mesh.ext_positions()
    n_ext = mesh.P.shape[0]
    p = np.asarray(pressure, float)
    rows, cols, vals = [], [], []
    fext = np.zeros(3 * n_ext)
    load_mask = None
    if loaded_faces is not None:
        load_mask = np.zeros(mesh.n_faces, dtype=bool)
        load_mask[np.asarray(loaded_faces, dtype=np.int64)] = True
    for g in mesh.quadrature.groups:
        X = Xext[g.stencils]
        Ke = group_stiffness(X, g, material)
        dofs = _dof_ids(g.stencils)
        nd = dofs.shape[1]
        rows.append(np.repeat(dofs, nd, axis=1).ravel())
        cols.append(np.tile(dofs, (1, nd)).ravel())
        vals.append(Ke.ravel())
        if np.any(p != 0):
            _, _, _, j = _surface(X, g)
            wN = np.einsum("eq,eqs->es", g.w * j, g.N)
            if load_mask is not None:
                wN = wN * load_mask[g.faces][:, None]
            np.add.at(fext, dofs, (wN[:, :, None] * p).reshape(len(dofs), -1))
    Kext = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(3 * n_ext, 3 * n_ext)).tocsr()
    P3 = _prolongation3(mesh)
    K = (P3.T @ Kext @ P3).tocsr()
    K = 0.5 * (K + K.T)
    f = P3.T @ fext
    fixed = np.zeros(3 * mesh.n_vertices, dtype=bool)
    for v, mask in (supports or {}).items():
        for d in range(3):
            if mask[d]:
                fixed[3 * int(v) + d] = True
    return ShellSystem(mesh, material, K.tocsr(), f, fixed, tuple(float(x) for x in p),
                       None if loaded_faces is None else np.asarray(loaded_faces, dtype=np.int64))


def element_energies(mesh: ShellMesh, material: ShellMaterial, u) -> np.ndarray:
    """``u_e . K_e u_e`` per face."""
    Xext = mesh.ext_positions()
    Uext = mesh.P @ np.asarray(u, float).reshape(-1, 3)
    out = np.zeros(mesh.n_faces)
    for g in mesh.quadrature.groups:
        out[g.faces] = group_energy(Xext[g.stencils], Uext[g.stencils], g, material)
    return out


def energy_shape_gradient(mesh: ShellMesh, material: ShellMaterial, u, rel_step: float = 1e-6) -> np.ndarray:
    """Derivative of ``sum_e u_e . K_e u_e`` w.r.t. real control-vertex positions.

    Central differences of each element energy with respect to each of its
    stencil coordinates, step ``rel_step`` times the element diameter.
    """
    Xext = mesh.ext_positions()
    Uext = mesh.P @ np.asarray(u, float).reshape(-1, 3)
    gext = np.zeros_like(Xext)
    for g in mesh.quadrature.groups:
        X = Xext[g.stencils]
        U = Uext[g.stencils]
        diam = np.linalg.norm(np.ptp(X, axis=1), axis=1)
        h = rel_step * diam
        ns = X.shape[1]
        grad = np.zeros_like(X)
        for s in range(ns):
            for d in range(3):
                Xp = X.copy()
                Xp[:, s, d] += h
                Xm = X.copy()
                Xm[:, s, d] -= h
                grad[:, s, d] = (group_energy(Xp, U, g, material) - group_energy(Xm, U, g, material)) / (2 * h)
        np.add.at(gext, g.stencils, grad)
    return mesh.P.T @ gext


def _area_terms(X, g: QuadGroup):
    """Jacobian ``j`` and its derivative weights per stencil point."""
    a, _, n, j = _surface(X, g)
    t1 = np.cross(a[:, :, 1], n)
    t2 = np.cross(n, a[:, :, 0])
    dj = g.dN[:, :, 0, :, None] * t1[:, :, None, :] + g.dN[:, :, 1, :, None] * t2[:, :, None, :]
    return j, dj


def shell_area_and_derivative(mesh: ShellMesh, vertices=None):
    """Mid-surface area and its gradient w.r.t. real control vertices."""
    Xext = mesh.ext_positions(vertices)
    area = 0.0
    gext = np.zeros_like(Xext)
    for g in mesh.quadrature.groups:
        j, dj = _area_terms(Xext[g.stencils], g)
        area += float(np.sum(g.w * j))
        np.add.at(gext, g.stencils, np.einsum("eq,eqsd->esd", g.w, dj))
    return area, mesh.P.T @ gext


def load_shape_gradient(mesh: ShellMesh, pressure, u, loaded_faces=None) -> np.ndarray:
    """Derivative of ``u . f`` (``u`` held fixed) w.r.t. real control vertices."""
    p = np.asarray(pressure, float)
    Xext = mesh.ext_positions()
    Uext = mesh.P @ np.asarray(u, float).reshape(-1, 3)
    gext = np.zeros_like(Xext)
    mask = None
    if loaded_faces is not None:
        mask = np.zeros(mesh.n_faces, dtype=bool)
        mask[np.asarray(loaded_faces, dtype=np.int64)] = True
    for g in mesh.quadrature.groups:
        _, dj = _area_terms(Xext[g.stencils], g)
        up = np.einsum("eqs,es->eq", g.N, Uext[g.stencils] @ p)
        contrib = np.einsum("eq,eqsd->esd", g.w * up, dj)
        if mask is not None:
            contrib = contrib * mask[g.faces][:, None, None]
        np.add.at(gext, g.stencils, contrib)
    return mesh.P.T @ gext


def simply_supported(vertices, components=(True, True, True)) -> dict:
    return {int(v): tuple(components) for v in vertices}


def clamped(mesh: ShellMesh, edge_vertices, components=(True, True, True)) -> dict:
    """Fix an edge row and the adjacent interior row, which removes the cross-edge rotation."""
    edge = set(int(v) for v in edge_vertices)
    boundary = set(mesh.boundary_vertices.tolist())
    rows = set(edge)
    for v in edge:
        for w in mesh.ring_neighbours(v):
            if int(w) not in boundary:
                rows.add(int(w))
    return {v: tuple(components) for v in sorted(rows)}
