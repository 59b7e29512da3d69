"""Pin-jointed truss elements and assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import DegenerateStrutError, LatticeModel


@dataclass
class TrussSystem:
    """Assembled lattice stiffness over all joint dofs.

    ``K`` is the full (unreduced) stiffness; ``fixed`` flags the dofs removed
    by supports. Dof ``dim * j + c`` is component ``c`` of joint ``j``.
    """
    K: sp.csr_matrix
    f: np.ndarray
    fixed: np.ndarray
    dim: int
    edofs: np.ndarray
    directions: np.ndarray
    lengths: np.ndarray
    stiffness_scale: np.ndarray

    @property
    def ndof(self) -> int:
        return self.K.shape[0]


def strut_stiffness(x0, x1, E: float, A: float, dim: int = 3) -> np.ndarray:
    """Element stiffness ``(E A / l) [[dd, -dd], [-dd, dd]]`` with ``dd = d d^T``."""
    x0 = np.asarray(x0, float)[:dim]
    x1 = np.asarray(x1, float)[:dim]
    d = x1 - x0
    length = np.linalg.norm(d)
    if length <= 0:
        raise DegenerateStrutError("strut has zero length")
    if A <= 0 or E <= 0:
        raise ValueError("E and A must be positive")
    d = d / length
    b = np.concatenate([-d, d])
    return (E * A / length) * np.outer(b, b)


def element_dofs(lattice: LatticeModel, dim: int | None = None) -> np.ndarray:
    dim = lattice.dim if dim is None else dim
    comps = np.arange(dim)
    return np.concatenate([dim * lattice.struts[:, [0]] + comps, dim * lattice.struts[:, [1]] + comps], axis=1)


def strut_directions(lattice: LatticeModel, dim: int | None = None):
    dim = lattice.dim if dim is None else dim
    d = (lattice.joints[lattice.struts[:, 1]] - lattice.joints[lattice.struts[:, 0]])[:, :dim]
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths <= 0):
        raise DegenerateStrutError(f"strut {int(np.argmin(lengths))} has zero length")
    return d / lengths[:, None], lengths


def fixed_dofs(lattice: LatticeModel, dim: int | None = None) -> np.ndarray:
    dim = lattice.dim if dim is None else dim
    fixed = np.zeros(dim * lattice.n_joints, dtype=bool)
    for j, mask in lattice.supports.items():
        for c in range(dim):
            if mask[c]:
                fixed[dim * int(j) + c] = True
    return fixed


def assemble_truss(lattice: LatticeModel, areas=None, *, stiffness_scale=None, dim: int | None = None) -> TrussSystem:
    """Assemble the lattice stiffness.

    Each strut contributes ``stiffness_scale_e * E A_e / l_e * b b^T``. By
    default ``stiffness_scale`` is ``areas / reference_areas`` applied to the
    reference stiffness, i.e. the plain stiffness for the given areas.
    """
    dim = lattice.dim if dim is None else dim
    areas = lattice.areas if areas is None else np.asarray(areas, float)
    if areas.shape != (lattice.n_struts,):
        raise ValueError("one area per strut required")
    if np.any(areas <= 0):
        raise ValueError("areas must be positive")
    if stiffness_scale is None:
        stiffness_scale = areas / lattice.reference_areas
    stiffness_scale = np.asarray(stiffness_scale, float)
    d, lengths = strut_directions(lattice, dim)
    k = stiffness_scale * lattice.E * lattice.reference_areas / lengths
    b = np.concatenate([-d, d], axis=1)
    ke = k[:, None, None] * b[:, :, None] * b[:, None, :]
    edofs = element_dofs(lattice, dim)
    n = dim * lattice.n_joints
    nd = edofs.shape[1]
    rows = np.repeat(edofs, nd, axis=1).ravel()
    cols = np.tile(edofs, (1, nd)).ravel()
    # coo -> csr sums duplicates, independent of element order up to rounding
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    f = lattice.loads[:, :dim].ravel().copy()
    return TrussSystem(K, f, fixed_dofs(lattice, dim), dim, edofs, d, lengths, stiffness_scale)


def axial_strains(lattice: LatticeModel, u, dim: int | None = None) -> np.ndarray:
    """Small-strain axial strain of every strut."""
    dim = lattice.dim if dim is None else dim
    U = np.asarray(u, float).reshape(-1, dim)
    d, lengths = strut_directions(lattice, dim)
    du = U[lattice.struts[:, 1]] - U[lattice.struts[:, 0]]
    return np.einsum("ij,ij->i", d, du) / lengths


def axial_strain(lattice: LatticeModel, u, strut_id: int, dim: int | None = None) -> float:
    dim = lattice.dim if dim is None else dim
    U = np.asarray(u, float).reshape(-1, dim)
    a, b = lattice.struts[strut_id]
    d = (lattice.joints[b] - lattice.joints[a])[:dim]
    length = np.linalg.norm(d)
    return float(np.dot(d / length, U[b] - U[a]) / length)


def strain_energy(lattice: LatticeModel, u, areas=None, dim: int | None = None) -> float:
    """Sum over struts of ``0.5 E eps^2 A l``."""
    areas = lattice.areas if areas is None else np.asarray(areas, float)
    eps = axial_strains(lattice, u, dim)
    return float(0.5 * lattice.E * np.sum(eps ** 2 * areas * lattice.lengths()))


def element_energies(system: TrussSystem, u) -> np.ndarray:
    """``u_e . Kbar_e u_e`` per strut at unit stiffness scale (reference stiffness / E A-bar)."""
    ue = np.asarray(u, float)[system.edofs]
    dim = system.dim
    elong = np.einsum("ij,ij->i", system.directions, ue[:, dim:] - ue[:, :dim])
    return elong ** 2 / system.lengths
