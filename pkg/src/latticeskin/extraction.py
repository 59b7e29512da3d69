"""Turning optimised strut areas into a clean, rigid lattice.

The pipeline is threshold -> cell recovery -> void filling, followed by a
mechanism count of the resulting pin-jointed assembly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import LatticeModel


def extract(lattice: LatticeModel, areas, tau: float) -> np.ndarray:
    """Boolean mask of struts with area strictly above ``tau``."""
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    areas = np.asarray(areas, float)
    if areas.shape != (lattice.n_struts,):
        raise ValueError("one area per strut required")
    return areas > tau


def recover_cells(lattice: LatticeModel, kept) -> np.ndarray:
    """Reinstate every strut of a cell that still has a kept diagonal."""
    out = np.array(kept, dtype=bool, copy=True)
    for c in lattice.cells:
        if c.diagonal_ids and out[list(c.diagonal_ids)].any():
            out[list(c.strut_ids)] = True
    return out


def _cell_is_kept(lattice: LatticeModel, kept) -> np.ndarray:
    return np.array([bool(c.diagonal_ids) and bool(kept[list(c.diagonal_ids)].all()) for c in lattice.cells])


def _face_size(lattice: LatticeModel) -> int:
    return 2 if lattice.dim == 2 else 4


def fill_concave_voids(lattice: LatticeModel, kept, *, max_rounds: int = 10000) -> np.ndarray:
    """Fill void cells that sit at a hinge between kept cells.

    At every joint, the kept cells touching it are grouped by face
    adjacency. Two or more groups mean the cells meet only at that joint (or
    along an edge in 3D), which leaves a rotational hinge. The void cell
    around the joint with the most kept neighbours (lowest id on ties) is
    filled completely. The process repeats until nothing changes.
    """
    out = recover_cells(lattice, kept)
    corner_sets = [frozenset(c.corner_joints) for c in lattice.cells]
    joint_cells: dict[int, list[int]] = {}
    for c in lattice.cells:
        for j in c.corner_joints:
            joint_cells.setdefault(int(j), []).append(c.id)
    fs = _face_size(lattice)
    neighbours = {}
    for cells in joint_cells.values():
        for a in cells:
            for b in cells:
                if a < b and len(corner_sets[a] & corner_sets[b]) >= fs:
                    neighbours.setdefault(a, set()).add(b)
                    neighbours.setdefault(b, set()).add(a)

    for _ in range(max_rounds):
        live = _cell_is_kept(lattice, out)
        changed = False
        for j in sorted(joint_cells):
            around = joint_cells[j]
            on = [c for c in around if live[c]]
            if len(on) < 2:
                continue
            # components of kept cells around j under face adjacency restricted to cells around j
            comp = {}
            for c in on:
                if c in comp:
                    continue
                stack = [c]
                comp[c] = c
                while stack:
                    a = stack.pop()
                    for b in neighbours.get(a, ()):
                        if b not in comp and live[b] and j in corner_sets[b]:
                            comp[b] = c
                            stack.append(b)
            if len(set(comp.values())) < 2:
                continue
            voids = [c for c in around if not live[c]]
            if not voids:
                continue
            score = [(-sum(1 for b in neighbours.get(c, ()) if live[b]), c) for c in voids]
            pick = min(score)[1]
            out[list(lattice.cells[pick].strut_ids)] = True
            live[pick] = True
            changed = True
        if not changed:
            break
    return out


# ---------------------------------------------------------------------------
# mechanisms

def equilibrium_matrix(lattice: LatticeModel, kept, fixed_joints=None, supports=None):
    """Equilibrium matrix over free dofs of joints touched by kept struts.

    Returns ``(B, n_free)`` with ``B`` of shape ``(n_free, n_kept)``.
    """
    kept = np.asarray(kept, dtype=bool)
    dim = lattice.dim
    struts = lattice.struts[kept]
    supports = lattice.supports if supports is None else supports
    used = np.unique(struts.ravel()) if len(struts) else np.zeros(0, dtype=np.int64)
    fixed = np.zeros((lattice.n_joints, dim), dtype=bool)
    for j, mask in supports.items():
        fixed[int(j)] = np.asarray(mask[:dim], dtype=bool)
    if fixed_joints is not None:
        fixed[np.asarray(fixed_joints, dtype=np.int64)] = True
    dof_id = -np.ones((lattice.n_joints, dim), dtype=np.int64)
    free = np.zeros((lattice.n_joints, dim), dtype=bool)
    free[used] = ~fixed[used]
    n_free = int(free.sum())
    dof_id[free] = np.arange(n_free)
    d = lattice.joints[struts[:, 1], :dim] - lattice.joints[struts[:, 0], :dim]
    d /= np.linalg.norm(d, axis=1)[:, None]
    rows, cols, vals = [], [], []
    for end, sign in ((0, -1.0), (1, 1.0)):
        ids = dof_id[struts[:, end]]
        for c in range(dim):
            ok = ids[:, c] >= 0
            rows.append(ids[ok, c])
            cols.append(np.flatnonzero(ok))
            vals.append(sign * d[ok, c])
    B = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_free, len(struts)))
    return B, n_free


def mechanism_count(lattice: LatticeModel, kept, supports=None, *, fixed_joints=None,
                    dense_limit: int = 30_000_000) -> int:
    """Number of independent zero-energy modes, ``free dofs - rank(B)``.

    Small systems use column-pivoted QR with tolerance ``1e-10 ||B||``. Large
    ones count eigenvalues of ``B B^T`` below a matching threshold from the
    inertia of a shifted symmetric factorisation.
    """
    B, n_free = equilibrium_matrix(lattice, kept, fixed_joints, supports)
    if n_free == 0:
        return 0
    if B.shape[1] == 0:
        return n_free
    if B.shape[0] * B.shape[1] <= dense_limit:
        Bd = B.toarray()
        R = sla.qr(Bd, mode="r", pivoting=True)[0]
        diag = np.abs(np.diag(R))
        norm = np.linalg.norm(Bd, 2) if min(Bd.shape) < 2000 else diag[0]
        rank = int(np.sum(diag > 1e-10 * norm))
        return n_free - rank
    K = (B @ B.T).tocsc()
    kmax = float(np.abs(K).max())
    shift = 1e-10 * kmax
    A = (K - shift * sp.identity(K.shape[0], format="csc")).tocsc()
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    return int(np.sum(lu.U.diagonal() < 0))


@dataclass
class ExtractionReport:
    kept: np.ndarray
    n_kept: int
    n_removed: int
    mechanisms: int

    def lines(self) -> list[str]:
        return [f"kept struts: {self.n_kept}", f"removed struts: {self.n_removed}", f"mechanisms: {self.mechanisms}"]


def extraction_pipeline(lattice: LatticeModel, areas, tau: float, *, fixed_joints=None) -> ExtractionReport:
    kept = fill_concave_voids(lattice, recover_cells(lattice, extract(lattice, areas, tau)))
    m = mechanism_count(lattice, kept, fixed_joints=fixed_joints)
    return ExtractionReport(kept, int(kept.sum()), int((~kept).sum()), m)
