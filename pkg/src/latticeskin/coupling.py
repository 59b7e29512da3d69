"""Lattice-shell coupling and the combined solve.

Attached lattice joints follow the shell mid-surface, ``u^l_j = sum_i N_i(theta_j) u^s_i``.
The constraint is eliminated by master-slave substitution, so the solved
system is symmetric positive definite. Multipliers are recovered afterwards
from the lattice equilibrium at the attached joints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.spatial import cKDTree

from .geometry import LatticeModel
from .shell import ShellSystem
from .subdivision import ShellMesh
from .truss import TrussSystem


class CouplingError(ValueError):
    pass


class MechanismError(RuntimeError):
    """Raised when the reduced stiffness cannot be factorised."""


@dataclass
class Coupling:
    joints: np.ndarray          # attached joint ids
    faces: np.ndarray
    thetas: np.ndarray          # (n_att, 2)
    G: sp.csr_matrix            # (n_att, n_shell_vertices), rows sum to one
    distances: np.ndarray

    @property
    def n_attached(self) -> int:
        return len(self.joints)

    def extraction(self, n_joints: int) -> sp.csr_matrix:
        """Boolean selector picking attached joints out of all lattice joints."""
        n = self.n_attached
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.joints)), shape=(n, n_joints))


# ---------------------------------------------------------------------------
# closest-point projection

def _newton_project(mesh: ShellMesh, face: int, p, theta0, tol: float, maxit: int = 50):
    th = np.array(theta0, float)
    converged = False
    for _ in range(maxit):
        x, dx, ddx = mesh.face_point(face, th[0], th[1])
        r = x - p
        g = dx @ r
        H = dx @ dx.T + np.array([[ddx[0] @ r, ddx[1] @ r], [ddx[1] @ r, ddx[2] @ r]])
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -g / max(np.trace(dx @ dx.T), 1e-300)
        new = np.clip(th + step, 0.0, 1.0)
        moved = np.linalg.norm(dx.T @ (new - th))
        th = new
        if moved < tol:
            converged = True
            break
    x = mesh.face_point(face, th[0], th[1])[0]
    return th, float(np.linalg.norm(x - p)), converged


def project_point(mesh: ShellMesh, p, *, seeds: int = 4, tol: float | None = None, centres=None, tree=None):
    """Closest point on the limit surface: ``(face, theta, distance, converged)``.

    Several faces nearest to ``p`` are tried; ties go to the smaller distance,
    then the lower face id.
    """
    p = np.asarray(p, float)
    diam = mesh.diameter()
    tol = 1e-10 * diam if tol is None else tol
    if tree is None:
        centres = np.array([mesh.face_point(f, 0.5, 0.5)[0] for f in range(mesh.n_faces)])
        tree = cKDTree(centres)
    k = min(seeds, mesh.n_faces)
    _, cand = tree.query(p, k=k)
    best = None
    for f in sorted(np.atleast_1d(cand).tolist()):
        th, d, ok = _newton_project(mesh, f, p, (0.5, 0.5), tol)
        key = (round(d / max(diam, 1e-300), 12), f)
        if best is None or key < best[0]:
            best = (key, f, th, d, ok)
    _, f, th, d, ok = best
    # an extraordinary vertex is hit exactly at the corner of its faces
    if mesh.face_kind[f] != 0 and np.linalg.norm(th) < 1e-9:
        th = np.zeros(2)
    return f, th, d, ok


def build_coupling(mesh: ShellMesh, lattice: LatticeModel, tol: float | None = None, *,
                   joints=None, seeds: int = 4) -> Coupling:
    """Project attached joints onto the shell and build the basis matrix ``G``.

    ``tol`` bounds the admissible joint-to-surface distance (default
    ``1e-6`` times the mesh diameter).
    """
    ids = np.flatnonzero(lattice.attached) if joints is None else np.asarray(joints, dtype=np.int64)
    diam = mesh.diameter()
    tol = 1e-6 * diam if tol is None else tol
    centres = np.array([mesh.face_point(f, 0.5, 0.5)[0] for f in range(mesh.n_faces)])
    tree = cKDTree(centres)
    faces, thetas, dists = [], [], []
    rows, cols, vals = [], [], []
    for r, j in enumerate(ids):
        f, th, d, ok = project_point(mesh, lattice.joints[j], seeds=seeds, tree=tree)
        if not ok and d > tol:
            raise CouplingError(f"projection of joint {j} did not converge (distance {d:.3e})")
        if d > tol:
            raise CouplingError(f"joint {j} is {d:.3e} from the shell surface (tolerance {tol:.3e})")
        vid, N, _, _ = mesh.basis_real(f, th[0], th[1])
        keep = np.abs(N) > 0
        rows.extend([r] * int(keep.sum()))
        cols.extend(vid[keep].tolist())
        vals.extend(N[keep].tolist())
        faces.append(f)
        thetas.append(th)
        dists.append(d)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(len(ids), mesh.n_vertices))
    return Coupling(ids, np.array(faces, dtype=np.int64), np.array(thetas).reshape(-1, 2), G, np.array(dists))


def attached_positions(mesh: ShellMesh, coupling: Coupling, vertices=None) -> np.ndarray:
    """Limit-surface positions of the attached joints."""
    X = mesh.vertices if vertices is None else np.asarray(vertices, float).reshape(-1, 3)
    return coupling.G @ X


# ---------------------------------------------------------------------------
# solve

@dataclass
class CoupledSolution:
    u_shell: np.ndarray | None      # (n_shell_vertices, 3)
    u_lattice: np.ndarray | None    # (n_joints, dim)
    lam: np.ndarray                 # (n_attached, 3)
    J: float
    residual: float
    energy: float

    def shell_dofs(self) -> np.ndarray | None:
        return None if self.u_shell is None else self.u_shell.ravel()

    def lattice_dofs(self) -> np.ndarray | None:
        return None if self.u_lattice is None else self.u_lattice.ravel()


def _transformation(n_s3: int, n_l: int, dim: int, coupling: Coupling | None):
    """``T`` with ``[u^s; u^l] = T [u^s; u^l_free]`` and the free lattice dofs."""
    att = np.zeros(n_l, dtype=bool)
    if coupling is not None and coupling.n_attached:
        att[coupling.joints] = True
    ldofs_free = np.flatnonzero(np.repeat(~att, dim))
    n_lf = len(ldofs_free)
    Tl = sp.csr_matrix((np.ones(n_lf), (ldofs_free, np.arange(n_lf))), shape=(dim * n_l, n_lf))
    if coupling is not None and coupling.n_attached:
        if dim != 3:
            raise CouplingError("shell coupling needs a three-dimensional lattice")
        Sel = coupling.extraction(n_l).T            # joints <- attached rows
        Ts = sp.kron(Sel @ coupling.G, sp.identity(3), format="csr")
    else:
        Ts = sp.csr_matrix((dim * n_l, n_s3))
    T = sp.bmat([[sp.identity(n_s3, format="csr"), sp.csr_matrix((n_s3, n_lf))], [Ts, Tl]], format="csr")
    return T, ldofs_free, att


def dissection_order(K: sp.spmatrix, coords, leaf: int = 48) -> np.ndarray:
    """Fill-reducing permutation by recursive coordinate bisection.

    Each box is split at the median of its longest extent; nodes on the left
    with a neighbour on the right form the separator, which is numbered
    after both halves.
    """
    A = sp.csr_matrix(K, copy=True)
    A.data[:] = 1.0
    X = np.asarray(coords, float)
    out: list[np.ndarray] = []
    stack = [(np.arange(A.shape[0]), False)]
    while stack:
        ids, emit = stack.pop()
        if emit or len(ids) <= leaf:
            out.append(ids)
            continue
        P = X[ids]
        ext = P.max(axis=0) - P.min(axis=0)
        ax = int(np.argmax(ext))
        left = P[:, ax] <= np.median(P[:, ax])
        if left.all():
            left = P[:, ax] < P[:, ax].max()
        if left.all() or not left.any():
            out.append(ids)
            continue
        touch = np.asarray(A[ids[left]][:, ids[~left]].sum(axis=1)).ravel() > 0
        sep = ids[left][touch]
        # popped in reverse: left half, right half, then the separator
        stack.append((sep, True))
        stack.append((ids[~left], False))
        stack.append((ids[left][~touch], False))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


class Factor:
    """Sparse LU of an SPD matrix under an optional symmetric permutation."""

    def __init__(self, K: sp.spmatrix, perm=None):
        K = K.tocsc()
        self.perm = perm
        if perm is not None:
            K = K[perm][:, perm].tocsc()
            self.inv = np.empty_like(perm)
            self.inv[perm] = np.arange(len(perm))
        spec = "NATURAL" if perm is not None else "MMD_AT_PLUS_A"
        try:
            self.lu = sla.splu(K, permc_spec=spec, diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise MechanismError(f"singular stiffness ({exc}); the structure has a mechanism or too few supports") from exc
        self.shape = K.shape

    def solve(self, b):
        if self.perm is None:
            return self.lu.solve(b)
        return self.lu.solve(np.asarray(b)[self.perm])[self.inv]


def factorize(K: sp.spmatrix, coords=None) -> Factor:
    """Factor an SPD matrix; ``coords`` (one point per row) enable a geometric ordering."""
    if coords is not None and K.shape[0] > 2000:
        X = np.asarray(coords, float)
        if np.all(np.ptp(X, axis=0) > 0):   # planar models do better with minimum degree
            return Factor(K, dissection_order(K, X))
    return Factor(K)


@dataclass
class SolverCache:
    """Keeps the last factor and reuses it as a CG preconditioner.

    Useful when successive solves see slowly changing stiffness, as in
    optimisation loops. A fresh factor is computed whenever CG needs more
    than ``max_cg`` iterations.
    """
    max_cg: int = 15
    rtol: float = 1e-12
    factor: Factor | None = None
    key: bytes = b""
    refactors: int = 0
    reuses: int = 0

    def solve(self, K: sp.spmatrix, b, coords=None, key: bytes = b""):
        if self.factor is not None and key == self.key and self.factor.shape == K.shape:
            M = sla.LinearOperator(K.shape, matvec=self.factor.solve, dtype=float)
            x, info = sla.cg(K, b, x0=self.factor.solve(b), rtol=self.rtol, atol=0.0, maxiter=self.max_cg, M=M)
            if info == 0:
                self.reuses += 1
                return x
        self.factor = factorize(K, coords)
        self.key = key
        self.refactors += 1
        return self.factor.solve(b)


def solve_coupled(shell: ShellSystem | None = None, truss: TrussSystem | None = None,
                  coupling: Coupling | None = None, *, check: float = 1e-8, joints=None,
                  cache: SolverCache | None = None) -> CoupledSolution:
    """Solve shell, lattice, or the coupled pair.

    Compliance is the external work ``f . u``, which equals ``u . K u`` at
    equilibrium. Passing lattice ``joints`` positions enables a geometric
    fill-reducing ordering; ``cache`` reuses factors across calls.
    """
    if shell is None and truss is None:
        raise ValueError("nothing to solve")
    n_s3 = 0 if shell is None else shell.ndof
    dim = 3 if truss is None else truss.dim
    n_l = 0 if truss is None else truss.ndof // dim
    if shell is None and coupling is not None and coupling.n_attached:
        raise CouplingError("attached joints need a shell")
    T, ldofs_free, att = _transformation(n_s3, n_l, dim, coupling)
    blocks = []
    if shell is not None:
        blocks.append(shell.K)
    if truss is not None:
        blocks.append(truss.K)
    Kfull = sp.block_diag(blocks, format="csr")
    f_full = np.concatenate(([shell.f] if shell is not None else []) + ([truss.f] if truss is not None else []))
    fixed_full = np.concatenate(([shell.fixed] if shell is not None else []) + ([truss.fixed] if truss is not None else []))
    if truss is not None and np.any(truss.fixed.reshape(-1, dim)[att]):
        # supported attached joints are accepted only when the shell already pins them
        fl = truss.fixed.reshape(-1, dim)
        for r, j in enumerate(coupling.joints):
            for c in np.flatnonzero(fl[j]):
                verts = coupling.G[r].indices
                if shell is None or not np.all(shell.fixed.reshape(-1, 3)[verts, c]):
                    raise CouplingError(f"support on attached joint {j} is not matched by shell supports")
    fixed_r = np.concatenate([fixed_full[:n_s3], fixed_full[n_s3:][ldofs_free]])
    Kr = (T.T @ Kfull @ T).tocsr()
    fr = T.T @ f_full
    free = np.flatnonzero(~fixed_r)
    Kff = Kr[free][:, free]
    coords = None
    if joints is not None or shell is not None:
        parts = []
        if shell is not None:
            parts.append(np.repeat(shell.mesh.vertices, 3, axis=0))
        if truss is not None:
            P = np.zeros((n_l, 3)) if joints is None else np.asarray(joints, float)
            parts.append(np.repeat(P, dim, axis=0)[ldofs_free])
        coords = np.vstack(parts)[free]
    ur = np.zeros(Kr.shape[0])
    if cache is None:
        ur[free] = factorize(Kff, coords).solve(fr[free])
    else:
        ur[free] = cache.solve(Kff, fr[free], coords, key=free.tobytes())
    if not np.all(np.isfinite(ur)):
        raise MechanismError("non-finite displacements; the structure has a mechanism")
    res = np.linalg.norm(Kff @ ur[free] - fr[free])
    scale = max(np.linalg.norm(fr[free]), 1e-300)
    if res > check * scale and np.linalg.norm(fr[free]) > 0:
        raise MechanismError(f"stiffness is numerically singular (relative residual {res / scale:.2e})")
    u = T @ ur
    us = u[:n_s3]
    ul = u[n_s3:]
    lam = np.zeros((0, 3))
    resid = 0.0
    if coupling is not None and coupling.n_attached:
        Ul = ul.reshape(-1, dim)
        Us = us.reshape(-1, 3)
        r = truss.f - truss.K @ ul
        lam = r.reshape(-1, dim)[coupling.joints]
        gap = Ul[coupling.joints] - coupling.G @ Us
        umax = max(np.abs(u).max(), 1e-300)
        resid = float(np.abs(gap).max() / umax)
    J = float(f_full @ u)
    energy = float(u @ (Kfull @ u))
    return CoupledSolution(us.reshape(-1, 3) if shell is not None else None,
                           ul.reshape(-1, dim) if truss is not None else None,
                           lam, J, resid, energy)


def compliance(solution: CoupledSolution) -> float:
    return solution.J
