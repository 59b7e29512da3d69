"""Shape optimisation of lattice-skin structures through an FFD prism.

Shell control vertices and free lattice joints move with the prism through
their fixed parametric coordinates. Attached joints instead follow the
deformed shell limit surface at their fixed ``(face, theta)``, which keeps
lattice and skin conformal.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .coupling import Coupling, CoupledSolution, SolverCache, _newton_project, solve_coupled
from .ffd import FFDPrism
from .geometry import LatticeModel
from .optimizer import NlpProblem, OptimizeOptions, minimize
from .shell import (ShellMaterial, assemble_shell, energy_shape_gradient, load_shape_gradient,
                    shell_area_and_derivative)
from .subdivision import ShellMesh
from .topopt import Structure, TopOptConfig, run_topopt
from .truss import assemble_truss


@dataclass
class ShapeModel:
    """Reference geometry plus everything needed to re-analyse a moved shape."""
    lattice: LatticeModel
    prism: FFDPrism
    mesh: ShellMesh | None = None
    material: ShellMaterial | None = None
    coupling: Coupling | None = None
    pressure: tuple = (0.0, 0.0, 0.0)
    shell_supports: dict = field(default_factory=dict)
    loaded_faces: np.ndarray | None = None
    cache: SolverCache | None = field(default=None, repr=False)

    def __post_init__(self):
        lat = self.lattice
        att = np.zeros(lat.n_joints, bool)
        if self.coupling is not None:
            att[self.coupling.joints] = True
        self.free_joints = np.flatnonzero(~att)
        self.Bl = self.prism.basis(self.prism.immerse(lat.joints[self.free_joints]))
        self.Bs = None
        if self.mesh is not None:
            self.Bs = self.prism.basis(self.prism.immerse(self.mesh.vertices))
        if self.cache is None:
            self.cache = SolverCache()

    # geometry -------------------------------------------------------------
    def positions(self, D=None):
        """``(shell vertices | None, lattice joints)`` for control displacements ``D``."""
        D = np.zeros((self.prism.n_points, 3)) if D is None else np.asarray(D, float).reshape(-1, 3)
        D = np.where(self.prism.fixed[:, None], 0.0, D)
        Xs = None
        Xl = self.lattice.joints.copy()
        Xl[self.free_joints] += self.Bl @ D
        if self.mesh is not None:
            Xs = self.mesh.vertices + self.Bs @ D
            if self.coupling is not None and self.coupling.n_attached:
                Xl[self.coupling.joints] = self.coupling.G @ Xs
        return Xs, Xl

    def structure(self, D=None, areas=None) -> Structure:
        Xs, Xl = self.positions(D)
        lat = self.lattice.with_joints(Xl)
        if areas is not None:
            lat = lat.with_areas(areas)
        shell = None
        if self.mesh is not None:
            mesh = self.mesh.with_vertices(Xs)
            shell = assemble_shell(mesh, self.material, self.pressure, supports=self.shell_supports,
                                   loaded_faces=self.loaded_faces)
        return Structure(lat, shell, self.coupling)

    def solve(self, D=None) -> tuple[CoupledSolution, Structure]:
        st = self.structure(D)
        truss = assemble_truss(st.lattice)
        return solve_coupled(st.shell, truss, self.coupling, joints=st.lattice.joints, cache=self.cache), st

    def volume(self, D=None) -> float:
        return volume_gradient(self, D)[0]

    def chain(self, g_shell, g_lattice) -> np.ndarray:
        """Pull position gradients back to control displacements (fixed rows zeroed)."""
        gl = np.asarray(g_lattice, float).reshape(-1, 3)
        out = self.Bl.T @ gl[self.free_joints]
        if self.mesh is not None:
            gs = np.asarray(g_shell, float).reshape(-1, 3).copy()
            if self.coupling is not None and self.coupling.n_attached:
                gs += self.coupling.G.T @ gl[self.coupling.joints]
            out += self.Bs.T @ gs
        out[self.prism.fixed] = 0.0
        return out

    def support_points(self) -> np.ndarray:
        """Positions that must stay put: supported shell vertices and free joints."""
        pts = []
        if self.mesh is not None and self.shell_supports:
            pts.append(self.mesh.vertices[sorted(self.shell_supports)])
        lat_sup = [j for j in self.lattice.supports if j in set(self.free_joints.tolist())]
        if lat_sup:
            pts.append(self.lattice.joints[sorted(lat_sup)])
        return np.vstack(pts) if pts else np.zeros((0, 3))

    def design_basis(self) -> np.ndarray:
        """Orthonormal columns spanning control displacements that keep supports fixed.

        Rows of the constraint are unit rows for fixed control points and the
        prism weights at every support point; the same constraint applies to
        each coordinate direction.
        """
        n = self.prism.n_points
        rows = [np.eye(n)[self.prism.fixed]]
        sp_pts = self.support_points()
        if len(sp_pts):
            rows.append(self.prism.basis(self.prism.immerse(sp_pts)))
        C = np.vstack(rows) if rows else np.zeros((0, n))
        N = sla.null_space(C, rcond=1e-10) if len(C) else np.eye(n)
        return np.kron(N, np.eye(3))


# ---------------------------------------------------------------------------
# sensitivities

def _lattice_energy_gradient(joints, struts, areas, E, u) -> np.ndarray:
    """``d/dX sum_e u_e . K_e(X) u_e`` for pin-jointed struts."""
    X = np.asarray(joints, float)
    U = np.asarray(u, float).reshape(len(X), -1)
    dim = U.shape[1]
    a, b = struts[:, 0], struts[:, 1]
    x = X[b, :dim] - X[a, :dim]
    l = np.linalg.norm(x, axis=1)
    n = x / l[:, None]
    du = U[b] - U[a]
    delta = np.sum(n * du, axis=1)
    g = (E * areas / l ** 2)[:, None] * (-(delta ** 2)[:, None] * n + 2 * delta[:, None] * (du - delta[:, None] * n))
    out = np.zeros((len(X), 3))
    np.add.at(out[:, :dim], b, g)
    np.add.at(out[:, :dim], a, -g)
    return out


def shape_gradient(model: ShapeModel, D=None, solution: CoupledSolution | None = None):
    """Compliance and its gradient with respect to control displacements.

    Returns ``(J, dJ/dD)`` with ``dJ/dD`` of shape ``(n_control, 3)``.
    """
    if solution is None:
        solution, st = model.solve(D)
    else:
        st = model.structure(D)
    lat = st.lattice
    g_l = -_lattice_energy_gradient(lat.joints, lat.struts, lat.areas, lat.E, solution.u_lattice)
    g_s = None
    if model.mesh is not None:
        mesh = st.shell.mesh
        us = solution.u_shell
        g_s = -energy_shape_gradient(mesh, model.material, us)
        if np.any(np.asarray(model.pressure, float) != 0):
            g_s = g_s + 2.0 * load_shape_gradient(mesh, model.pressure, us, model.loaded_faces)
    return solution.J, model.chain(g_s, g_l)


def volume_gradient(model: ShapeModel, D=None):
    """Total material volume ``t * area + sum A_e l_e`` and its control-point gradient."""
    Xs, Xl = model.positions(D)
    lat = model.lattice
    a, b = lat.struts[:, 0], lat.struts[:, 1]
    x = Xl[b] - Xl[a]
    l = np.linalg.norm(x, axis=1)
    g = lat.areas[:, None] * x / l[:, None]
    g_l = np.zeros_like(Xl)
    np.add.at(g_l, b, g)
    np.add.at(g_l, a, -g)
    V = float(lat.areas @ l)
    g_s = None
    if model.mesh is not None:
        area, dA = shell_area_and_derivative(model.mesh, Xs)
        V += model.material.t * area
        g_s = model.material.t * dA
    return V, model.chain(g_s, g_l)


# ---------------------------------------------------------------------------
# optimisation

@dataclass
class ShapeOptConfig:
    max_iter: int = 300
    rtol: float = 1e-5
    window: int = 3
    method: str = "slsqp"
    bound: float = 0.5          # |design| limit as a fraction of the prism diagonal
    step: float = 0.02          # first-step size, same units; sets the variable scaling
    snapshot_every: int = 0


@dataclass
class ShapeOptResult:
    displacements: np.ndarray
    J: float
    J_history: list
    volume_history: list
    status: str
    model: ShapeModel
    snapshots: list = field(default_factory=list)

    def structure(self) -> Structure:
        return self.model.structure(self.displacements)


def run_shapeopt(model: ShapeModel, config: ShapeOptConfig | None = None, *, callback=None) -> ShapeOptResult:
    """Minimise compliance over control displacements at fixed total volume."""
    cfg = config or ShapeOptConfig()
    N = model.design_basis()
    L = model.prism.diagonal
    nz = N.shape[1]
    V0 = model.volume()
    Js, Vs, snaps = [], [], []
    if nz == 0:
        J0 = model.solve()[0].J
        return ShapeOptResult(np.zeros((model.prism.n_points, 3)), J0, [J0], [V0], "converged", model)
    J0, g0 = shape_gradient(model)
    # z = D / (a L): a quasi-Newton method starting from the identity then
    # takes a first step of about cfg.step * L instead of |grad| * L
    gmax = float(np.abs(N.T @ g0.ravel()).max()) * L / J0
    a = np.sqrt(cfg.step / gmax) if gmax > 0 else 1.0
    scale = a * L

    def D_of(z):
        return (N @ (scale * z)).reshape(-1, 3)

    def objective(z):
        J, g = shape_gradient(model, D_of(z))
        return J / J0, (N.T @ g.ravel()) * scale / J0

    def constraint(z):
        V, g = volume_gradient(model, D_of(z))
        return (V - V0) / V0, (N.T @ g.ravel()) * scale / V0

    def record(it, z, f):
        Js.append(float(f) * J0)
        Vs.append(model.volume(D_of(z)))
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            snaps.append((it, D_of(z)))
        if callback is not None:
            callback(it, D_of(z), float(f) * J0)

    problem = NlpProblem(objective, np.zeros(nz), -cfg.bound / a, cfg.bound / a, [constraint])
    opts = OptimizeOptions(method=cfg.method, max_iter=cfg.max_iter, rtol=cfg.rtol, window=cfg.window,
                           callback=record)
    res = minimize(problem, opts)
    D = D_of(res.x)
    return ShapeOptResult(D, float(res.fun) * J0, Js, Vs, res.status, model, snaps)


# ---------------------------------------------------------------------------
# form finding

def _sheet_weights(mesh: ShellMesh, points, seeds: int = 3):
    """Sparse interpolation weights carrying shell displacements to off-surface points.

    Each point is projected onto every connected sheet of the mesh; the sheet
    values are blended with inverse-distance weights, which is linear
    interpolation through the thickness when there are two sheets.
    """
    faces = mesh.faces
    nv = mesh.n_vertices
    adj = sp.coo_matrix((np.ones(faces.size), (np.repeat(np.arange(len(faces)), 4), faces.ravel())),
                        shape=(len(faces), nv)).tocsr()
    ncomp, labels = connected_components(adj @ adj.T, directed=False)
    centres = np.array([mesh.face_point(f, 0.5, 0.5)[0] for f in range(mesh.n_faces)])
    tol = 1e-10 * mesh.diameter()
    P = np.asarray(points, float)
    per_sheet = []
    for c in range(ncomp):
        ids = np.flatnonzero(labels == c)
        tree = cKDTree(centres[ids])
        k = min(seeds, len(ids))
        _, cand = tree.query(P, k=k)
        cand = np.asarray(cand).reshape(len(P), k)
        res = []
        for i, p in enumerate(P):
            best = None
            for f in sorted(ids[cand[i]].tolist()):
                th, d, _ = _newton_project(mesh, f, p, (0.5, 0.5), tol)
                if best is None or d < best[0] - tol:
                    best = (d, f, th)
            res.append(best)
        per_sheet.append(res)
    rows, cols, vals = [], [], []
    for i in range(len(P)):
        d = np.array([per_sheet[c][i][0] for c in range(ncomp)])
        if np.any(d <= tol):
            w = (d <= tol).astype(float)
        else:
            w = 1.0 / d
        w /= w.sum()
        for c in range(ncomp):
            if w[c] == 0:
                continue
            _, f, th = per_sheet[c][i]
            vid, Nb, _, _ = mesh.basis_real(f, th[0], th[1])
            rows.extend([i] * len(vid))
            cols.extend(vid.tolist())
            vals.extend((w[c] * Nb).tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(P), nv))


def form_find(model: ShapeModel, s: float, *, solution: CoupledSolution | None = None,
              carry=None) -> ShapeModel:
    """Move the geometry by ``s`` times its own deflection under the model loads.

    Shell control vertices get ``x + s u``; attached joints are re-evaluated
    on the moved surface; free joints take the shell displacement carried by
    ``carry`` (see :func:`_sheet_weights`). The prism is refitted around the
    new geometry with the same degrees and fixed flags.
    """
    if model.mesh is None:
        raise ValueError("form finding needs a shell")
    if solution is None:
        solution, _ = model.solve()
    us = solution.u_shell
    Xs = model.mesh.vertices + s * us
    Xl = model.lattice.joints.copy()
    if len(model.free_joints):
        W = _sheet_weights(model.mesh, Xl[model.free_joints]) if carry is None else carry
        Xl[model.free_joints] += s * (W @ us)
    if model.coupling is not None and model.coupling.n_attached:
        Xl[model.coupling.joints] = model.coupling.G @ Xs
    pts = np.vstack([Xs, Xl])
    prism = FFDPrism.around(pts, model.prism.degrees)
    prism = replace(prism, fixed=model.prism.fixed.copy())
    return ShapeModel(model.lattice.with_joints(Xl), prism, model.mesh.with_vertices(Xs), model.material,
                      model.coupling, model.pressure, model.shell_supports, model.loaded_faces)


def calibrate_form_factor(model: ShapeModel, target_J: float, s_max: float, *, rtol: float = 1e-3,
                          max_eval: int = 40) -> tuple[float, ShapeModel, float]:
    """Find ``s`` in ``[0, s_max]`` (signed) whose form-found compliance hits ``target_J``.

    Bisection on ``J(s)``, which is assumed monotone on the bracket.
    Returns ``(s, model, J)``.
    """
    sol, _ = model.solve()
    W = _sheet_weights(model.mesh, model.lattice.joints[model.free_joints]) if len(model.free_joints) else None

    def J_of(s):
        m = form_find(model, s, solution=sol, carry=W)
        return m.solve()[0].J, m

    lo, hi = 0.0, s_max
    J_lo = sol.J
    J_hi, m_hi = J_of(hi)
    if (J_lo - target_J) * (J_hi - target_J) > 0:
        return hi, m_hi, J_hi
    best = (abs(J_hi - target_J), hi, m_hi, J_hi)
    for _ in range(max_eval):
        mid = 0.5 * (lo + hi)
        J_mid, m_mid = J_of(mid)
        if abs(J_mid - target_J) < best[0]:
            best = (abs(J_mid - target_J), mid, m_mid, J_mid)
        if abs(J_mid - target_J) <= rtol * target_J:
            break
        if (J_lo - target_J) * (J_mid - target_J) <= 0:
            hi = mid
        else:
            lo, J_lo = mid, J_mid
    return best[1], best[2], best[3]


# ---------------------------------------------------------------------------
# sequential driver

@dataclass
class SequentialResult:
    shape: ShapeOptResult
    J_reduced: float
    topology: object
    structure: Structure


def run_sequential(model: ShapeModel, shape_config: ShapeOptConfig | None, topopt_config: TopOptConfig, *,
                   shape_callback=None, topopt_callback=None) -> SequentialResult:
    """Shape optimisation, uniform area reduction to the volume fraction, then topology optimisation."""
    if shape_config is None:
        sol, _ = model.solve()
        shape = ShapeOptResult(np.zeros((model.prism.n_points, 3)), sol.J, [sol.J], [model.volume()],
                               "skipped", model)
    else:
        shape = run_shapeopt(model, shape_config, callback=shape_callback)
    st = shape.structure()
    st = replace(st, cache=SolverCache())
    rho = np.full(st.lattice.n_struts, topopt_config.volume_fraction)
    sol, _ = st.solve(rho)   # uniform reduction, no penalty
    topo = run_topopt(st, topopt_config, callback=topopt_callback)
    final = replace(st, lattice=topo.lattice)
    return SequentialResult(shape, sol.J, topo, final)
