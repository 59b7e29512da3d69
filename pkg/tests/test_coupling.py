import numpy as np
import pytest
import scipy.sparse as sp
from dataclasses import replace

from latticeskin.coupling import (CouplingError, MechanismError, SolverCache, build_coupling, compliance,
                                  dissection_order, factorize, project_point, solve_coupled)
from latticeskin.geometry import generate_grid_lattice
from latticeskin.shell import ShellMaterial, assemble_shell, simply_supported
from latticeskin.subdivision import grid_mesh, limit_evaluate, polygon_mesh
from latticeskin.topopt import RHO_MIN
from latticeskin.truss import assemble_truss

from .conftest import small_skin_lattice


def curved_mesh():
    pm = polygon_mesh(5, 1.0, 3)
    V = pm.vertices.copy()
    V[:, 2] = 0.3 * (1 - V[:, 0] ** 2 - V[:, 1] ** 2)
    return pm.with_vertices(V)


def lattice_at(points):
    lat = generate_grid_lattice([0, 0, 0], [1, 1, 1], [1, 1, 1], "BCC3D")
    P = np.asarray(points, float)
    return replace(lat, joints=P, struts=np.array([[0, 1]]), areas=np.ones(1), reference_areas=np.ones(1),
                   cells=[], loads=np.zeros_like(P), attached=np.ones(len(P), bool), supports={})


# ---- projection ----

def test_limit_point_recovers_theta():
    mesh = grid_mesh(3, 3, (1, 1))
    p = limit_evaluate(mesh, 4, (0.3, 0.7))[0]
    f, th, d, ok = project_point(mesh, p)
    assert ok and d < 1e-12
    assert f == 4 and np.allclose(th, (0.3, 0.7), atol=1e-9)
    c = build_coupling(mesh, lattice_at([p, p + [0.1, 0, 0]]))
    assert np.allclose(np.asarray(c.G.sum(axis=1)).ravel(), 1.0, atol=1e-14)


def test_patch_centre_distance_zero():
    mesh = grid_mesh(1, 1, (1, 1))
    p = limit_evaluate(mesh, 0, (0.5, 0.5))[0]
    assert project_point(mesh, p)[2] < 1e-14


def test_round_trip_on_curved_surface(rng):
    mesh = curved_mesh()
    pts = [limit_evaluate(mesh, int(rng.integers(mesh.n_faces)), rng.random(2))[0] for _ in range(100)]
    c = build_coupling(mesh, lattice_at(pts))
    assert np.abs(c.G @ mesh.vertices - np.array(pts)).max() < 1e-8
    assert np.allclose(np.asarray(c.G.sum(axis=1)).ravel(), 1.0, atol=1e-12)


def test_far_joint_rejected():
    mesh = grid_mesh(2, 2, (1, 1))
    with pytest.raises(CouplingError):
        build_coupling(mesh, lattice_at([[0.5, 0.5, 0.1], [0.2, 0.2, 0.0]]))


# ---- solve ----

def test_energy_identity_and_residual():
    st = small_skin_lattice()
    sol, _ = st.solve()
    assert sol.residual < 1e-10
    assert abs(sol.J - sol.energy) < 1e-10 * sol.J
    assert compliance(sol) == sol.J


def test_attached_joints_follow_the_shell():
    st = small_skin_lattice()
    sol, _ = st.solve()
    gap = sol.u_lattice[st.coupling.joints] - st.coupling.G @ sol.u_shell
    assert np.abs(gap).max() < 1e-12 * np.abs(sol.u_shell).max()


def test_reaction_identity():
    # the shell hands all of its load to the lattice, whose base carries it
    st = small_skin_lattice()
    sol, truss = st.solve()
    total = st.shell.f.reshape(-1, 3).sum(axis=0)
    assert np.allclose(-sol.lam.sum(axis=0), total, rtol=1e-8, atol=1e-12)
    r = (truss.K @ sol.u_lattice.ravel() - truss.f).reshape(-1, 3)
    base = np.array(sorted(st.lattice.supports))
    assert np.allclose(r[base].sum(axis=0), -total, rtol=1e-8, atol=1e-12)


def test_no_attachment_decouples():
    mesh = grid_mesh(4, 4, (1, 1))
    shell = assemble_shell(mesh, ShellMaterial(1e3, 0.3, 0.02), (0, 0, -1),
                           supports=simply_supported(mesh.boundary_vertices))
    lat = generate_grid_lattice([0, 0, 0], [2, 1, 0], [1, 1, 1], area=1.0, E=10.0)
    lat = lat.with_supports({j: (True, True, True) for j in range(lat.n_joints) if lat.joints[j, 0] == 0})
    sol = solve_coupled(shell, assemble_truss(lat), None)
    alone = solve_coupled(shell, None, None)
    assert np.allclose(sol.u_shell, alone.u_shell, rtol=1e-12, atol=1e-15)
    assert not sol.u_lattice.any()
    assert sol.J == pytest.approx(alone.J, rel=1e-12)


def test_floor_struts_reduce_to_shell_only():
    st = small_skin_lattice(t=0.05, pressure=(0, 0, -1))
    sh = st.shell
    # shell supported on its edge; floor-density struts add almost nothing
    mesh = sh.mesh
    shell = assemble_shell(mesh, sh.material, sh.pressure, supports=simply_supported(mesh.boundary_vertices))
    st2 = replace(st, shell=shell)
    rho = np.full(st.lattice.n_struts, RHO_MIN)
    coupled, _ = st2.solve(rho, None)
    alone = solve_coupled(shell, None, None)
    assert coupled.J == pytest.approx(alone.J, rel=1e-3)


def test_stiffening_never_increases_compliance(rng):
    st = small_skin_lattice()
    for _ in range(5):
        rho = rng.uniform(0.05, 1.0, st.lattice.n_struts)
        J0 = st.solve(rho, None)[0].J
        bump = rho.copy()
        e = int(rng.integers(len(rho)))
        bump[e] = min(1.0, rho[e] * 2)
        assert st.solve(bump, None)[0].J <= J0 * (1 + 1e-12)


def test_mechanism_detected():
    lat = generate_grid_lattice([0, 0, 0], [1, 1, 0], [1, 1, 1], area=1.0, E=1.0)
    loads = np.zeros_like(lat.joints)
    loads[0, 1] = 1.0
    with pytest.raises(MechanismError):
        solve_coupled(None, assemble_truss(lat.with_loads(loads)), None)


def test_unmatched_attached_support_rejected():
    st = small_skin_lattice()
    j = int(st.coupling.joints[0])
    lat = st.lattice.with_supports({**st.lattice.supports, j: (True, True, True)})
    with pytest.raises(CouplingError):
        solve_coupled(st.shell, assemble_truss(lat), st.coupling)


# ---- linear algebra ----

def laplacian_3d(n):
    I = sp.identity(n)
    T = sp.diags([-1, 2.5, -1], [-1, 0, 1], shape=(n, n))
    K = sp.kron(sp.kron(T, I), I) + sp.kron(sp.kron(I, T), I) + sp.kron(sp.kron(I, I), T)
    g = np.arange(n, dtype=float)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    return K.tocsr(), np.stack([Z.ravel(), Y.ravel(), X.ravel()], -1)


def test_dissection_order_is_permutation_and_solves(rng):
    K, coords = laplacian_3d(14)
    perm = dissection_order(K, coords)
    assert np.array_equal(np.sort(perm), np.arange(K.shape[0]))
    b = rng.standard_normal(K.shape[0])
    x = factorize(K, coords).solve(b)
    assert np.linalg.norm(K @ x - b) < 1e-10 * np.linalg.norm(b)


def test_solver_cache_reuses_factor(rng):
    K, coords = laplacian_3d(6)
    cache = SolverCache()
    b = rng.standard_normal(K.shape[0])
    x1 = cache.solve(K, b, coords)
    x2 = cache.solve(K * 1.001, b, coords)
    assert cache.reuses == 1 and cache.refactors == 1
    assert np.linalg.norm(1.001 * K @ x2 - b) < 1e-10 * np.linalg.norm(b)
    assert np.allclose(x1, 1.001 * x2)
