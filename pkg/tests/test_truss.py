import numpy as np
import pytest

from latticeskin.coupling import solve_coupled
from latticeskin.geometry import generate_grid_lattice
from latticeskin.truss import (assemble_truss, axial_strain, axial_strains, element_energies, strain_energy,
                               strut_stiffness)
from tests.test_geometry import two_point_lattice


def test_unit_axial_stiffness():
    K = strut_stiffness([0, 0, 0], [1, 0, 0], 1.0, 1.0)
    assert K.shape == (6, 6)
    assert K[0, 0] == pytest.approx(1.0)
    assert np.allclose(K[[1, 2, 4, 5]], 0.0)


def test_inclined_stiffness_block():
    K = strut_stiffness([0, 0, 0], [3, 4, 0], 1.0, 1.0)
    np.testing.assert_allclose(K[:2, :2], 0.2 * np.array([[0.36, 0.48], [0.48, 0.64]]), atol=1e-15)


def test_stiffness_properties():
    K = strut_stiffness([0, 0, 0], [1, 2, 3], 2.0, 0.5)
    np.testing.assert_allclose(K, K.T)
    assert np.linalg.matrix_rank(K) == 1
    np.testing.assert_allclose(strut_stiffness([0, 0, 0], [1, 2, 3], 2.0, 1.0), 2 * K)
    # translations lie in the null space
    for d in range(3):
        t = np.zeros(6)
        t[[d, d + 3]] = 1.0
        assert np.allclose(K @ t, 0.0)


def _strut_model(length=2.0, area=0.3, E=5.0, load=1.5):
    lat = two_point_lattice([0, 0, 0], [length, 0, 0], area=area)
    from dataclasses import replace
    lat = replace(lat, E=E, dim=3)
    loads = np.zeros((2, 3))
    loads[1, 0] = load
    return lat.with_supports({0: (True, True, True), 1: (False, True, True)}).with_loads(loads)


def test_single_strut_displacement_and_strain():
    lat = _strut_model()
    sol = solve_coupled(truss=assemble_truss(lat))
    assert sol.u_lattice[1, 0] == pytest.approx(2.0 * 1.5 / (5.0 * 0.3))
    assert axial_strain(lat, sol.u_lattice, 0) == pytest.approx(1.5 / (5.0 * 0.3))


def test_series_struts():
    lat = generate_grid_lattice([0, 0, 0], [1, 1, 0], [1, 1, 1])
    from dataclasses import replace
    joints = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0]], float)
    lat = replace(lat, joints=joints, struts=np.array([[0, 1], [1, 2]]), areas=np.array([1.0, 0.5]),
                  reference_areas=np.array([1.0, 0.5]), cells=[], E=2.0, dim=2, supports={},
                  loads=np.zeros((3, 3)), attached=np.zeros(3, bool))
    loads = np.zeros((3, 3))
    loads[2, 0] = 1.0
    lat = lat.with_supports({0: (True, True, True), 1: (False, True, True), 2: (False, True, True)}).with_loads(loads)
    sol = solve_coupled(truss=assemble_truss(lat))
    assert sol.u_lattice[2, 0] == pytest.approx(1 / (2 * 1.0) + 2 / (2 * 0.5))


def test_braced_cell_resists_sway():
    lat = generate_grid_lattice([0, 0, 0], [1, 1, 0], [1, 1, 1])
    bottom = np.flatnonzero(lat.joints[:, 1] == 0)
    loads = np.zeros_like(lat.joints)
    loads[np.flatnonzero((lat.joints[:, 1] == 1) & (lat.joints[:, 0] == 0)), 0] = 1.0
    lat = lat.with_supports({int(j): (True, True, True) for j in bottom}).with_loads(loads)
    sol = solve_coupled(truss=assemble_truss(lat))
    assert np.isfinite(sol.J) and sol.J > 0


def test_rigid_translation_has_no_strain(rng):
    lat = generate_grid_lattice([0, 0, 0], [2, 2, 2], [1, 1, 1], "BCC3D")
    u = np.tile(rng.standard_normal(3), (lat.n_joints, 1))
    assert np.allclose(axial_strains(lat, u), 0.0)
    assert strain_energy(lat, u) == pytest.approx(0.0, abs=1e-20)


def test_energy_matches_strain_sum(rng):
    lat = generate_grid_lattice([0, 0, 0], [2, 2, 2], [1, 1, 1], "BCC3D", E=3.0)
    lat = lat.with_areas(rng.random(lat.n_struts) + 0.1)
    u = rng.standard_normal((lat.n_joints, 3))
    sys_ = assemble_truss(lat)
    half_uKu = 0.5 * u.ravel() @ (sys_.K @ u.ravel())
    eps = axial_strains(lat, u)
    ref = 0.5 * np.sum(lat.E * eps ** 2 * lat.areas * lat.lengths())
    assert half_uKu == pytest.approx(ref, rel=1e-10)
    assert strain_energy(lat, u) == pytest.approx(ref, rel=1e-10)


def test_scaled_assembly_matches_area_scaling(rng):
    lat = generate_grid_lattice([0, 0, 0], [2, 1, 0], [1, 1, 1], E=2.0)
    rho = rng.random(lat.n_struts)
    K1 = assemble_truss(lat, stiffness_scale=rho).K
    K2 = assemble_truss(lat.with_areas(rho * lat.areas)).K
    assert abs(K1 - K2).max() < 1e-12 * abs(K2).max()
    assert abs(K1 - K1.T).max() == 0.0


def test_element_energies_sum_to_total(rng):
    lat = generate_grid_lattice([0, 0, 0], [2, 1, 0], [1, 1, 1], E=2.0)
    sys_ = assemble_truss(lat)
    u = rng.standard_normal(sys_.ndof)
    total = u @ (sys_.K @ u)
    assert np.sum(lat.E * lat.areas * element_energies(sys_, u)) == pytest.approx(total, rel=1e-12)
