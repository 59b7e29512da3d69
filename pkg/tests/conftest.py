import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_skin_lattice(t=0.02, E=1e3, nu=0.3, pressure=(0.0, 0.0, -1.0), n=2):
    """Flat shell on top of an ``n`` x ``n`` x 1 BCC block whose base is fixed."""
    from latticeskin.coupling import build_coupling
    from latticeskin.geometry import generate_grid_lattice
    from latticeskin.shell import ShellMaterial, assemble_shell
    from latticeskin.subdivision import grid_mesh
    from latticeskin.topopt import Structure

    h = 0.5
    lat = generate_grid_lattice([0, 0, 0], [n * h, n * h, h], [h, h, h], "BCC3D", area=1e-2, E=E)
    z = lat.joints[:, 2]
    lat = lat.with_attached(np.abs(z - h) < 1e-12)
    lat = lat.with_supports({int(j): (True, True, True) for j in np.flatnonzero(np.abs(z) < 1e-12)})
    mesh = grid_mesh(n, n, (n * h, n * h), (0, 0, h))
    shell = assemble_shell(mesh, ShellMaterial(E, nu, t), pressure)
    return Structure(lat, shell, build_coupling(mesh, lat))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
