import subprocess
import sys

import numpy as np
import pytest
import yaml

from latticeskin import cli
from latticeskin.geometry import generate_grid_lattice
from latticeskin.io import (ConfigError, RunConfig, export_vtk, load_config, read_lattice, read_mesh,
                            read_vtk_cell_scalar, write_lattice, write_mesh)
from latticeskin.presets import available, config_path
from latticeskin.problems import cantilever_2d
from latticeskin.subdivision import grid_mesh
from latticeskin.topopt import Structure

from .conftest import small_skin_lattice


def small_lattice(**kw):
    return cantilever_2d(1.0, length=4.0, height=2.0, volume=1.0, E=100.0, **kw)


def write_cfg(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def lattice_cfg(tmp_path, problem="analyze", lat=None, **blocks):
    write_lattice(tmp_path / "lat.txt", lat if lat is not None else small_lattice())
    return write_cfg(tmp_path, {"problem": problem, "model": {"lattice_file": "lat.txt"}, **blocks})


def run(cfg_path, command, out, capsys=None, *extra):
    code = cli.main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    text = capsys.readouterr() if capsys is not None else None
    return code, text


def report_value(text, key):
    for line in text.out.splitlines():
        if line.startswith(f"{key}: "):
            return line.split(": ", 1)[1]
    raise KeyError(key)


# ---- config ----

def test_config_round_trip(tmp_path):
    for name in available():
        cfg = load_config(config_path(name))
        again = RunConfig.from_dict(yaml.safe_load(cfg.dump()), base_dir=cfg.base_dir)
        assert again == cfg
        assert again.dump() == cfg.dump()


@pytest.mark.parametrize("data, match", [
    ({"problem": "analyze", "model": {"preset": "mbb"}, "bogus": 1}, "unknown top-level"),
    ({"problem": "fly", "model": {"preset": "mbb"}}, "problem must be"),
    ({"problem": "topopt", "model": {"preset": "mbb"}, "topopt": {"volume_fraction": 0}}, "volume_fraction"),
    ({"problem": "shapeopt", "model": {"preset": "mbb"}}, "prism"),
    ({"problem": "analyze", "model": {"preset": "nope"}}, "unknown preset"),
    ({"problem": "analyze", "model": {"lattice_file": "missing.txt"}}, "not found"),
    ({"problem": "analyze", "model": {"preset": "mbb", "lattice_file": "x"}}, "exactly one"),
])
def test_config_errors(tmp_path, data, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(data, base_dir=tmp_path)


# ---- files ----

def test_lattice_file_round_trip(tmp_path):
    for lat in (small_lattice(), small_skin_lattice().lattice,
                generate_grid_lattice([0, 0, 0], [2, 1, 1], [1, 1, 1], "BCC3D", area=0.3)):
        write_lattice(tmp_path / "l.txt", lat)
        back = read_lattice(tmp_path / "l.txt")
        for attr in ("joints", "struts", "areas", "reference_areas", "loads", "attached"):
            assert np.array_equal(getattr(back, attr), getattr(lat, attr)), attr
        assert back.E == lat.E and back.dim == lat.dim and back.supports == lat.supports
        assert [c.strut_ids for c in back.cells] == [c.strut_ids for c in lat.cells]
        assert [c.diagonal_ids for c in back.cells] == [c.diagonal_ids for c in lat.cells]


def test_mesh_file_round_trip(tmp_path):
    m = grid_mesh(3, 2, (1.0, 0.7))
    write_mesh(tmp_path / "m.txt", m)
    back = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.vertices, m.vertices) and np.array_equal(back.faces, m.faces)


def test_vtk_is_byte_stable_and_carries_areas(tmp_path):
    st = small_skin_lattice()
    sol, _ = st.solve()
    for name in ("a.vtk", "b.vtk"):
        export_vtk(tmp_path / name, st.lattice, st.shell.mesh, u_lattice=sol.u_lattice, u_shell=sol.u_shell)
    assert (tmp_path / "a.vtk").read_bytes() == (tmp_path / "b.vtk").read_bytes()
    kind = read_vtk_cell_scalar(tmp_path / "a.vtk", "kind")
    area = read_vtk_cell_scalar(tmp_path / "a.vtk", "area")
    assert np.array_equal(area[kind == 1], st.lattice.areas)
    assert "POINT_DATA" in (tmp_path / "a.vtk").read_text()


def test_vtk_geometry_only(tmp_path):
    lat = small_lattice()
    export_vtk(tmp_path / "g.vtk", lat)
    text = (tmp_path / "g.vtk").read_text()
    assert "POINT_DATA" not in text
    assert f"CELLS {lat.n_struts} {3 * lat.n_struts}" in text


# ---- commands ----

def test_analyze_reports_compliance(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path)
    code, text = run(cfg, "analyze", tmp_path / "out", capsys)
    assert code == 0
    J = float(report_value(text, "J"))
    assert J == pytest.approx(Structure(small_lattice()).solve()[0].J, rel=1e-12)
    for f in ("report.txt", "result.vtk", "config.yaml"):
        assert (tmp_path / "out" / f).is_file()


def test_zero_load_gives_zero_compliance(tmp_path, capsys):
    lat = small_lattice()
    cfg = lattice_cfg(tmp_path, lat=lat.with_loads(np.zeros_like(lat.loads)))
    code, text = run(cfg, "analyze", tmp_path / "out", capsys)
    assert code == 0 and float(report_value(text, "J")) == 0.0


def test_missing_mesh_file_is_config_error(tmp_path, capsys):
    write_lattice(tmp_path / "lat.txt", small_lattice())
    cfg = write_cfg(tmp_path, {"problem": "analyze", "model": {"lattice_file": "lat.txt", "mesh_file": "no.txt",
                                                               "shell": {"E": 1, "nu": 0.3, "t": 0.1}}})
    assert run(cfg, "analyze", tmp_path / "out", capsys)[0] == 1


def test_bad_volume_fraction_is_config_error(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path, "topopt", topopt={"volume_fraction": 0})
    code, text = run(cfg, "topopt", tmp_path / "out", capsys)
    assert code == 1 and "volume_fraction" in text.err


def test_command_mismatch_is_config_error(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path)
    assert run(cfg, "topopt", tmp_path / "out", capsys)[0] == 1


def test_missing_prism_is_config_error(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path, "shapeopt")
    assert run(cfg, "shapeopt", tmp_path / "out", capsys)[0] == 1


def test_mechanism_is_solver_failure(tmp_path, capsys):
    lat = small_lattice().with_supports({})
    cfg = lattice_cfg(tmp_path, lat=lat)
    code, text = run(cfg, "analyze", tmp_path / "out", capsys)
    assert code == 2 and "solver failure" in text.err


def test_topopt_full_volume_and_artifacts(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path, "topopt", topopt={"volume_fraction": 1.0, "max_iter": 10, "snapshot_every": 2})
    code, text = run(cfg, "topopt", tmp_path / "out", capsys)
    assert code == 0
    out = tmp_path / "out"
    J = float(report_value(text, "J"))
    assert J == pytest.approx(Structure(small_lattice()).solve()[0].J, rel=1e-10)
    assert report_value(text, "mechanisms") == "0"
    assert float(report_value(text, "volume_fraction")) == pytest.approx(1.0, rel=1e-9)
    for f in ("history.csv", "areas.csv", "histogram.csv", "extracted_lattice.txt", "result.vtk"):
        assert (out / f).is_file(), f
    assert (out / "snapshots" / "density_0000.txt").is_file()
    assert read_lattice(out / "extracted_lattice.txt").n_struts == small_lattice().n_struts


def test_shapeopt_all_fixed_noop(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path, "shapeopt", prism={"degrees": [1, 1, 1], "fixed": list(range(8))},
                      shapeopt={"max_iter": 5})
    code, text = run(cfg, "shapeopt", tmp_path / "out", capsys)
    assert code == 0
    assert float(report_value(text, "J")) == pytest.approx(float(report_value(text, "J_initial")))


def test_extract_command(tmp_path, capsys):
    lat = small_lattice()
    areas = lat.areas.copy()
    areas[::3] = 1e-6
    cfg = lattice_cfg(tmp_path, "extract", lat=lat.with_areas(areas), extraction={"threshold": 1e-3})
    code, text = run(cfg, "extract", tmp_path / "out", capsys)
    assert code == 0
    n = int(report_value(text, "kept_struts"))
    assert n == read_lattice(tmp_path / "out" / "extracted_lattice.txt").n_struts


def test_bad_threads_is_config_error(tmp_path, capsys):
    cfg = lattice_cfg(tmp_path)
    assert run(cfg, "analyze", tmp_path / "out", capsys, "--threads", "0")[0] == 1


def test_module_entry_point(tmp_path):
    cfg = lattice_cfg(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "latticeskin", "analyze", "--config", str(cfg),
                           "--out", str(tmp_path / "o"), "--threads", "1", "--seed", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "seed: 3" in proc.stdout
