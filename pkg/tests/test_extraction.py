import numpy as np
import pytest
from dataclasses import replace

from latticeskin.extraction import (extract, extraction_pipeline, fill_concave_voids, mechanism_count,
                                    recover_cells)
from latticeskin.geometry import generate_grid_lattice


def grid(m, n):
    lat = generate_grid_lattice([0, 0, 0], [m, n, 0], [1, 1, 1], "square-X2D")
    bottom = np.flatnonzero(lat.joints[:, 1] == 0)
    return lat.with_supports({int(j): (True, True, True) for j in bottom})


def cell_mask(lat, cells):
    kept = np.zeros(lat.n_struts, bool)
    for c in cells:
        kept[list(lat.cells[c].strut_ids)] = True
    return kept


def cell_at(lat, x, y):
    cc = lat.cell_centroids()
    return int(np.argmin(np.linalg.norm(cc[:, :2] - [x + 0.5, y + 0.5], axis=1)))


def test_threshold_examples():
    lat = grid(1, 1)
    assert extract(lat, np.full(lat.n_struts, 1e-9), 0.0).all()
    three = replace(lat, struts=lat.struts[:3], areas=np.ones(3), reference_areas=np.ones(3), cells=[])
    assert extract(three, [0.0005, 0.002, 0.005], 0.001).tolist() == [False, True, True]
    with pytest.raises(ValueError):
        extract(lat, np.ones(lat.n_struts), -1.0)


def test_recover_fills_cell_with_a_kept_diagonal():
    lat = grid(2, 1)
    c = lat.cells[0]
    kept = np.zeros(lat.n_struts, bool)
    kept[c.diagonal_ids[0]] = True
    out = recover_cells(lat, kept)
    assert out[list(c.strut_ids)].all() and out.sum() == 8


def test_recover_ignores_cells_without_diagonals():
    lat = grid(2, 1)
    kept = np.zeros(lat.n_struts, bool)
    edges = [s for s in lat.cells[0].strut_ids if s not in lat.cells[0].diagonal_ids]
    kept[edges] = True
    assert np.array_equal(recover_cells(lat, kept), kept)


def test_recover_and_fill_are_idempotent_and_monotone(rng):
    lat = grid(5, 4)
    for _ in range(10):
        kept = rng.random(lat.n_struts) < 0.3
        r = recover_cells(lat, kept)
        assert np.all(r >= kept)
        assert np.array_equal(recover_cells(lat, r), r)
        f = fill_concave_voids(lat, r)
        assert np.all(f >= r)
        assert np.array_equal(fill_concave_voids(lat, f), f)


def test_convex_void_unchanged():
    lat = grid(3, 3)
    ring = [c for c in range(9) if c != cell_at(lat, 1, 1)]
    kept = cell_mask(lat, ring)
    assert np.array_equal(fill_concave_voids(lat, kept), kept)


def test_fully_kept_unchanged():
    lat = grid(3, 2)
    kept = np.ones(lat.n_struts, bool)
    assert np.array_equal(fill_concave_voids(lat, kept), kept)


def test_l_shape_is_rigid_and_kept():
    lat = grid(2, 2)
    kept = cell_mask(lat, [cell_at(lat, 0, 0), cell_at(lat, 1, 0), cell_at(lat, 0, 1)])
    out = fill_concave_voids(lat, kept)
    assert np.array_equal(out, kept)
    assert mechanism_count(lat, out) == 0


def test_corner_hinge_is_filled():
    # two cells touching at one joint rotate about it until a void cell is filled
    lat = grid(2, 2)
    kept = cell_mask(lat, [cell_at(lat, 0, 0), cell_at(lat, 1, 1)])
    assert mechanism_count(lat, kept) > 0
    out = fill_concave_voids(lat, kept)
    assert out.sum() > kept.sum()
    assert mechanism_count(lat, out) == 0


def test_mechanism_examples():
    lat = generate_grid_lattice([0, 0, 0], [1, 1, 0], [1, 1, 1], "square-X2D")
    lat = lat.with_supports({int(j): (True, True, True) for j in np.flatnonzero(lat.joints[:, 1] == 0)})
    c = lat.cells[0]
    edges = np.zeros(lat.n_struts, bool)
    edges[[s for s in c.strut_ids if s not in c.diagonal_ids]] = True
    assert mechanism_count(lat, edges) >= 1
    assert mechanism_count(lat, np.ones(lat.n_struts, bool)) == 0


@pytest.mark.parametrize("dim, expected", [(2, 1), (3, 2)])
def test_single_pinned_strut(dim, expected):
    lat = generate_grid_lattice([0, 0, 0], [1, 1, 1], [1, 1, 1], "BCC3D")
    lat = replace(lat, joints=np.array([[0, 0, 0], [1, 0, 0.0]]), struts=np.array([[0, 1]]), areas=np.ones(1),
                  reference_areas=np.ones(1), cells=[], loads=None, attached=None,
                  supports={0: (True, True, True)}, dim=dim)
    assert mechanism_count(lat, [True]) == expected


def test_sparse_rank_path_agrees_with_qr(rng):
    lat = grid(6, 3)
    for _ in range(3):
        kept = rng.random(lat.n_struts) < 0.7
        assert mechanism_count(lat, kept, dense_limit=0) == mechanism_count(lat, kept)


def test_pipeline_report():
    lat = grid(4, 2)
    areas = np.full(lat.n_struts, 1e-6)
    areas[list(lat.cells[0].diagonal_ids)[:1]] = 1.0
    rep = extraction_pipeline(lat, areas, 1e-3)
    assert rep.n_kept == 8 and rep.n_removed == lat.n_struts - 8
    assert rep.mechanisms == 0
    assert rep.lines()[-1] == "mechanisms: 0"
