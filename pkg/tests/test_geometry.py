from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from holoimg.geometry import (
    DegenerateGeometryError,
    build_planar_layout,
    build_roi,
    is_radiative_near_field,
    pair_geometry,
    plane_axes,
)

LAM = 0.0107

normals = st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_half_wavelength_array_aperture():
    arr = build_planar_layout(20, 20, LAM / 2)
    assert len(arr) == 400
    assert arr.side == pytest.approx(10 * LAM)
    ext = arr.positions.max(axis=0) - arr.positions.min(axis=0)
    assert ext[0] == pytest.approx(19 * LAM / 2)
    assert ext[2] == pytest.approx(19 * LAM / 2)


def test_single_element_sits_at_center():
    arr = build_planar_layout(1, 1, 0.3, center=(1.0, 2.0, 3.0))
    np.testing.assert_array_equal(arr.positions, [[1.0, 2.0, 3.0]])


def test_two_by_two_grid_in_xy_plane():
    arr = build_planar_layout(2, 2, 1.0, center=(0, 0, 0), normal=(0, 0, 1))
    got = {tuple(np.round(p, 12)) for p in arr.positions}
    assert got == {(sx * 0.5, sy * 0.5, 0.0) for sx in (-1, 1) for sy in (-1, 1)}


def test_roi_sizes():
    roi = build_roi(8, 8, 93.75 * LAM)
    assert len(roi) == 64
    assert roi.side == pytest.approx(750 * LAM)
    assert len(build_roi(4, 4, 420 * LAM)) == 16
    one = build_roi(1, 1, 1.0, center=(0, 5, 0))
    np.testing.assert_array_equal(one.cells, [[0.0, 5.0, 0.0]])


def test_roi_row_major_ordering():
    roi = build_roi(3, 2, 1.0, center=(0, 0, 0))
    # cell j * nx + i: consecutive indices step along u, rows step along v
    np.testing.assert_allclose(roi.cells[1] - roi.cells[0], roi.u, atol=1e-12)
    np.testing.assert_allclose(roi.cells[3] - roi.cells[0], roi.v, atol=1e-12)
    assert roi.shape == (2, 3)


def test_invalid_layouts():
    with pytest.raises(ValueError):
        build_planar_layout(0, 2, 1.0)
    with pytest.raises(ValueError):
        build_planar_layout(2, 2, -1.0)
    with pytest.raises(ValueError):
        build_planar_layout(2, 2, 1.0, normal=(0, 0, 0))
    with pytest.raises(ValueError):
        build_planar_layout(2, 2, float("nan"))
    with pytest.raises(ValueError):
        build_roi(2, 2, 1.0, center=(0, np.inf, 0))


def test_layouts_are_immutable():
    arr = build_planar_layout(2, 2, 1.0)
    with pytest.raises(ValueError):
        arr.positions[0, 0] = 5.0


def test_point_distance():
    g = pair_geometry(np.zeros((1, 3)), np.array([[0.0, 10.0, 0.0]]))
    assert g.distances[0, 0] == 10.0
    assert g.azimuths[0, 0] == 0.0 and g.elevations[0, 0] == 0.0


def test_swap_transposes_distances():
    a = build_planar_layout(3, 2, 0.2)
    b = build_roi(2, 2, 1.0, center=(0, 4, 1))
    np.testing.assert_allclose(pair_geometry(a, b).distances, pair_geometry(b, a).distances.T, rtol=1e-12)


def test_grid_to_axis_point_by_hand():
    grid = build_planar_layout(2, 2, 1.0)
    d = pair_geometry(grid, np.array([[0.0, 3.0, 0.0]])).distances
    np.testing.assert_allclose(d, np.sqrt(9 + 0.5), rtol=1e-14)


def test_coincident_points_rejected():
    with pytest.raises(DegenerateGeometryError, match="degenerate geometry"):
        pair_geometry(build_planar_layout(1, 1, 1.0), np.zeros((1, 3)))


def test_frame_rule():
    u, v, n = plane_axes((0, 1, 0))
    np.testing.assert_allclose(u, [1, 0, 0])
    u, _, _ = plane_axes((1, 0, 0))
    np.testing.assert_allclose(u, [0, 1, 0])


@settings(max_examples=40, deadline=None)
@given(rows=st.integers(1, 6), cols=st.integers(1, 6), spacing=st.floats(0.01, 5.0), normal=normals,
       center=st.tuples(*[st.floats(-50, 50) for _ in range(3)]))
def test_layout_invariants(rows, cols, spacing, normal, center):
    arr = build_planar_layout(rows, cols, spacing, center, normal)
    assert len(arr) == rows * cols
    n = np.asarray(normal) / np.linalg.norm(normal)
    assert np.max(np.abs((arr.positions - np.asarray(center)) @ n)) <= 1e-12 * max(1.0, spacing * max(rows, cols))
    np.testing.assert_allclose(arr.positions.mean(axis=0), center, atol=1e-9)
    if len(arr) > 1:
        d = np.linalg.norm(arr.positions[:, None] - arr.positions[None], axis=2)
        np.fill_diagonal(d, np.inf)
        np.testing.assert_allclose(d.min(axis=1), spacing, atol=1e-12 * max(1.0, np.abs(center).max()) * 10)


@settings(max_examples=30, deadline=None)
@given(shift=st.tuples(*[st.floats(-100, 100) for _ in range(3)]), quat=st.tuples(*[st.floats(-1, 1) for _ in range(4)]).filter(lambda q: np.linalg.norm(q) > 0.1))
def test_distance_rigid_invariance(shift, quat):
    a = build_planar_layout(3, 3, 0.1).positions
    b = build_roi(2, 3, 0.7, center=(0.3, 6, -1)).cells
    d0 = pair_geometry(a, b).distances
    rot = Rotation.from_quat(quat).as_matrix()
    np.testing.assert_allclose(pair_geometry(a + shift, b + shift).distances, d0, atol=1e-12 * 200)
    np.testing.assert_allclose(pair_geometry(a @ rot.T, b @ rot.T).distances, d0, atol=1e-12 * 20)


def test_near_field_predicate():
    D, N, lam = 10 * LAM, 400, LAM
    lo = 2 * D * np.sqrt(2 * N)
    hi = 2 * (D * np.sqrt(2 * N)) ** 2 / lam
    assert is_radiative_near_field(D, N, lam, lo)
    assert is_radiative_near_field(D, N, lam, hi)
    assert not is_radiative_near_field(D, N, lam, lo * 0.999)
    assert not is_radiative_near_field(D, N, lam, hi * 1.001)
    assert is_radiative_near_field(D, N, lam, 10.0)
    ds = np.linspace(0.01, 2 * hi, 2000)
    flags = np.array([is_radiative_near_field(D, N, lam, d) for d in ds])
    # a single contiguous interval
    assert np.count_nonzero(np.diff(flags.astype(int))) == 2
