import numpy as np
import pytest

from bronco.errors import ParameterError
from bronco.grid import BinaryMask, LabelMap, ScalarVolume, StructuringElement, flat_index


def test_scalar_volume_geometry():
    v = ScalarVolume(np.zeros((4, 5, 6), dtype=np.int16), (0.7, 0.7, 1.25), (1.0, 2.0, 3.0))
    assert v.dims == (4, 5, 6)
    assert v.voxel_volume_mm3 == pytest.approx(0.7 * 0.7 * 1.25)
    assert np.allclose(v.index_to_mm([1, 1, 1]), [1.7, 2.7, 4.25])


def test_invalid_spacing_rejected():
    with pytest.raises(ParameterError):
        ScalarVolume(np.zeros((2, 2, 2)), (1.0, 0.0, 1.0))


def test_non_3d_rejected():
    with pytest.raises(ParameterError):
        BinaryMask(np.zeros((4, 4), dtype=bool))


def test_labelmap_rejects_negative_and_floats():
    with pytest.raises(ParameterError):
        LabelMap(np.full((2, 2, 2), -1, dtype=np.int32))
    with pytest.raises(ParameterError):
        LabelMap(np.zeros((2, 2, 2), dtype=np.float32))


def test_mask_count_and_geometry_match():
    a = BinaryMask(np.zeros((3, 3, 3), bool), (1, 1, 1))
    b = BinaryMask(np.ones((3, 3, 3), bool), (1, 1, 1))
    assert a.same_geometry(b)
    assert b.count == 27
    assert a.is_empty() and not b.is_empty()


def test_box_element_even_size_contains_center():
    e = StructuringElement.box((20, 20, 20))
    fp = e.footprint()
    assert fp.shape == (20, 20, 20)
    assert fp[e.center()]


def test_ball_element_radius_one_footprint():
    e = StructuringElement.ball(1)
    assert e.footprint().sum() == 7  # center + 6 face neighbors


def test_ball_2d_has_unit_z_extent():
    e = StructuringElement.ball(2, ndim=2)
    assert e.footprint().shape == (5, 5, 1)


def test_flat_index_is_x_fastest():
    dims = (3, 4, 5)
    assert flat_index(dims, np.array([1, 0, 0])) == 1
    assert flat_index(dims, np.array([0, 1, 0])) == 3
    assert flat_index(dims, np.array([0, 0, 1])) == 12
