import numpy as np
import pytest

from posekit.errors import DegenerateMesh, InvalidParams
from posekit.mesh import SHAPE_KINDS, TriangleMesh, make_synthetic_shape, read_obj, write_obj


def test_box_counts_and_volume():
    m = make_synthetic_shape("box", {"size": [1, 1, 1]})
    assert m.vertices.shape == (8, 3) and m.triangles.shape == (12, 3)
    assert m.signed_volume() == pytest.approx(1.0)


def test_cylinder_counts():
    m = make_synthetic_shape("cylinder", {"radius": 0.5, "height": 1, "segments": 16})
    assert len(m.triangles) == 16 * 4
    assert m.is_watertight()


def test_ellipsoid_volume_close_to_analytic():
    m = make_synthetic_shape("ellipsoid", {"radii": [1, 2, 0.5]})
    assert m.signed_volume() == pytest.approx(4 / 3 * np.pi, rel=0.02)


@pytest.mark.parametrize("kind", SHAPE_KINDS)
def test_shapes_watertight_outward_and_seeded(kind):
    a = make_synthetic_shape(kind, seed=4)
    b = make_synthetic_shape(kind, seed=4)
    assert np.array_equal(a.vertices, b.vertices)
    assert a.is_watertight()
    assert a.signed_volume() > 0


def test_lshape_volume():
    m = make_synthetic_shape("lshape", {"arm_x": 1.0, "arm_y": 0.8, "thickness": 0.2, "depth": 0.5})
    area = 1.0 * 0.2 + 0.2 * (0.8 - 0.2)
    assert m.signed_volume() == pytest.approx(area * 0.5)


@pytest.mark.parametrize("kind, params", [
    ("box", {"size": [1, -1, 1]}),
    ("cylinder", {"segments": 2}),
    ("ellipsoid", {"radii": [1, 1]}),
    ("lshape", {"arm_x": 0.3, "thickness": 0.4}),
    ("torus", None),
])
def test_invalid_params(kind, params):
    with pytest.raises(InvalidParams):
        make_synthetic_shape(kind, params, seed=0)


def test_obj_roundtrip_and_quads():
    m = make_synthetic_shape("box", {"size": [1, 2, 3]})
    back = read_obj(write_obj(m))
    np.testing.assert_allclose(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    quad = read_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    np.testing.assert_array_equal(quad.triangles, [[0, 1, 2], [0, 2, 3]])
    assert not quad.is_watertight()


@pytest.mark.parametrize("text", ["v 0 0 0\n", "v 0 0 0\nv 1 0 0\nf 1 2\n", "v 0 0 0\nf 1 2 3\n"])
def test_degenerate_obj(text):
    with pytest.raises(DegenerateMesh):
        read_obj(text)


def test_mesh_validation():
    with pytest.raises(DegenerateMesh):
        TriangleMesh(np.zeros((3, 2)), [[0, 1, 2]])
    with pytest.raises(DegenerateMesh):
        TriangleMesh([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def test_transformed():
    m = make_synthetic_shape("box", {"size": [1, 1, 1]})
    t = m.transformed(translation=[1, 2, 3], scale=2.0)
    np.testing.assert_allclose(t.centroid(), [1, 2, 3], atol=1e-12)
    assert t.signed_volume() == pytest.approx(8.0)
