import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posekit import translation as tr
from posekit.errors import BinIndexOutOfRange, InvalidRange

UNIT = ((0, 1), (0, 1), (0, 1))


@pytest.fixture(scope="module")
def table():
    return tr.generate_translation_bins()


def test_single_cube_is_whole_range():
    t = tr.generate_translation_bins(UNIT, (1, 1, 1))
    assert t.n == 1
    np.testing.assert_allclose(t.cube_dims, [1, 1, 1])
    np.testing.assert_allclose(t.centers, [[0.5, 0.5, 0.5]])


def test_two_per_axis():
    t = tr.generate_translation_bins(UNIT, (2, 2, 2))
    assert t.n == 8
    np.testing.assert_allclose(t.cube_dims, [0.5] * 3)


def test_default_layout(table):
    assert table.n == 128
    assert table.centers.shape == (128, 3)
    np.testing.assert_allclose(table.cube_dims, [0.4375, 0.4375, 1.1875])
    assert table.cube_diagonal == pytest.approx(np.sqrt(2 * 0.4375**2 + 1.1875**2))


@pytest.mark.parametrize("ranges, divisions", [
    (((0, 1), (0, 1)), (1, 1, 1)),
    (((0, 1), (1, 1), (0, 1)), (1, 1, 1)),
    (((0, 1), (2, 1), (0, 1)), (1, 1, 1)),
    (UNIT, (1, 0, 1)),
    (UNIT, (1, 1)),
])
def test_invalid(ranges, divisions):
    with pytest.raises(InvalidRange):
        tr.generate_translation_bins(ranges, divisions)


def test_center_encodes_to_half(table):
    for k in (0, 17, 127):
        code = tr.encode_translation(table.centers[k], table)
        assert code.bin_index == k
        np.testing.assert_allclose(code.delta, [0.5] * 3, atol=1e-12)
        assert not code.out_of_range


def test_min_corner(table):
    code = tr.encode_translation(table.ranges[:, 0], table)
    assert code.bin_index == 0
    np.testing.assert_array_equal(code.delta, [0, 0, 0])


def test_index_order_is_z_fastest():
    t = tr.generate_translation_bins(UNIT, (2, 2, 2))
    assert tr.encode_translation([0.1, 0.1, 0.9], t).bin_index == 1
    assert tr.encode_translation([0.1, 0.9, 0.1], t).bin_index == 2
    assert tr.encode_translation([0.9, 0.1, 0.1], t).bin_index == 4


def test_shared_face_goes_to_upper_cube_and_top_face_is_closed():
    t = tr.generate_translation_bins(UNIT, (2, 1, 1))
    face = tr.encode_translation([0.5, 0.3, 0.3], t)
    assert face.bin_index == 1
    np.testing.assert_array_equal(face.delta[0], 0.0)
    top = tr.encode_translation([1.0, 0.3, 0.3], t)
    assert top.bin_index == 1 and top.delta[0] == 1.0 and not top.out_of_range


def test_out_of_range_is_clamped_and_flagged(table):
    code = tr.encode_translation([5.0, 0.0, 20.0], table)
    assert code.out_of_range
    np.testing.assert_allclose(tr.decode_translation(code, table), [1.5, 0.0, 10.0])


@settings(max_examples=300, deadline=None)
@given(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)))
def test_roundtrip_and_partition(u):
    table = tr.generate_translation_bins()
    lo, hi = table.ranges[:, 0], table.ranges[:, 1]
    t = lo + np.asarray(u) * (hi - lo)
    code = tr.encode_translation(t, table)
    assert np.all(code.delta >= 0) and np.all(code.delta <= 1)
    assert not code.out_of_range
    np.testing.assert_allclose(tr.decode_translation(code, table), t, atol=1e-12)
    cmin = table.cube_min(code.bin_index)
    assert np.all(t >= cmin - 1e-12) and np.all(t <= cmin + table.cube_dims + 1e-12)


def test_bad_index(table):
    with pytest.raises(BinIndexOutOfRange):
        tr.decode_translation(tr.TranslationCode(128, np.zeros(3), False), table)


def test_json_roundtrip(tmp_path, table):
    table.save(tmp_path / "t.json")
    back = tr.TranslationBinTable.load(tmp_path / "t.json")
    np.testing.assert_array_equal(back.ranges, table.ranges)
    assert back.divisions == table.divisions
