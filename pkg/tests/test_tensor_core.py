import numpy as np
import pytest

from repGhostToolkit.errors import ShapeError
from repGhostToolkit.tensor_core import Layout, Rng, Tensor, layout_convert, max_abs_diff, tensor_from_seed


def test_splitmix64_reference_values():
    """
    The stream for seed 0 must match the published splitmix64 outputs.
    """
    rng = Rng(0)
    first = rng.next_u64(3)
    assert [int(v) for v in first] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_rng_stream_continues_across_calls():
    whole = Rng(99).next_u64(5)
    rng = Rng(99)
    parts = np.concatenate([rng.next_u64(2), rng.next_u64(3)])
    assert np.array_equal(whole, parts)


def test_uniform_range():
    values = Rng(5).uniform((1000,))
    assert values.dtype == np.float32
    assert values.min() >= -0.5 and values.max() <= 0.5


def test_tensor_from_seed_is_deterministic():
    a = tensor_from_seed((1, 1, 1, 1), Layout.NCHW, 0)
    b = tensor_from_seed((1, 1, 1, 1), Layout.NCHW, 0)
    assert a.data.tobytes() == b.data.tobytes()


def test_layout_convert_keeps_values():
    t = tensor_from_seed((1, 2, 3, 3), Layout.NCHW, 7)
    converted = layout_convert(t, Layout.NHWC)
    assert sorted(t.flat.tolist()) == sorted(converted.flat.tolist())
    assert converted == t


def test_seeded_mean_close_to_zero():
    t = tensor_from_seed((2, 16, 8, 8), Layout.NCHW, 42)
    total = 0.0
    count = 0
    for value in t.flat.tolist():
        total += value
        count += 1
    assert abs(total / count) <= 0.05, f"mean {total / count} drifted from 0"


def test_zero_dimension_rejected():
    with pytest.raises(ShapeError):
        tensor_from_seed((1, 0, 3, 3), Layout.NCHW, 0)


def test_layout_convert_index_remap():
    t = Tensor(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2), Layout.NCHW)
    nhwc = layout_convert(t, Layout.NHWC)
    assert nhwc.flat.tolist() == [0, 4, 1, 5, 2, 6, 3, 7]
    for j in range(2):
        for y in range(2):
            for x in range(2):
                assert nhwc.at(0, j, y, x) == t.at(0, j, y, x)


@pytest.mark.parametrize("shape", [(1, 3, 4, 5), (2, 8, 1, 7), (3, 1, 2, 2)])
def test_layout_round_trip_is_exact(shape):
    t = tensor_from_seed(shape, Layout.NCHW, 11)
    back = layout_convert(layout_convert(t, Layout.NHWC), Layout.NCHW)
    assert back.data.tobytes() == t.data.tobytes()


def test_single_channel_layouts_share_flat_data():
    t = tensor_from_seed((1, 1, 4, 6), Layout.NCHW, 3)
    assert np.array_equal(t.flat, layout_convert(t, Layout.NHWC).flat)


def test_convert_to_same_layout_returns_equal_tensor():
    t = tensor_from_seed((1, 2, 2, 2), Layout.NHWC, 1)
    assert layout_convert(t, Layout.NHWC) == t


def test_tensor_data_is_read_only():
    t = tensor_from_seed((1, 2, 2, 2), Layout.NCHW, 1)
    with pytest.raises(ValueError):
        t.data[0, 0, 0, 0] = 1.0


def test_max_abs_diff_cases():
    a = tensor_from_seed((1, 3, 4, 4), Layout.NCHW, 1)
    assert max_abs_diff(a, a) == 0.0
    shifted = Tensor(a.data + np.float32(0.5), a.layout)
    assert max_abs_diff(a, shifted) == pytest.approx(0.5, abs=1e-6)
    nhwc = tensor_from_seed((1, 3, 4, 4), Layout.NHWC, 1)
    assert max_abs_diff(nhwc, layout_convert(nhwc, Layout.NCHW)) == 0.0


def test_max_abs_diff_symmetric_and_triangle():
    a, b, c = (tensor_from_seed((2, 3, 5, 5), Layout.NCHW, s) for s in (1, 2, 3))
    assert max_abs_diff(a, b) == max_abs_diff(b, a)
    assert max_abs_diff(a, c) <= max_abs_diff(a, b) + max_abs_diff(b, c) + 1e-12


def test_max_abs_diff_shape_mismatch():
    with pytest.raises(ShapeError):
        max_abs_diff(tensor_from_seed((1, 2, 2, 2)), tensor_from_seed((1, 3, 2, 2)))
