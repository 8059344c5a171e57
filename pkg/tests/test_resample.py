import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistsr.imagecore import Image
from twistsr.resample import (
    DivisibilityError,
    ResizeSpec,
    bicubic_resize,
    cubic_kernel,
    degrade,
    upscale,
)

# Output of resizing [0, 10] to length 4 with a = -0.5, hand-evaluated tap by tap.
GOLDEN_0_10_X2 = [-0.703125, 2.03125, 7.96875, 10.703125]


def _reference_resize_1d(x, n_out, a=-0.5):
    n_in = len(x)
    out = []
    for d in range(n_out):
        src = (d + 0.5) * n_in / n_out - 0.5
        base = int(np.floor(src))
        acc = 0.0
        for j in range(base - 1, base + 3):
            t = abs(src - j)
            if t <= 1:
                k = (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
            elif t < 2:
                k = a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
            else:
                k = 0.0
            acc += k * x[min(max(j, 0), n_in - 1)]
        out.append(acc)
    return np.array(out)


def test_kernel_taps():
    assert cubic_kernel(0.0) == 1.0
    assert np.allclose(cubic_kernel(np.array([1.0, -1.0, 2.0, -2.0, 2.5])), 0.0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.999999))
def test_partition_of_unity(t):
    taps = cubic_kernel(np.array([t + 1, t, t - 1, t - 2]))
    assert abs(taps.sum() - 1.0) < 1e-12


def test_golden_1d_upscale():
    row = np.array([[0.0, 10.0], [0.0, 10.0]])
    out = bicubic_resize(row, ResizeSpec(2, 4))
    assert np.allclose(out[0], GOLDEN_0_10_X2, atol=1e-12)
    assert np.allclose(out[0], _reference_resize_1d([0.0, 10.0], 4), atol=1e-12)


def test_matches_reference_loops(rng):
    p = rng.uniform(0, 255, (6, 9))
    out = bicubic_resize(p, ResizeSpec(11, 4))
    rows = np.stack([_reference_resize_1d(r, 4) for r in p])
    ref = np.stack([_reference_resize_1d(c, 11) for c in rows.T]).T
    assert np.allclose(out, ref, atol=1e-10)


def test_constant_and_identity(rng):
    assert np.allclose(bicubic_resize(np.full((5, 7), 7.0), ResizeSpec(13, 3)), 7.0, atol=1e-12)
    p = rng.uniform(0, 255, (6, 6))
    assert np.array_equal(bicubic_resize(p, ResizeSpec(6, 6)), p)


def test_degrade_sizes_and_constant():
    out = degrade(Image(np.full((256, 256), 42.0)), 2)
    assert out.shape == (1, 128, 128)
    assert np.allclose(out.data, 42.0, atol=1e-12)
    assert degrade(Image(np.zeros((3, 24, 24))), 3).shape == (3, 8, 8)


def test_degrade_divisibility():
    with pytest.raises(DivisibilityError, match="divisible by 6"):
        degrade(Image(np.zeros((30, 32))), 3)
    with pytest.raises(ValueError):
        degrade(Image(np.zeros((32, 32))), 5)


def test_ramp_round_trip():
    yy, xx = np.mgrid[:64, :64].astype(float)
    ramp = 1.5 * xx + 0.75 * yy + 3.0
    back = upscale(degrade(Image(ramp), 2), 2).plane()
    assert np.max(np.abs(back - ramp)[8:-8, 8:-8]) < 1e-6


def test_downsample_filter_taps():
    # halving samples midway between input pixels: taps (-1, 9, 9, -1) / 16
    x = np.zeros((2, 16))
    x[:, 8] = 16.0
    row = bicubic_resize(x, ResizeSpec(2, 8))[0]
    assert np.allclose(row, [0, 0, 0, -1, 9, 0, 0, 0], atol=1e-12)


def test_upscale_rgb():
    assert upscale(Image(np.zeros((3, 4, 5))), 3).shape == (3, 12, 15)


def test_spec_validation():
    with pytest.raises(ValueError):
        ResizeSpec(1, 4)
