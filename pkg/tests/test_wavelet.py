import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twistsr.wavelet import (
    SubbandSet,
    dwt1d,
    dwt2d,
    dwt2d_stacked,
    idwt1d,
    idwt2d,
    idwt2d_stacked,
)

R2 = np.sqrt(2.0)


@pytest.mark.parametrize("signal, approx, detail", [
    ([1, 1, 1, 1], [R2, R2], [0, 0]),
    ([1, 2, 3, 4], [3 / R2, 7 / R2], [-1 / R2, -1 / R2]),
    ([5, 3], [8 / R2], [2 / R2]),
])
def test_dwt1d_hand_values(signal, approx, detail):
    a, d = dwt1d(signal)
    assert np.allclose(a, approx, atol=1e-12, rtol=0)
    assert np.allclose(d, detail, atol=1e-12, rtol=0)


def test_idwt1d_hand_values():
    assert np.allclose(idwt1d([R2], [0]), [1, 1], atol=1e-12)
    assert np.allclose(idwt1d([8 / R2], [2 / R2]), [5, 3], atol=1e-12)
    assert np.allclose(idwt1d(*dwt1d([1, 2, 3, 4])), [1, 2, 3, 4], atol=1e-12)


def test_1d_errors():
    with pytest.raises(ValueError):
        dwt1d([1, 2, 3])
    with pytest.raises(ValueError):
        idwt1d([1, 2], [1])


def test_dwt2d_hand_values():
    b = dwt2d(np.ones((2, 2)))
    assert b.ll.tolist() == [[2.0]] or np.allclose(b.ll, 2.0, atol=1e-15)
    assert np.allclose([b.lh, b.hl, b.hh], 0.0, atol=1e-15)
    b = dwt2d(np.array([[1.0, 2.0], [3.0, 4.0]]))
    got = [b.ll.item(), b.lh.item(), b.hl.item(), b.hh.item()]
    assert np.allclose(got, [5, -1, -2, 0], atol=1e-12, rtol=0)


def test_dwt2d_row_pass_first():
    # non-separable-symmetric input distinguishes lh from hl
    b = dwt2d(np.array([[0.0, 2.0], [0.0, 2.0]]))  # horizontal variation only
    assert abs(b.lh.item()) > 0 and b.hl.item() == pytest.approx(0.0, abs=1e-15)


def test_idwt2d_hand_values():
    z = np.zeros((1, 1))
    assert np.allclose(idwt2d(SubbandSet(np.full((1, 1), 2.0), z, z, z)), 1.0, atol=1e-15)
    rec = idwt2d(SubbandSet(np.array([[5.0]]), np.array([[-1.0]]), np.array([[-2.0]]), z))
    assert np.allclose(rec, [[1, 2], [3, 4]], atol=1e-12)


def test_odd_plane_rejected():
    with pytest.raises(ValueError):
        dwt2d(np.zeros((3, 4)))


def test_mismatched_bands_rejected():
    with pytest.raises(ValueError):
        SubbandSet(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_random_plane_reconstruction(rng):
    p = rng.uniform(0, 255, (64, 64))
    assert np.max(np.abs(idwt2d(dwt2d(p)) - p)) < 1e-9


even = st.integers(1, 16).map(lambda n: 2 * n)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_perfect_reconstruction_and_energy(data):
    h, w = data.draw(even), data.draw(even)
    p = data.draw(arrays(np.float64, (h, w), elements=st.floats(0, 255)))
    b = dwt2d(p)
    assert np.max(np.abs(idwt2d(b) - p)) < 1e-9
    e = np.sum(p * p)
    eb = sum(float(np.sum(x * x)) for x in b)
    assert abs(e - eb) <= 1e-9 * max(e, 1.0)


def test_stacked_matches_per_plane(rng):
    planes = rng.normal(size=(3, 2, 8, 6))
    st_ = dwt2d_stacked(planes)
    assert st_.shape == (3, 2, 4, 4, 3)
    b = dwt2d(planes[1, 0])
    assert np.array_equal(st_[1, 0], np.stack(tuple(b)))
    assert np.allclose(idwt2d_stacked(st_), planes, atol=1e-12)


def test_dtypes():
    assert dwt2d(np.ones((4, 4), np.float32)).ll.dtype == np.float32
    assert dwt2d(np.ones((4, 4), np.uint8)).ll.dtype == np.float64
    assert dwt2d_stacked(np.ones((1, 4, 4), np.float32)).dtype == np.float32
