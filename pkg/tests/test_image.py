import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gas.errors import NegativeSample, OutOfBounds, UnsupportedFormat, ZeroDimension
from gas.image import (
    ColorSpace,
    ImageBuf,
    crop,
    downsample_half,
    downsample_half_adjoint,
    load_png,
    luma,
    save_png,
    to_gamma,
    to_linear,
    upsample_adjoint,
    upsample_to,
)


def test_load_two_pixel_rgb(tmp_path, png_writer):
    png_writer(tmp_path / "a.png", [[[255, 0, 0], [0, 255, 0]]])
    img = load_png(tmp_path / "a.png")
    assert img.color_space is ColorSpace.GAMMA
    assert (img.channels, img.height, img.width) == (3, 1, 2)
    np.testing.assert_array_equal(img.data[0], [[1, 0]])
    np.testing.assert_array_equal(img.data[1], [[0, 1]])
    np.testing.assert_array_equal(img.data[2], [[0, 0]])


def test_load_rgba_drops_alpha(tmp_path, png_writer):
    png_writer(tmp_path / "a.png", [[[10, 20, 30, 7]]], color_type=6)
    np.testing.assert_array_equal(load_png(tmp_path / "a.png").data.ravel(), np.array([10, 20, 30]) / 255)


def test_load_sixteen_bit(tmp_path, png_writer):
    png_writer(tmp_path / "a.png", [[[32768, 0, 65535]]], bit_depth=16)
    img = load_png(tmp_path / "a.png")
    assert img.data[0, 0, 0] == 32768 / 65535
    assert abs(img.data[0, 0, 0] - 0.50001) < 1e-5
    assert img.data[2, 0, 0] == 1.0


def test_grayscale_is_rejected(tmp_path, png_writer):
    png_writer(tmp_path / "g.png", np.zeros((2, 2, 1), int), color_type=0)
    with pytest.raises(UnsupportedFormat):
        load_png(tmp_path / "g.png")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_png(tmp_path / "nope.png")


def test_save_clamps_and_rounds(tmp_path):
    img = np.zeros((3, 1, 3))
    img[0] = [1.7, 0.5, -0.2]
    save_png(img, tmp_path / "o.png")
    back = np.round(load_png(tmp_path / "o.png").data * 255).astype(int)
    assert list(back[0, 0]) == [255, 128, 0]


def test_save_load_round_trip(tmp_path):
    q = np.random.default_rng(0).integers(0, 256, (3, 5, 7)) / 255.0
    save_png(ImageBuf(q), tmp_path / "q.png")
    np.testing.assert_array_equal(load_png(tmp_path / "q.png").data, q)


def test_power_law_fixed_points_and_value():
    v = np.array([[[0.0, 1.0, 0.5]]])
    lin = to_linear(v, 2.2)
    assert lin[0, 0, 0] == 0.0 and lin[0, 0, 1] == 1.0
    assert abs(lin[0, 0, 2] - 0.21764) < 1e-5
    g = to_gamma(v, 2.2)
    assert g[0, 0, 0] == 0.0 and g[0, 0, 1] == 1.0


def test_power_law_tags_and_negative():
    img = ImageBuf(np.full((3, 2, 2), 0.3))
    lin = to_linear(img)
    assert lin.color_space is ColorSpace.LINEAR
    assert to_gamma(lin).color_space is ColorSpace.GAMMA
    with pytest.raises(NegativeSample):
        to_linear(np.full((3, 1, 1), -0.1))
    with pytest.raises(NegativeSample):
        to_gamma(np.full((3, 1, 1), -0.1))


@given(st.integers(0, 2**31))
def test_gamma_inverse_pair(seed):
    x = np.random.default_rng(seed).random((3, 6, 5))
    assert np.max(np.abs(to_gamma(to_linear(x)) - x)) <= 1e-6


def test_luma_readouts():
    assert luma(np.ones((3, 1, 1)))[0, 0, 0] == pytest.approx(1.0, abs=1e-15)
    assert luma(np.array([1.0, 0, 0]).reshape(3, 1, 1))[0, 0, 0] == 0.2126


def test_luma_matches_pixel_loop(rand_image):
    x = rand_image(3, 4, 5)
    got = luma(x)
    assert got.shape == (1, 4, 5)
    for y in range(4):
        for xx in range(5):
            expect = 0.2126 * x[0, y, xx] + 0.7152 * x[1, y, xx] + 0.0722 * x[2, y, xx]
            assert got[0, y, xx] == pytest.approx(expect, abs=1e-15)


def _loop_downsample(x):
    c, h, w = x.shape
    out = np.zeros((c, (h + 1) // 2, (w + 1) // 2))
    for i in range(out.shape[1]):
        for j in range(out.shape[2]):
            block = x[:, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
            out[:, i, j] = block.reshape(c, -1).mean(axis=1)
    return out


def _loop_bilinear(x, w_out, h_out):
    c, h, w = x.shape
    out = np.zeros((c, h_out, w_out))
    for i in range(h_out):
        sy = min(max((i + 0.5) * h / h_out - 0.5, 0), h - 1)
        y0 = int(np.floor(sy))
        y1, fy = min(y0 + 1, h - 1), sy - y0
        for j in range(w_out):
            sx = min(max((j + 0.5) * w / w_out - 0.5, 0), w - 1)
            x0 = int(np.floor(sx))
            x1, fx = min(x0 + 1, w - 1), sx - x0
            out[:, i, j] = ((1 - fy) * ((1 - fx) * x[:, y0, x0] + fx * x[:, y0, x1])
                            + fy * ((1 - fx) * x[:, y1, x0] + fx * x[:, y1, x1]))
    return out


def test_constants_survive_resampling():
    c = np.full((3, 7, 9), 0.37)
    np.testing.assert_allclose(downsample_half(c), 0.37, atol=1e-15)
    np.testing.assert_allclose(upsample_to(c, 20, 13), 0.37, atol=1e-15)


def test_block_mean():
    x = np.array([[0.0, 0.0], [1.0, 1.0]])[None].repeat(3, 0)
    assert downsample_half(x)[0, 0, 0] == 0.5


@given(st.integers(1, 11), st.integers(1, 11), st.integers(0, 2**31))
def test_downsample_matches_loop(h, w, seed):
    x = np.random.default_rng(seed).random((3, h, w))
    np.testing.assert_allclose(downsample_half(x), _loop_downsample(x), atol=1e-14)


@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31))
def test_upsample_matches_loop(h, w, ho, wo, seed):
    x = np.random.default_rng(seed).random((3, h, w))
    np.testing.assert_allclose(upsample_to(x, wo, ho), _loop_bilinear(x, wo, ho), atol=1e-14)


def _dense(op, shape):
    # column j of the dense operator is op(e_j)
    n = int(np.prod(shape))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.asarray(op(e.reshape(shape))).ravel())
    return np.stack(cols, axis=1)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31))
def test_downsample_adjoint(h, w, seed):
    rng = np.random.default_rng(seed)
    x = rng.random((1, h, w))
    y = rng.random((1, (h + 1) // 2, (w + 1) // 2))
    lhs = np.sum(downsample_half(x) * y)
    rhs = np.sum(x * downsample_half_adjoint(y, h, w))
    assert abs(lhs - rhs) <= 1e-5
    # and the adjoint is literally the transpose of the dense matrix
    dense = _dense(downsample_half, (1, h, w))
    np.testing.assert_allclose(downsample_half_adjoint(y, h, w).ravel(), dense.T @ y.ravel(), atol=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31))
def test_upsample_adjoint(h, w, ho, wo, seed):
    rng = np.random.default_rng(seed)
    x = rng.random((1, h, w))
    y = rng.random((1, ho, wo))
    dense = _dense(lambda a: upsample_to(a, wo, ho), (1, h, w))
    np.testing.assert_allclose(upsample_adjoint(y, w, h).ravel(), dense.T @ y.ravel(), atol=1e-12)


@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_resampling_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.random((2, 3, 9, 6))
    for f in (downsample_half, lambda v: upsample_to(v, 11, 17)):
        np.testing.assert_allclose(f(a * x + b * y), a * f(x) + b * f(y), atol=1e-5)


def test_downsample_preserves_mean_even():
    x = np.random.default_rng(1).random((3, 8, 12))
    assert downsample_half(x).mean() == pytest.approx(x.mean(), abs=1e-15)


def test_zero_dimension():
    with pytest.raises(ZeroDimension):
        upsample_to(np.ones((3, 2, 2)), 0, 3)
    with pytest.raises(ZeroDimension):
        downsample_half(np.ones((3, 0, 2)))


def test_crop_cases():
    img = np.arange(6.0).reshape(3, 1, 2)
    np.testing.assert_array_equal(crop(img, 0, 0, 2, 1), img)
    np.testing.assert_array_equal(crop(img, 1, 0, 1, 1)[:, 0, 0], [1, 3, 5])
    with pytest.raises(OutOfBounds):
        crop(img, 1, 0, 2, 1)
    buf = crop(ImageBuf(img), 0, 0, 1, 1)
    assert isinstance(buf, ImageBuf)


@given(st.integers(0, 2**31), st.data())
def test_nested_crops_compose(seed, data):
    img = np.random.default_rng(seed).random((3, 12, 10))
    ax = data.draw(st.integers(0, 5))
    ay = data.draw(st.integers(0, 5))
    aw, ah = 10 - ax, 12 - ay
    bx = data.draw(st.integers(0, aw - 1))
    by = data.draw(st.integers(0, ah - 1))
    bw = data.draw(st.integers(1, aw - bx))
    bh = data.draw(st.integers(1, ah - by))
    inner = crop(crop(img, ax, ay, aw, ah), bx, by, bw, bh)
    np.testing.assert_array_equal(inner, crop(img, ax + bx, ay + by, bw, bh))
