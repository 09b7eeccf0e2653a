import numpy as np
import pytest
from _fd import central_diff, rel_err
from hypothesis import given
from hypothesis import strategies as st

from gas import kvfile
from gas.errors import MissingField, SchemaVersionMismatch, TapeReuse, UnknownField
from gas.evalkit import random_params
from gas.image import ImageBuf
from gas.pipeline import (
    N_PARAMS,
    PipelineParams,
    from_vector,
    load_params,
    param_names,
    pipeline_bwd,
    pipeline_fwd,
    save_params,
    to_vector,
)
from gas.rng import CounterRng
from gas.shaders import bloom_fwd, color_map_fwd, draw_noise, lens_blur_fwd, noise_fwd


def test_parameter_count():
    assert N_PARAMS == 42
    assert len(param_names()) == 42 == len(set(param_names()))
    assert to_vector(PipelineParams()).shape == (42,)
    assert 10 + 12 + 4 * 4 + 2 + 2 == 42


@given(st.integers(0, 2**31))
def test_vector_round_trip(seed):
    v = np.random.default_rng(seed).normal(size=42)
    v[:5] += 1.0  # keep kernels away from a zero sum
    v[5:10] += 1.0
    np.testing.assert_array_equal(to_vector(from_vector(v)), v)


def test_identity_init_near_identity():
    rng = np.random.default_rng(0)
    images = [rng.random((3, 32, 32)), np.ones((3, 16, 16)), np.zeros((3, 16, 16)), np.full((3, 8, 8), 0.5)]
    for img in images:
        out, _ = pipeline_fwd(img, PipelineParams(), train_mode=False, noise=False)
        assert np.max(np.abs(out.data - img)) <= 0.02


def test_deterministic_and_tapeless():
    img = np.random.default_rng(1).random((3, 16, 16))
    p = random_params(3)
    a, tape = pipeline_fwd(img, p, CounterRng(5, 6), train_mode=False)
    b, _ = pipeline_fwd(img, p, CounterRng(5, 6), train_mode=False)
    assert tape is None
    assert isinstance(a, ImageBuf)
    np.testing.assert_array_equal(a.data, b.data)


def test_matches_manual_composition():
    img = np.random.default_rng(2).random((3, 16, 16))
    p = random_params(4)
    draws = draw_noise(CounterRng(9, 9), img.shape)
    x, _ = lens_blur_fwd(img, p.lens)
    x, _ = color_map_fwd(x, p.color)
    x, _ = bloom_fwd(x, p.bloom_levels, p.bloom_tone)
    x, _ = noise_fwd(np.maximum(x, 0.0), p.noise, None, p.gamma, draws=draws)
    expect = np.clip(x, 0.0, 1.0)
    out, _ = pipeline_fwd(img, p, train_mode=False, draws=draws)
    np.testing.assert_array_equal(out.data, expect)


@pytest.mark.parametrize("seed", range(3))
def test_all_42_gradients_against_fd(seed):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.1, 0.9, (3, 32, 32))
    p = random_params(seed + 10)
    draws = draw_noise(CounterRng(seed, 1), img.shape)
    proj = rng.normal(size=img.shape)
    _, tape = pipeline_fwd(img, p, draws=draws)
    grads = pipeline_bwd(proj, tape)

    def loss(v):
        return np.sum(proj * pipeline_fwd(img, from_vector(v), train_mode=False, draws=draws)[0].data)

    fd = central_diff(loss, to_vector(p))
    err = rel_err(grads.vector(), fd)
    assert err.max() <= 1e-3, [n for n, e in zip(param_names(), err) if e > 1e-3]

    pix = rng.choice(img.size, 10, replace=False)
    fd_img = central_diff(lambda v: np.sum(proj * pipeline_fwd(v, p, train_mode=False, draws=draws)[0].data),
                          img, h=1e-5, idx=pix)
    assert rel_err(grads.image.ravel()[pix], fd_img).max() <= 1e-3


def test_identity_pipeline_passes_gradient_through_clamp():
    img = np.random.default_rng(3).uniform(0.05, 0.95, (3, 16, 16))
    img[0, 0, 0] = 1.0  # at the top of the clamp
    _, tape = pipeline_fwd(img, PipelineParams(), noise=False)
    g = np.random.default_rng(4).normal(size=img.shape)
    grads = pipeline_bwd(g, tape)
    inside = (img > 0) & (img < 1)
    np.testing.assert_allclose(grads.image[inside], g[inside], rtol=0.02, atol=1e-3)


def test_zero_grad_gives_zero_grads():
    img = np.random.default_rng(5).random((3, 16, 16))
    _, tape = pipeline_fwd(img, random_params(1), CounterRng(1, 1))
    grads = pipeline_bwd(np.zeros_like(img), tape)
    assert np.all(grads.vector() == 0.0)
    assert np.all(grads.image == 0.0)
    with pytest.raises(TapeReuse):
        pipeline_bwd(np.zeros_like(img), tape)


def test_save_load_save_is_byte_identical(tmp_path):
    p = random_params(7)
    save_params(p, tmp_path / "a.txt")
    q = load_params(tmp_path / "a.txt")
    np.testing.assert_array_equal(to_vector(q), to_vector(p))
    save_params(q, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_file_lists_exactly_the_parameters(tmp_path):
    save_params(PipelineParams(), tmp_path / "p.txt")
    keys = list(kvfile.read(tmp_path / "p.txt"))
    assert keys == ["format_version", "gamma", *param_names()]


def test_schema_errors(tmp_path):
    save_params(PipelineParams(), tmp_path / "p.txt")
    doc = kvfile.read(tmp_path / "p.txt")
    bad = dict(doc, format_version="999")
    kvfile.write(tmp_path / "v.txt", bad.items())
    with pytest.raises(SchemaVersionMismatch):
        load_params(tmp_path / "v.txt")
    missing = {k: v for k, v in doc.items() if k != "color.t[1]"}
    kvfile.write(tmp_path / "m.txt", missing.items())
    with pytest.raises(MissingField, match=r"color\.t\[1\]"):
        load_params(tmp_path / "m.txt")
    extra = dict(doc, **{"color.t[3]": "0"})
    kvfile.write(tmp_path / "e.txt", extra.items())
    with pytest.raises(UnknownField):
        load_params(tmp_path / "e.txt")


def test_hand_written_identity_file(tmp_path):
    lines = ["format_version = 1", "gamma = 2.2"]
    for axis in ("kx", "ky"):
        lines += [f"lens.{axis}[{i}] = {1 if i == 2 else 0}" for i in range(5)]
    lines += [f"color.m[{i}] = {1 if i in (0, 4, 8) else 0}" for i in range(9)]
    lines += [f"color.t[{i}] = 0" for i in range(3)]
    for lvl in range(4):
        lines += [f"bloom.level{lvl}.a = 1.5", f"bloom.level{lvl}.b_raw = 20",
                  f"bloom.level{lvl}.logvar_x = 0", f"bloom.level{lvl}.logvar_y = 0"]
    lines += ["bloom.tone.eps_raw = -5.3", "bloom.tone.s_raw = 0.5413248546129181",
              "noise.gamma_raw = -30", "noise.sigma_raw = -30"]
    (tmp_path / "h.txt").write_text("\n".join(lines) + "\n")
    p = load_params(tmp_path / "h.txt")
    img = np.random.default_rng(6).random((3, 24, 24))
    out, _ = pipeline_fwd(img, p, train_mode=False)
    assert np.max(np.abs(out.data - img)) <= 0.02
