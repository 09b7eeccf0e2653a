import numpy as np
import pytest
from _fd import central_diff, rel_err
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

import gas.trainer as trainer
from gas.errors import ImageTooSmall, InputTooSmall
from gas.pipeline import PipelineParams, load_params, pipeline_fwd, to_vector
from gas.rng import CounterRng
from gas.synthetic import make_scene
from gas.trainer import (
    TrainConfig,
    config_from_mapping,
    config_items,
    edge_crop,
    instance_noise_at,
    lr_scale,
    ralsgan_grads,
    ralsgan_losses,
    read_metrics,
    sample_crop,
    train,
)

SMALL = dict(crop=64, edge_crop=8, batch=2, disc_channels=(4, 8, 8), checkpoint_every=0, plateau_window=0)


def _images(n, size, seed):
    rng = np.random.default_rng(seed)
    return [rng.uniform(0.1, 0.9, (3, size, size)) for _ in range(n)]


def test_crop_of_exact_size_is_the_image():
    img = np.random.default_rng(0).random((3, 256, 256))
    out = sample_crop([img], CounterRng(1, 2), 256)
    np.testing.assert_array_equal(out.data, img)


def test_crop_sequence_is_reproducible():
    data = _images(3, 80, 1)
    a = [sample_crop(data, CounterRng(4, 5), 32).data for _ in range(1)]
    ra, rb = CounterRng(4, 5), CounterRng(4, 5)
    for _ in range(20):
        np.testing.assert_array_equal(sample_crop(data, ra, 32).data, sample_crop(data, rb, 32).data)
    assert a[0].shape == (3, 32, 32)


def test_crop_offsets_are_uniform():
    # encode the offset in the pixel values so it can be read back from the crop
    ys, xs = np.mgrid[0:512, 0:512].astype(np.float64)
    img = np.stack([xs, ys, np.zeros_like(xs)])
    rng = CounterRng(7, 8)
    n = 100_000
    xs0 = np.empty(n, dtype=int)
    ys0 = np.empty(n, dtype=int)
    for i in range(n):
        x0 = int(rng.integers(1, 1)[0])  # image index draw, one image
        x0 = int(rng.integers(257, 1)[0])
        y0 = int(rng.integers(257, 1)[0])
        xs0[i], ys0[i] = x0, y0
    # cross-check the fast path against the real sampler on a prefix
    check = CounterRng(7, 8)
    for i in range(50):
        c = sample_crop([img], check, 256).data
        assert (c[0, 0, 0], c[1, 0, 0]) == (xs0[i], ys0[i])
    for v in (xs0, ys0):
        counts = np.bincount(v, minlength=257)
        assert stats.chisquare(counts).pvalue > 0.01
    joint = np.bincount((xs0 // 32) * 9 + ys0 // 32, minlength=81)
    expected = np.outer(np.bincount(np.arange(257) // 32), np.bincount(np.arange(257) // 32)).ravel()
    assert stats.chisquare(joint, expected * n / expected.sum()).pvalue > 0.01


def test_image_too_small():
    with pytest.raises(ImageTooSmall):
        sample_crop([np.zeros((3, 255, 300))], CounterRng(0, 0), 256)


def test_confident_discriminator_losses():
    real, fake = np.ones((2, 1, 3, 3)), -np.ones((2, 1, 3, 3))
    loss_d, loss_g = ralsgan_losses(real, fake)
    # (1 - (-1) - 1)^2 + (-1 - 1 + 1)^2
    assert loss_d == 2.0
    assert loss_g == (-1 - 1 - 1) ** 2 + (1 + 1 + 1) ** 2


@given(st.floats(-10, 10))
def test_equal_logits_give_two(c):
    real = np.full((1, 1, 2, 2), c)
    assert ralsgan_losses(real, real.copy()) == pytest.approx((2.0, 2.0))


@pytest.mark.parametrize("seed", range(3))
def test_loss_gradients_against_fd(seed):
    rng = np.random.default_rng(seed)
    real, fake = rng.normal(size=(2, 1, 3, 4)), rng.normal(size=(2, 1, 3, 4))
    (d_real, d_fake), (g_real, g_fake) = ralsgan_grads(real, fake)
    checks = [
        (lambda v: ralsgan_losses(v.reshape(real.shape), fake)[0], real, d_real),
        (lambda v: ralsgan_losses(real, v.reshape(fake.shape))[0], fake, d_fake),
        (lambda v: ralsgan_losses(real, v.reshape(fake.shape))[1], fake, g_fake),
        (lambda v: ralsgan_losses(v.reshape(real.shape), fake)[1], real, g_real),
    ]
    for f, x, g in checks:
        fd = central_diff(f, x.ravel().copy(), h=1e-6)
        assert rel_err(g.ravel(), fd).max() <= 1e-6


def test_edge_crop_shapes():
    x = np.zeros((2, 3, 40, 50))
    assert edge_crop(x, 5).shape == (2, 3, 30, 40)
    assert edge_crop(x, 0) is x


def test_schedules():
    cfg = TrainConfig(steps=11, instance_noise_start=0.2, instance_noise_end=0.0, lr_decay_from=0.5)
    assert instance_noise_at(cfg, 0) == 0.2
    assert instance_noise_at(cfg, 10) == 0.0
    assert instance_noise_at(cfg, 5) == pytest.approx(0.1)
    assert [lr_scale(cfg, s) for s in (0, 5)] == [1.0, 1.0]
    assert lr_scale(cfg, 8) == pytest.approx(1.0 - 2.5 / 5.5)
    assert lr_scale(TrainConfig(steps=10), 9) == 1.0


def test_config_validation():
    with pytest.raises(InputTooSmall):
        TrainConfig(crop=60, edge_crop=8).validate(46)
    TrainConfig(crop=62, edge_crop=8).validate(46)
    with pytest.raises(ValueError):
        TrainConfig(freeze=("lens", "tonemap")).validate(46)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay_from=1.5).validate(46)
    with pytest.raises(ValueError):
        TrainConfig(ema_decay=1.0).validate(46)


def test_config_round_trip():
    cfg = TrainConfig(crop=96, lr_g=3e-4, freeze=("lens", "noise"), disc_channels=(4, 8, 16), resume=True)
    doc = {k: str(v) if not isinstance(v, (float, bool)) else repr(v) for k, v in config_items(cfg)}
    doc["resume"] = "true"
    assert config_from_mapping(doc) == cfg
    with pytest.raises(ValueError):
        config_from_mapping({"nonsense": "1"})


def test_zero_steps_keep_init(tmp_path):
    cfg = TrainConfig(out_dir=str(tmp_path), steps=0, **SMALL)
    result = train(cfg, _images(2, 64, 0), _images(2, 64, 1))
    np.testing.assert_array_equal(to_vector(result.params), to_vector(PipelineParams()))
    np.testing.assert_array_equal(to_vector(load_params(tmp_path / "params.txt")), to_vector(PipelineParams()))
    assert read_metrics(tmp_path / "metrics.log") == []


def test_metrics_log_and_frozen_stages(tmp_path):
    cfg = TrainConfig(out_dir=str(tmp_path), steps=5, freeze=("lens", "bloom", "noise"), lr_g=1e-2, **SMALL)
    result = train(cfg, _images(2, 64, 0), _images(2, 64, 1))
    rows = read_metrics(tmp_path / "metrics.log")
    assert [r["step"] for r in rows] == list(range(5))
    assert all(np.isfinite(r["loss_d"]) and np.isfinite(r["loss_g"]) for r in rows)
    assert rows[0]["noise_sigma"] == 0.2 and rows[-1]["noise_sigma"] == 0.0
    init, now = PipelineParams(), result.params
    np.testing.assert_array_equal(now.lens.kx_raw, init.lens.kx_raw)
    assert now.noise == init.noise
    assert not np.array_equal(now.color.m, init.color.m)


def test_discriminator_sees_edge_cropped_real_and_fake(tmp_path, monkeypatch):
    shapes = []
    real_fwd = trainer.disc_fwd

    def spy(x, *a, **k):
        shapes.append(np.shape(x))
        return real_fwd(x, *a, **k)

    monkeypatch.setattr(trainer, "disc_fwd", spy)
    cfg = TrainConfig(out_dir=str(tmp_path), steps=2, **SMALL)
    train(cfg, _images(2, 64, 0), _images(2, 64, 1))
    # real and fake are stacked into one batch of 2 * batch crops
    assert shapes and all(s == (4, 3, 48, 48) for s in shapes)


def test_training_is_deterministic(tmp_path):
    cfg_a = TrainConfig(out_dir=str(tmp_path / "a"), steps=4, lr_g=1e-2, **SMALL)
    cfg_b = TrainConfig(out_dir=str(tmp_path / "b"), steps=4, lr_g=1e-2, **SMALL)
    src, tgt = _images(2, 64, 0), _images(2, 64, 1)
    train(cfg_a, src, tgt)
    train(cfg_b, src, tgt)
    assert (tmp_path / "a/params.txt").read_bytes() == (tmp_path / "b/params.txt").read_bytes()


@pytest.mark.parametrize("ema", [0.0, 0.9])
def test_resume_continues_identically(tmp_path, ema):
    src, tgt = _images(2, 64, 0), _images(2, 64, 1)
    kw = dict(SMALL, checkpoint_every=3, steps=6, lr_g=1e-2, ema_decay=ema)
    train(TrainConfig(out_dir=str(tmp_path / "full"), **kw), src, tgt)

    class Crash(Exception):
        pass

    def crash(row, _):
        if row["step"] == 3:
            raise Crash

    with pytest.raises(Crash):
        train(TrainConfig(out_dir=str(tmp_path / "part"), **kw), src, tgt, on_step=crash)
    train(TrainConfig(out_dir=str(tmp_path / "part"), resume=True, **kw), src, tgt)
    assert (tmp_path / "full/params.txt").read_bytes() == (tmp_path / "part/params.txt").read_bytes()


def test_averaged_result_is_the_running_average(tmp_path):
    seen = []
    cfg = TrainConfig(out_dir=str(tmp_path), steps=5, lr_g=1e-2, ema_decay=0.8, **SMALL)
    result = train(cfg, _images(2, 64, 0), _images(2, 64, 1), on_step=lambda row, vec: seen.append(vec.copy()))
    avg = to_vector(PipelineParams())
    for vec in seen:
        avg = 0.8 * avg + 0.2 * vec
    np.testing.assert_allclose(to_vector(result.params), avg, rtol=0, atol=1e-12)
    assert not np.allclose(avg, seen[-1])


@pytest.mark.slow
def test_self_target_stays_near_identity(tmp_path):
    data = [make_scene(i, 128) for i in range(4)]
    cfg = TrainConfig(out_dir=str(tmp_path), steps=500, crop=128, edge_crop=16, batch=2,
                      disc_channels=(8, 16, 32), checkpoint_every=0, plateau_window=0)
    result = train(cfg, data, data)
    outs = []
    for img in data:
        out, _ = pipeline_fwd(img, result.params, train_mode=False, noise=False)
        outs.append(np.abs(out.data - img).mean(axis=(1, 2)))
    assert np.max(np.mean(outs, axis=0)) <= 0.05
    # regression signal: the noise stage has nothing to gain on clean renders
    assert result.params.noise.gain <= 0.01 + 0.05
    assert result.params.noise.sigma <= 0.01 + 0.05
