"""Unpaired adversarial training of the shader pipeline against a patch discriminator."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kvfile
from .discriminator import (
    DEFAULT_CHANNELS,
    DiscriminatorNet,
    disc_bwd,
    disc_fwd,
    load_discriminator,
    make_discriminator,
    save_discriminator,
    update_spectral_norm,
)
from .errors import ImageTooSmall, InputTooSmall, NanGradient, TrainingHalted
from .image import ImageBuf, crop as crop_image, load_png
from .optim import AdamState, adam_step
from .pipeline import (
    STAGES,
    PipelineParams,
    from_vector,
    load_params,
    param_names,
    pipeline_bwd,
    pipeline_fwd,
    save_params,
    stage_of,
    to_vector,
)
from .rng import STREAM_CROPS, STREAM_DISC_NOISE, STREAM_PIPELINE_NOISE, CounterRng

log = logging.getLogger(__name__)

METRICS_HEADER = "# step loss_d loss_g noise_sigma"


@dataclass
class TrainConfig:
    source_dir: str = ""
    target_dir: str = ""
    out_dir: str = "run"
    crop: int = 256
    edge_crop: int = 16
    batch: int = 4
    steps: int = 1000
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay_from: float = 1.0
    ema_decay: float = 0.0
    instance_noise_start: float = 0.2
    instance_noise_end: float = 0.0
    seed: int = 0
    checkpoint_every: int = 500
    gamma: float = 2.2
    disc_channels: tuple = DEFAULT_CHANNELS
    freeze: tuple = ()
    plateau_window: int = 500
    plateau_tol: float = 0.01
    resume: bool = False

    def validate(self, receptive_field: int) -> None:
        unknown = set(self.freeze) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stages to freeze: {sorted(unknown)}")
        inner = self.crop - 2 * self.edge_crop
        if inner < receptive_field:
            raise InputTooSmall(
                f"crop {self.crop} minus 2x edge crop {self.edge_crop} is {inner}, "
                f"below the discriminator receptive field {receptive_field}"
            )
        if not 0.0 <= self.lr_decay_from <= 1.0:
            raise ValueError("lr_decay_from must lie in [0, 1]")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")
        if self.batch < 1 or self.steps < 0:
            raise ValueError("batch must be >= 1 and steps >= 0")


_TUPLE_FIELDS = {"disc_channels": int, "freeze": str}


def config_items(cfg: TrainConfig):
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _TUPLE_FIELDS:
            value = " ".join(str(v) for v in value)
        yield f.name, value


def config_from_mapping(doc: dict[str, str], base: TrainConfig | None = None) -> TrainConfig:
    cfg = base or TrainConfig()
    known = {f.name: f for f in fields(TrainConfig)}
    for key, text in doc.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if key in _TUPLE_FIELDS:
            value = tuple(_TUPLE_FIELDS[key](v) for v in text.replace(",", " ").split())
        elif isinstance(current, bool):
            value = text.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(text)
        elif isinstance(current, float):
            value = float(text)
        else:
            value = text
        setattr(cfg, key, value)
    return cfg


def load_config(path) -> TrainConfig:
    return config_from_mapping(kvfile.read(path))


def load_dataset(directory) -> list[np.ndarray]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG files in {directory}")
    return [load_png(p).data.astype(np.float32) for p in paths]


def sample_crop(dataset, rng: CounterRng, crop: int) -> ImageBuf:
    """Uniform image index and uniform top-left offset."""
    idx = int(rng.integers(len(dataset), 1)[0])
    img = np.asarray(dataset[idx])
    _, h, w = img.shape
    if h < crop or w < crop:
        raise ImageTooSmall(f"image {idx} is {w}x{h}, need at least {crop}x{crop}")
    x0 = int(rng.integers(w - crop + 1, 1)[0])
    y0 = int(rng.integers(h - crop + 1, 1)[0])
    return ImageBuf(crop_image(img, x0, y0, crop, crop).astype(np.float64))


def ralsgan_losses(real_logits, fake_logits) -> tuple[float, float]:
    """Relativistic average least-squares losses ``(loss_d, loss_g)``."""
    real = np.asarray(real_logits, dtype=np.float64)
    fake = np.asarray(fake_logits, dtype=np.float64)
    r_bar, f_bar = real.mean(), fake.mean()
    loss_d = np.mean((real - f_bar - 1.0) ** 2) + np.mean((fake - r_bar + 1.0) ** 2)
    loss_g = np.mean((fake - r_bar - 1.0) ** 2) + np.mean((real - f_bar + 1.0) ** 2)
    return float(loss_d), float(loss_g)


def ralsgan_grads(real_logits, fake_logits):
    """Gradients of both losses w.r.t. the logits.

    Returns ``((d_real, d_fake), (g_real, g_fake))`` for ``loss_d`` and ``loss_g``.
    """
    real = np.asarray(real_logits, dtype=np.float64)
    fake = np.asarray(fake_logits, dtype=np.float64)
    nr, nf = real.size, fake.size
    r_bar, f_bar = real.mean(), fake.mean()
    a = real - f_bar - 1.0
    b = fake - r_bar + 1.0
    c = fake - r_bar - 1.0
    e = real - f_bar + 1.0
    d_real = 2.0 * (a - b.mean()) / nr
    d_fake = 2.0 * (b - a.mean()) / nf
    g_fake = 2.0 * (c - e.mean()) / nf
    g_real = 2.0 * (e - c.mean()) / nr
    return (d_real, d_fake), (g_real, g_fake)


def edge_crop(batch: np.ndarray, margin: int) -> np.ndarray:
    if margin == 0:
        return batch
    return batch[..., margin:-margin, margin:-margin]


def _uncrop(grad: np.ndarray, margin: int) -> np.ndarray:
    if margin == 0:
        return grad
    pad = [(0, 0)] * (grad.ndim - 2) + [(margin, margin), (margin, margin)]
    return np.pad(grad, pad)


def instance_noise_at(cfg: TrainConfig, step: int) -> float:
    if cfg.steps <= 1:
        return cfg.instance_noise_start
    frac = step / (cfg.steps - 1)
    return cfg.instance_noise_start + (cfg.instance_noise_end - cfg.instance_noise_start) * frac


def lr_scale(cfg: TrainConfig, step: int) -> float:
    """Constant until ``lr_decay_from * steps``, then linear down to zero at the last step."""
    start = cfg.lr_decay_from * cfg.steps
    if step < start or cfg.steps <= start:
        return 1.0
    return max(0.0, 1.0 - (step - start) / (cfg.steps - start))


def freeze_mask(freeze) -> np.ndarray:
    return np.array([0.0 if stage_of(n) in freeze else 1.0 for n in param_names()])


@dataclass
class TrainResult:
    params: PipelineParams
    disc: DiscriminatorNet
    metrics: list = field(default_factory=list)
    steps_run: int = 0
    stopped_early: bool = False


@dataclass
class _State:
    params_vec: np.ndarray
    disc: DiscriminatorNet
    adam_g: AdamState
    adam_d: AdamState
    crops: CounterRng
    pipe_noise: CounterRng
    disc_noise: CounterRng
    ema_vec: np.ndarray | None = None
    step: int = 0


def _disc_arrays(net: DiscriminatorNet):
    out = []
    for layer in net.layers:
        out += [layer.weights, layer.bias]
    return out


def _save_checkpoint(state: _State, directory: Path, gamma: float) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    save_params(from_vector(state.params_vec, gamma), directory / "pipeline.txt")
    save_discriminator(state.disc, directory / "discriminator.txt")
    items = [
        ("step", state.step),
        ("rng.crops", state.crops.counter),
        ("rng.pipeline_noise", state.pipe_noise.counter),
        ("rng.disc_noise", state.disc_noise.counter),
        ("adam_g.step", state.adam_g.step),
        ("adam_g.m", state.adam_g.m[0]),
        ("adam_g.v", state.adam_g.v[0]),
        ("adam_d.step", state.adam_d.step),
    ]
    if state.ema_vec is not None:
        items.append(("ema", state.ema_vec))
    for i, (m, v) in enumerate(zip(state.adam_d.m, state.adam_d.v)):
        items += [(f"adam_d.m{i}", m), (f"adam_d.v{i}", v)]
    kvfile.write(directory / "state.txt", items)


def _load_checkpoint(state: _State, directory: Path) -> None:
    state.params_vec = to_vector(load_params(directory / "pipeline.txt"))
    state.disc = load_discriminator(directory / "discriminator.txt", state.disc.dtype)
    doc = kvfile.read(directory / "state.txt")

    def arr(key, like):
        return np.array([float(x) for x in doc[key].split()]).reshape(np.shape(like))

    state.step = int(doc["step"])
    state.crops.counter = int(doc["rng.crops"])
    state.pipe_noise.counter = int(doc["rng.pipeline_noise"])
    state.disc_noise.counter = int(doc["rng.disc_noise"])
    state.adam_g.step = int(doc["adam_g.step"])
    state.adam_g.m[0] = arr("adam_g.m", state.params_vec)
    state.adam_g.v[0] = arr("adam_g.v", state.params_vec)
    if state.ema_vec is not None:
        state.ema_vec = arr("ema", state.params_vec)
    state.adam_d = AdamState.like(_disc_arrays(state.disc))
    state.adam_d.step = int(doc["adam_d.step"])
    for i, p in enumerate(_disc_arrays(state.disc)):
        state.adam_d.m[i] = arr(f"adam_d.m{i}", p)
        state.adam_d.v[i] = arr(f"adam_d.v{i}", p)


def _plateaued(losses, window: int, tol: float) -> bool:
    if window <= 0 or len(losses) < 2 * window:
        return False
    recent = float(np.mean(losses[-window:]))
    previous = float(np.mean(losses[-2 * window : -window]))
    return abs(recent - previous) <= tol * max(abs(previous), 1e-12)


def train(cfg: TrainConfig, source=None, target=None, init: PipelineParams | None = None,
          on_step=None) -> TrainResult:
    """Alternate one discriminator step and one pipeline step per iteration.

    ``source``/``target`` may be given as in-memory image lists; otherwise
    they are read from ``cfg.source_dir``/``cfg.target_dir``.  ``on_step`` is
    called as ``on_step(row, params_vector)`` after every step.
    """
    source = load_dataset(cfg.source_dir) if source is None else source
    target = load_dataset(cfg.target_dir) if target is None else target
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    params = init.copy() if init is not None else PipelineParams(gamma=cfg.gamma)
    disc = make_discriminator(cfg.seed, channels=tuple(cfg.disc_channels))
    cfg.validate(disc.receptive_field)
    vec = to_vector(params)
    state = _State(
        params_vec=vec,
        disc=disc,
        adam_g=AdamState.like([vec]),
        adam_d=AdamState.like(_disc_arrays(disc)),
        crops=CounterRng(cfg.seed, STREAM_CROPS),
        pipe_noise=CounterRng(cfg.seed, STREAM_PIPELINE_NOISE),
        disc_noise=CounterRng(cfg.seed, STREAM_DISC_NOISE),
        ema_vec=vec.copy() if cfg.ema_decay > 0 else None,
    )
    ckpt_dir = out_dir / "checkpoint"
    metrics_path = out_dir / "metrics.log"
    if cfg.resume and (ckpt_dir / "state.txt").exists():
        _load_checkpoint(state, ckpt_dir)
        log.info("resumed from %s at step %d", ckpt_dir, state.step)
    else:
        metrics_path.write_text(METRICS_HEADER + "\n", encoding="utf-8")

    mask = freeze_mask(cfg.freeze)
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    margin = cfg.edge_crop
    metrics = []
    loss_history = []
    stopped_early = False

    with open(metrics_path, "a", encoding="utf-8") as metrics_file:
        while state.step < cfg.steps:
            step = state.step
            last_good = (state.params_vec.copy(),)
            sigma = instance_noise_at(cfg, step)
            decay = lr_scale(cfg, step)
            state.disc.instance_noise_sigma = sigma
            params = from_vector(state.params_vec, cfg.gamma)

            src = [sample_crop(source, state.crops, cfg.crop).data for _ in range(cfg.batch)]
            real = np.stack([sample_crop(target, state.crops, cfg.crop).data for _ in range(cfg.batch)])
            fakes, tapes = [], []
            for img in src:
                out, tape = pipeline_fwd(img, params, state.pipe_noise, train_mode=True)
                fakes.append(out.data)
                tapes.append(tape)
            fake = np.stack(fakes)
            # the discriminator only ever sees edge-cropped inputs, real and fake alike
            d_in = np.concatenate([edge_crop(real, margin), edge_crop(fake, margin)])

            update_spectral_norm(state.disc)
            b = cfg.batch
            logits, d_tape = disc_fwd(d_in, state.disc, state.disc_noise, train_mode=True)
            loss_d, _ = ralsgan_losses(logits[:b], logits[b:])
            (d_real, d_fake), _ = ralsgan_grads(logits[:b], logits[b:])
            d_grads, _ = disc_bwd(np.concatenate([d_real, d_fake]), d_tape)
            grads_d = []
            for gw, gb in zip(d_grads.weights, d_grads.biases):
                grads_d += [gw, gb]
            try:
                adam_step(_disc_arrays(state.disc), grads_d, state.adam_d, cfg.lr_d * decay, betas, cfg.adam_eps)
            except NanGradient:
                loss_d = math.nan

            logits, g_tape = disc_fwd(d_in, state.disc, state.disc_noise, train_mode=True)
            _, loss_g = ralsgan_losses(logits[:b], logits[b:])
            _, (g_real, g_fake) = ralsgan_grads(logits[:b], logits[b:])
            _, g_input = disc_bwd(np.concatenate([g_real, g_fake]), g_tape)
            g_fake_img = _uncrop(g_input[b:].astype(np.float64), margin)
            g_vec = np.zeros_like(state.params_vec)
            for i, tape in enumerate(tapes):
                g_vec += pipeline_bwd(g_fake_img[i], tape).vector()

            if not (math.isfinite(loss_d) and math.isfinite(loss_g) and np.all(np.isfinite(g_vec))):
                state.params_vec = last_good[0]
                _save_checkpoint(state, ckpt_dir, cfg.gamma)
                raise TrainingHalted(f"non-finite loss at step {step}", ckpt_dir, step)
            adam_step([state.params_vec], [g_vec], state.adam_g, cfg.lr_g * decay, betas, cfg.adam_eps, mask=[mask])
            if state.ema_vec is not None:
                state.ema_vec *= cfg.ema_decay
                state.ema_vec += (1.0 - cfg.ema_decay) * state.params_vec

            state.step += 1
            row = dict(step=step, loss_d=loss_d, loss_g=loss_g, noise_sigma=sigma)
            metrics.append(row)
            metrics_file.write(f"{step} {loss_d:.9g} {loss_g:.9g} {sigma:.9g}\n")
            metrics_file.flush()
            loss_history.append(loss_g)
            if on_step is not None:
                on_step(row, state.params_vec)
            if cfg.checkpoint_every > 0 and state.step % cfg.checkpoint_every == 0:
                _save_checkpoint(state, ckpt_dir, cfg.gamma)
            if _plateaued(loss_history, cfg.plateau_window, cfg.plateau_tol):
                log.info("loss plateau at step %d, stopping", step)
                stopped_early = True
                break

    # with averaging on, the result is the running average rather than the last iterate
    final = from_vector(state.params_vec if state.ema_vec is None else state.ema_vec, cfg.gamma)
    save_params(final, out_dir / "params.txt")
    save_discriminator(state.disc, out_dir / "discriminator.txt")
    return TrainResult(final, state.disc, metrics, len(metrics), stopped_early)


def read_metrics(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        step, loss_d, loss_g, sigma = line.split()
        rows.append(dict(step=int(step), loss_d=float(loss_d), loss_g=float(loss_g), noise_sigma=float(sigma)))
    return rows
