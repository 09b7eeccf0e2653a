"""PatchGAN-style discriminator with hand-written backprop.

Valid (unpadded) strided convolutions, leaky-ReLU between layers, spectral
normalization with a persistent power-iteration vector, and Gaussian instance
noise on the input and on every hidden pre-activation while training.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kvfile
from .errors import InputTooSmall, MissingField, SchemaVersionMismatch
from .rng import STREAM_DISC_INIT, CounterRng
from .shaders import Tape

FORMAT_VERSION = 1
SIGMA_FLOOR = 1e-12
DEFAULT_CHANNELS = (64, 128, 256)
DEFAULT_STRIDES = (2, 2, 2, 1)


@dataclass
class ConvLayer:
    weights: np.ndarray  # (out, in, k, k)
    bias: np.ndarray
    stride: int = 1
    sn_u: np.ndarray | None = None
    leaky_slope: float = 0.2

    @property
    def kernel(self) -> int:
        return self.weights.shape[-1]

    def matrix(self) -> np.ndarray:
        return self.weights.reshape(self.weights.shape[0], -1)


@dataclass
class DiscriminatorNet:
    layers: list[ConvLayer]
    instance_noise_sigma: float = 0.0
    spectral_norm: bool = True
    dtype: type = np.float32

    @property
    def receptive_field(self) -> int:
        rf = 1
        for layer in reversed(self.layers):
            rf = (rf - 1) * layer.stride + layer.kernel
        return rf

    def output_size(self, n: int) -> int:
        for layer in self.layers:
            n = (n - layer.kernel) // layer.stride + 1
        return n

    def n_params(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@dataclass
class DiscGrads:
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / max(float(np.linalg.norm(v)), SIGMA_FLOOR)


def make_discriminator(seed: int = 0, channels=DEFAULT_CHANNELS, strides=DEFAULT_STRIDES,
                       kernel: int = 4, in_channels: int = 3, leaky_slope: float = 0.2,
                       init_std: float = 0.02, dtype=np.float32) -> DiscriminatorNet:
    widths = [in_channels, *channels, 1]
    if len(strides) != len(widths) - 1:
        raise ValueError("need one stride per layer")
    rng = CounterRng(seed, STREAM_DISC_INIT)
    layers = []
    for cin, cout, stride in zip(widths[:-1], widths[1:], strides):
        w = init_std * rng.normal(cout * cin * kernel * kernel).reshape(cout, cin, kernel, kernel)
        u = _unit(rng.normal(cout))
        layers.append(ConvLayer(w, np.zeros(cout), stride, u, leaky_slope))
    return DiscriminatorNet(layers, dtype=dtype)


def spectral_normalize(layer: ConvLayer):
    """One power-iteration step; returns ``(W / sigma, updated u, sigma)``."""
    w = layer.matrix()
    u = layer.sn_u if layer.sn_u is not None else _unit(np.ones(w.shape[0]))
    v = _unit(w.T @ u)
    u_new = _unit(w @ v)
    sigma = max(float(u_new @ w @ v), SIGMA_FLOOR)
    return layer.weights / sigma, u_new, sigma


def update_spectral_norm(net: DiscriminatorNet) -> None:
    """Advance every layer's persistent ``u`` by one power iteration."""
    for layer in net.layers:
        _, layer.sn_u, _ = spectral_normalize(layer)


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    n, c, _, _ = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k), ho, wo


def _col2im(cols: np.ndarray, shape, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, h, w = shape
    g = np.zeros(shape, dtype=cols.dtype)
    cols = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for i in range(k):
        for j in range(k):
            g[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return g


def _as_batch(img, dtype) -> np.ndarray:
    x = np.asarray(img)
    if x.ndim == 3:
        x = x[None]
    return np.ascontiguousarray(x, dtype=dtype)


def disc_fwd(img, net: DiscriminatorNet, rng: CounterRng | None = None, train_mode: bool = False,
             sigmas=None):
    """Patch logits ``(N, 1, h, w)`` for a ``(C, H, W)`` image or ``(N, C, H, W)`` batch.

    ``sigmas`` pins the spectral-norm scale per layer (used to check gradients
    with the estimate held fixed).
    """
    x = _as_batch(img, net.dtype)
    rf = net.receptive_field
    if min(x.shape[2:]) < rf:
        raise InputTooSmall(f"input {x.shape[2]}x{x.shape[3]} smaller than receptive field {rf}")
    noise_sigma = net.instance_noise_sigma if train_mode else 0.0
    if noise_sigma > 0.0 and rng is None:
        raise ValueError("instance noise needs an rng")

    def noisy(a):
        if noise_sigma <= 0.0:
            return a
        return a + (noise_sigma * rng.normal(a.size)).reshape(a.shape).astype(a.dtype)

    x = noisy(x)
    cache = []
    last = len(net.layers) - 1
    for idx, layer in enumerate(net.layers):
        if sigmas is not None:
            sigma = float(sigmas[idx])
        elif net.spectral_norm:
            _, _, sigma = spectral_normalize(layer)
        else:
            sigma = 1.0
        w = (layer.matrix() / sigma).astype(net.dtype)
        k, s = layer.kernel, layer.stride
        cols, ho, wo = _im2col(x, k, s)
        z = cols @ w.T + layer.bias.astype(net.dtype)
        n = x.shape[0]
        z = z.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)
        if idx == last:
            a = z
        else:
            z = noisy(z)
            a = np.where(z > 0, z, z * net.dtype(layer.leaky_slope))
        cache.append(dict(x_shape=x.shape, cols=cols, w=w, z=z, sigma=sigma, ho=ho, wo=wo))
        x = np.ascontiguousarray(a)
    tape = Tape(cache=cache, net=net, sigmas=[c["sigma"] for c in cache])
    return x, tape


def disc_bwd(grad_logits, tape: Tape):
    """Gradients for every raw weight and bias, and for the input batch.

    The spectral-norm scale is treated as a constant.
    """
    t = tape.consume()
    net = t.net
    g = np.asarray(grad_logits, dtype=net.dtype)
    if g.ndim == 3:
        g = g[None]
    grads = DiscGrads([None] * len(net.layers), [None] * len(net.layers))
    last = len(net.layers) - 1
    for idx in range(last, -1, -1):
        layer, c = net.layers[idx], t.cache[idx]
        if idx != last:
            g = np.where(c["z"] > 0, g, g * net.dtype(layer.leaky_slope))
        n = g.shape[0]
        gz = g.transpose(0, 2, 3, 1).reshape(n * c["ho"] * c["wo"], -1)
        gw = (gz.T @ c["cols"]) / c["sigma"]
        grads.weights[idx] = gw.reshape(layer.weights.shape).astype(np.float64)
        grads.biases[idx] = gz.sum(axis=0).astype(np.float64)
        gcols = gz @ c["w"]
        g = _col2im(gcols, c["x_shape"], layer.kernel, layer.stride, c["ho"], c["wo"])
    return grads, g


def operator_norm(matrix: np.ndarray, iters: int = 200, seed: int = 0) -> float:
    """Largest singular value by plain power iteration."""
    v = _unit(CounterRng(seed, 1).normal(matrix.shape[1]))
    for _ in range(iters):
        v = _unit(matrix.T @ (matrix @ v))
    return float(np.linalg.norm(matrix @ v))


# --- checkpoints ------------------------------------------------------------


def disc_items(net: DiscriminatorNet):
    yield "format_version", FORMAT_VERSION
    yield "n_layers", len(net.layers)
    yield "instance_noise_sigma", float(net.instance_noise_sigma)
    yield "spectral_norm", bool(net.spectral_norm)
    for i, layer in enumerate(net.layers):
        yield f"layer{i}.shape", " ".join(str(d) for d in layer.weights.shape)
        yield f"layer{i}.stride", int(layer.stride)
        yield f"layer{i}.leaky_slope", float(layer.leaky_slope)
        yield f"layer{i}.weights", np.asarray(layer.weights, dtype=np.float64)
        yield f"layer{i}.bias", np.asarray(layer.bias, dtype=np.float64)
        yield f"layer{i}.sn_u", np.asarray(layer.sn_u, dtype=np.float64)


def save_discriminator(net: DiscriminatorNet, path) -> None:
    kvfile.write(path, disc_items(net))


def _floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split()], dtype=np.float64)


def load_discriminator(path, dtype=np.float32) -> DiscriminatorNet:
    doc = kvfile.read(path)
    try:
        version = int(doc["format_version"])
        if version != FORMAT_VERSION:
            raise SchemaVersionMismatch(f"format_version {version}, expected {FORMAT_VERSION}")
        layers = []
        for i in range(int(doc["n_layers"])):
            shape = tuple(int(d) for d in doc[f"layer{i}.shape"].split())
            layers.append(
                ConvLayer(
                    _floats(doc[f"layer{i}.weights"]).reshape(shape),
                    _floats(doc[f"layer{i}.bias"]),
                    int(doc[f"layer{i}.stride"]),
                    _floats(doc[f"layer{i}.sn_u"]),
                    float(doc[f"layer{i}.leaky_slope"]),
                )
            )
        return DiscriminatorNet(
            layers,
            float(doc["instance_noise_sigma"]),
            doc["spectral_norm"] == "true",
            dtype,
        )
    except KeyError as exc:
        raise MissingField(str(exc)) from None
