"""Implicit image priors exposed through denoiser residuals.

A denoiser estimates the clean image behind a noisy observation; its
*residual* ``D(y) = denoise(y) - y`` is what the samplers consume, since for
an MMSE denoiser under Gaussian noise the residual is exactly the noise
variance times the score of the noisy-image density.  The Gaussian prior
case makes this identity exact and testable in closed form.
"""

from __future__ import annotations

import struct

import numpy as np

from .images import as_image


class Denoiser:
    """Interface: subclasses implement ``residual``; ``denoise`` derives from it."""

    def residual(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def denoise(self, y: np.ndarray) -> np.ndarray:
        y = as_image(y)
        return y + self.residual(y)


class IdentityDenoiser(Denoiser):
    """The trivial prior: the observation is already clean, residual 0."""

    def residual(self, y: np.ndarray) -> np.ndarray:
        return np.zeros_like(as_image(y))


class GaussianMMSEDenoiser(Denoiser):
    """Exact MMSE denoiser for a Gaussian prior N(mu, tau2 I) under noise N(0, sigma2 I).

    residual(y) = sigma2 / (tau2 + sigma2) * (mu - y), which equals sigma2
    times the score of N(y; mu, (tau2 + sigma2) I).  Serves as the module's
    analytically verifiable anchor.
    """

    def __init__(self, tau2: float, sigma2: float, mu: float | np.ndarray = 0.0):
        if tau2 <= 0 or sigma2 <= 0:
            raise ValueError("tau2 and sigma2 must be positive")
        self.tau2 = float(tau2)
        self.sigma2 = float(sigma2)
        self.mu = mu

    @property
    def shrinkage(self) -> float:
        return self.sigma2 / (self.tau2 + self.sigma2)

    def residual(self, y: np.ndarray) -> np.ndarray:
        y = as_image(y)
        return self.shrinkage * (np.asarray(self.mu, dtype=np.float64) - y)


# ---------------------------------------------------------------------------
# Bias-free CNN
# ---------------------------------------------------------------------------

def _conv2d_same(stack: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Multi-channel 2-D cross-correlation, zero padded to the input size.

    ``stack`` is (in_ch, H, W), ``weights`` is (out_ch, in_ch, kh, kw).
    Implemented as an im2col matmul; no bias term exists anywhere.
    """
    in_ch, h, w = stack.shape
    out_ch, wc, kh, kw = weights.shape
    if wc != in_ch:
        raise ValueError(f"weight expects {wc} input channels, got {in_ch}")
    ph, pw = kh // 2, kw // 2
    padded = np.zeros((in_ch, h + kh - 1, w + kw - 1))
    padded[:, ph:ph + h, pw:pw + w] = stack
    cols = np.empty((in_ch * kh * kw, h * w))
    row = 0
    for c in range(in_ch):
        for i in range(kh):
            for j in range(kw):
                cols[row] = padded[c, i:i + h, j:j + w].ravel()
                row += 1
    out = weights.reshape(out_ch, -1) @ cols
    return out.reshape(out_ch, h, w)


class BiasFreeCnn(Denoiser):
    """Stack of bias-free convolutions with ReLU between layers, last layer linear.

    The network maps a 1-channel image to the 1-channel residual.  With no
    additive bias anywhere the map is positively homogeneous: scaling the
    input by c > 0 scales the output by c, and the zero image maps to zero.
    This is what lets a single network adapt across noise levels.
    """

    def __init__(self, layers: list[np.ndarray]):
        if not layers:
            raise ValueError("network needs at least one layer")
        layers = [np.asarray(w, dtype=np.float64) for w in layers]
        for k, w in enumerate(layers):
            if w.ndim != 4:
                raise ValueError(f"layer {k} weights must be 4-D (out, in, kh, kw)")
        if layers[0].shape[1] != 1:
            raise ValueError(f"channel chain mismatch: first layer expects {layers[0].shape[1]} channels, input has 1")
        for k in range(1, len(layers)):
            if layers[k].shape[1] != layers[k - 1].shape[0]:
                raise ValueError(
                    f"channel chain mismatch: layer {k} expects {layers[k].shape[1]} channels, "
                    f"layer {k - 1} outputs {layers[k - 1].shape[0]}")
        if layers[-1].shape[0] != 1:
            raise ValueError(f"channel chain mismatch: last layer outputs {layers[-1].shape[0]} channels, need 1")
        self.layers = layers

    def residual(self, y: np.ndarray) -> np.ndarray:
        stack = as_image(y)[None, :, :]
        last = len(self.layers) - 1
        for k, w in enumerate(self.layers):
            stack = _conv2d_same(stack, w)
            if k < last:
                np.maximum(stack, 0.0, out=stack)
        return stack[0]


# ---------------------------------------------------------------------------
# Weight file format (BFC1)
# ---------------------------------------------------------------------------

_BFC_MAGIC = b"BFC1"
_BFC_HEADER = struct.Struct("<4sIBI")      # magic, version, residual flag, layer count
_BFC_LAYER = struct.Struct("<IIII")        # out_ch, in_ch, kh, kw


class WeightFileError(ValueError):
    """Malformed BFC1 weight file."""


def encode_weights(net: BiasFreeCnn) -> bytes:
    """Serialize a network (little-endian BFC1; flag 1 = outputs the residual)."""
    chunks = [_BFC_HEADER.pack(_BFC_MAGIC, 1, 1, len(net.layers))]
    for w in net.layers:
        chunks.append(_BFC_LAYER.pack(*w.shape))
        chunks.append(w.astype("<f4").tobytes())
    return b"".join(chunks)


def decode_weights(buf: bytes) -> BiasFreeCnn:
    """Parse BFC1 bytes, validating the channel chain and tensor sizes."""
    if len(buf) < _BFC_HEADER.size:
        raise WeightFileError("truncated BFC1 header")
    magic, version, res_flag, count = _BFC_HEADER.unpack_from(buf)
    if magic != _BFC_MAGIC:
        raise WeightFileError(f"bad magic {magic!r}")
    if version != 1:
        raise WeightFileError(f"unsupported BFC version {version}")
    if res_flag != 1:
        raise WeightFileError(f"unsupported residual-convention flag {res_flag}")
    if count == 0:
        raise WeightFileError("weight file declares zero layers")
    layers = []
    pos = _BFC_HEADER.size
    for k in range(count):
        if len(buf) < pos + _BFC_LAYER.size:
            raise WeightFileError(f"truncated layer {k} header")
        out_ch, in_ch, kh, kw = _BFC_LAYER.unpack_from(buf, pos)
        pos += _BFC_LAYER.size
        need = out_ch * in_ch * kh * kw * 4
        if len(buf) < pos + need:
            raise WeightFileError(f"truncated tensor data in layer {k}")
        w = np.frombuffer(buf, dtype="<f4", count=out_ch * in_ch * kh * kw, offset=pos)
        layers.append(w.reshape(out_ch, in_ch, kh, kw).astype(np.float64))
        pos += need
    try:
        return BiasFreeCnn(layers)
    except ValueError as exc:
        raise WeightFileError(str(exc)) from None


def save_weights(path, net: BiasFreeCnn) -> None:
    with open(path, "wb") as f:
        f.write(encode_weights(net))


def load_weights(path) -> BiasFreeCnn:
    with open(path, "rb") as f:
        return decode_weights(f.read())


# ---------------------------------------------------------------------------
# Constructors and the spec-string factory
# ---------------------------------------------------------------------------

def gaussian_blur_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian kernel."""
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-ax ** 2 / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def smoothing_cnn(strength: float = 0.5, size: int = 5, sigma: float = 1.2) -> BiasFreeCnn:
    """Single-layer network whose residual pulls each pixel toward a local blur.

    residual(y) = strength * (blur(y) - y), a linear (hence bias-free and
    homogeneous) denoising step.  Shipped as the package's runnable example
    of a CNN prior; generated, not trained.
    """
    if not 0 < strength <= 1:
        raise ValueError("strength must be in (0, 1]")
    kernel = strength * gaussian_blur_kernel(size, sigma)
    kernel[size // 2, size // 2] -= strength
    return BiasFreeCnn([kernel[None, None, :, :]])


def demo_cnn(seed: int = 0, depth: int = 8, channels: int = 32, ksize: int = 3) -> BiasFreeCnn:
    """Randomly initialized bias-free network (a test fixture, not trained).

    Weights are scaled down with depth so the forward pass stays bounded.
    """
    from .rng import RngStream

    rng = RngStream(seed, stream=0xC0)
    shapes = [(channels, 1)] + [(channels, channels)] * (depth - 2) + [(1, channels)]
    layers = []
    for out_ch, in_ch in shapes:
        fan_in = in_ch * ksize * ksize
        w = rng.standard_normal((out_ch, in_ch, ksize, ksize)) / np.sqrt(2.0 * fan_in)
        layers.append(w)
    return BiasFreeCnn(layers)


def from_spec(spec: str) -> Denoiser:
    """Build a denoiser from a compact string, e.g. ``gaussian:tau2=900``.

    Recognized forms::

        identity
        gaussian:tau2=900[,sigma2=625][,mu=0]
        smooth[:strength=0.5][,size=5][,sigma=1.2]
        cnn:weights=path/to/file.bfc
    """
    name, _, argstr = spec.partition(":")
    name = name.strip().lower()
    kwargs = {}
    if argstr:
        for part in argstr.split(","):
            key, eq, val = part.partition("=")
            if not eq:
                raise ValueError(f"bad denoiser argument {part!r} in {spec!r}")
            kwargs[key.strip()] = val.strip()
    def done(instance):
        if kwargs:
            raise ValueError(f"unknown arguments for {name!r} denoiser: {sorted(kwargs)}")
        return instance

    if name == "identity":
        return done(IdentityDenoiser())
    if name == "gaussian":
        return done(GaussianMMSEDenoiser(tau2=float(kwargs.pop("tau2", 900.0)),
                                         sigma2=float(kwargs.pop("sigma2", 625.0)),
                                         mu=float(kwargs.pop("mu", 0.0))))
    if name == "smooth":
        return done(smoothing_cnn(strength=float(kwargs.pop("strength", 0.5)),
                                  size=int(kwargs.pop("size", 5)),
                                  sigma=float(kwargs.pop("sigma", 1.2))))
    if name == "cnn":
        path = kwargs.pop("weights", None)
        if path is None:
            raise ValueError("cnn denoiser needs weights=<path>")
        return done(load_weights(path))
    raise ValueError(f"unknown denoiser {name!r}")
