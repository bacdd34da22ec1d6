"""Image-space metrics: PSNR, SSIM and an LPIPS-style feature distance."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, ExtractorFailure, TooSmall
from .render import Image

LUMA = np.array([0.299, 0.587, 0.114])
PSNR_INF = float("inf")


def _pixels(img) -> np.ndarray:
    return img.pixels if isinstance(img, Image) else np.asarray(img, dtype=np.float64)


def _check_same(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a, b, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    pa, pb = _pixels(a), _pixels(b)
    _check_same(pa, pb)
    mse = float(np.mean(np.square(pa - pb)))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * np.log10(max_val ** 2 / mse)


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def kernel_1d(self) -> np.ndarray:
        x = np.arange(self.window) - (self.window - 1) / 2.0
        g = np.exp(-(x * x) / (2.0 * self.sigma ** 2))
        return g / g.sum()


def luma(img) -> np.ndarray:
    p = _pixels(img)
    return p @ LUMA if p.ndim == 3 else p


def _filter_valid(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    # separable correlation over valid window positions only
    n = len(k)
    rows = np.lib.stride_tricks.sliding_window_view(x, n, axis=0)
    x = rows @ k
    cols = np.lib.stride_tricks.sliding_window_view(x, n, axis=1)
    return cols @ k


def ssim_map(a, b, params: SsimParams = SsimParams()) -> np.ndarray:
    pa, pb = _pixels(a), _pixels(b)
    _check_same(pa, pb)
    ya, yb = luma(pa), luma(pb)
    if min(ya.shape) < params.window:
        raise TooSmall(f"SSIM needs at least {params.window}x{params.window} pixels")
    k = params.kernel_1d()
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2
    mu_a, mu_b = _filter_valid(ya, k), _filter_valid(yb, k)
    var_a = _filter_valid(ya * ya, k) - mu_a * mu_a
    var_b = _filter_valid(yb * yb, k) - mu_b * mu_b
    cov = _filter_valid(ya * yb, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, params: SsimParams = SsimParams()) -> float:
    """Mean SSIM of the luma channel over valid window positions."""
    return float(np.mean(ssim_map(a, b, params)))


# -- LPIPS ---------------------------------------------------------------

FeatureExtractor = Callable[[np.ndarray], List[np.ndarray]]
"""Maps an (H, W, 3) image to a list of (h, w, c) feature maps."""


def identity_extractor(pixels: np.ndarray) -> List[np.ndarray]:
    return [np.asarray(pixels, dtype=np.float64)]


def _downsample(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def _grad_mag(y: np.ndarray) -> np.ndarray:
    gy, gx = np.gradient(y) if min(y.shape) > 1 else (np.zeros_like(y), np.zeros_like(y))
    return np.sqrt(gx * gx + gy * gy)


def pyramid_extractor(pixels: np.ndarray, levels: int = 3) -> List[np.ndarray]:
    """Surrogate features: luma and gradient magnitude on a 3-level pyramid.

    This is a hand-made stand-in, not a pretrained network, and its values
    are not comparable to published LPIPS numbers.
    """
    y = luma(pixels)
    maps = []
    for lvl in range(levels):
        if lvl:
            if min(y.shape) < 2:
                raise ExtractorFailure("image too small for the pyramid")
            y = _downsample(y)
        maps.append(np.stack([y, _grad_mag(y)], axis=-1))
    return maps


def _unit_channels(f: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    norm = np.sqrt(np.sum(f * f, axis=-1, keepdims=True))
    return f / (norm + eps)


def lpips(a, b, extractor: FeatureExtractor = pyramid_extractor,
          layer_weights: Optional[Sequence[float]] = None) -> float:
    """Sum over layers of the spatially averaged squared difference between
    channel-normalized feature maps."""
    pa, pb = _pixels(a), _pixels(b)
    _check_same(pa, pb)
    try:
        fa, fb = extractor(pa), extractor(pb)
    except ExtractorFailure:
        raise
    except Exception as e:
        raise ExtractorFailure(f"feature extractor failed: {e}") from e
    if len(fa) != len(fb) or not fa:
        raise ExtractorFailure("extractor returned inconsistent layer lists")
    weights = [1.0] * len(fa) if layer_weights is None else list(layer_weights)
    if len(weights) != len(fa):
        raise ExtractorFailure(f"{len(weights)} weights for {len(fa)} layers")
    total = 0.0
    for w, x, y in zip(weights, fa, fb):
        x, y = np.asarray(x, np.float64), np.asarray(y, np.float64)
        if x.shape != y.shape or x.ndim != 3:
            raise ExtractorFailure("feature maps must be matching (h, w, c) arrays")
        d = np.sum(np.square(_unit_channels(x) - _unit_channels(y)), axis=-1)
        total += w * float(np.mean(d))
    return total


# Weights file: little-endian
#   magic b"RLPW", uint32 version (=1), uint32 n_layers,
#   per layer: uint32 out_c, in_c, kh, kw,
#              float32[out_c*in_c*kh*kw] kernel (row-major), float32[out_c] bias
WEIGHTS_MAGIC = b"RLPW"


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (out_c, in_c, kh, kw)
    bias: np.ndarray  # (out_c,)


def write_weights(layers: Sequence[ConvLayer]) -> bytes:
    out = [WEIGHTS_MAGIC, struct.pack("<II", 1, len(layers))]
    for layer in layers:
        k = np.asarray(layer.kernel, "<f4")
        out.append(struct.pack("<IIII", *k.shape))
        out.append(k.tobytes())
        out.append(np.asarray(layer.bias, "<f4").reshape(k.shape[0]).tobytes())
    return b"".join(out)


def read_weights(data: bytes) -> List[ConvLayer]:
    if data[:4] != WEIGHTS_MAGIC:
        raise ExtractorFailure("not a weights file (bad magic)")
    try:
        version, n = struct.unpack_from("<II", data, 4)
        if version != 1:
            raise ExtractorFailure(f"unsupported weights version {version}")
        pos = 12
        layers = []
        for _ in range(n):
            shape = struct.unpack_from("<IIII", data, pos)
            pos += 16
            size = int(np.prod(shape))
            kernel = np.frombuffer(data, "<f4", size, pos).reshape(shape).astype(np.float64)
            pos += 4 * size
            bias = np.frombuffer(data, "<f4", shape[0], pos).astype(np.float64)
            pos += 4 * shape[0]
            layers.append(ConvLayer(kernel, bias))
    except (struct.error, ValueError) as e:
        raise ExtractorFailure(f"truncated weights file: {e}") from None
    if pos != len(data):
        raise ExtractorFailure("trailing bytes in weights file")
    return layers


class ConvExtractor:
    """Feature extractor running exported convolution layers.

    Each layer is a valid-mode convolution followed by ReLU; layers after
    the first see a 2x average-pooled copy of the previous output. Every
    layer output is one feature map.
    """

    def __init__(self, layers: Sequence[ConvLayer]):
        if not layers:
            raise ExtractorFailure("no layers")
        self.layers = list(layers)

    @classmethod
    def from_file(cls, path) -> "ConvExtractor":
        return cls(read_weights(Path(path).read_bytes()))

    def __call__(self, pixels: np.ndarray) -> List[np.ndarray]:
        x = np.asarray(pixels, dtype=np.float64)
        maps = []
        for i, layer in enumerate(self.layers):
            if i:
                x = _downsample(x)
            out_c, in_c, kh, kw = layer.kernel.shape
            if x.shape[-1] != in_c:
                raise ExtractorFailure(f"layer {i} expects {in_c} channels, got {x.shape[-1]}")
            if x.shape[0] < kh or x.shape[1] < kw:
                raise ExtractorFailure(f"input too small for layer {i}")
            win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
            # win: (h, w, in_c, kh, kw)
            x = np.maximum(np.einsum("hwcij,ocij->hwo", win, layer.kernel) + layer.bias, 0.0)
            maps.append(x)
        return maps
