"""Small encoder-decoder conv net with hand-written reverse-mode gradients.

The decoder's implicit prior is an untrained generator: a fixed noise input
is pushed through stride-2 conv downsampling stages and nearest-neighbor
upsampling stages (no skip connections) to produce the frame stack.  The
frame stack is treated as a channels x height x width volume with
channels = time.  Shapes are fixed at construction, so every layer
precomputes its gather indices once; parameters live in one flat float64
vector and gradients are exact reverse-mode derivatives of the forward
pass (verified against finite differences in the test suite).

All operations are plain numpy, which keeps decode results bit-reproducible
for a fixed seed and configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KERNEL = 3  # 3x3 kernels, padding 1 everywhere


class _Conv:
    """3x3 convolution, padding 1, stride 1 or 2, with bias."""

    def __init__(self, in_ch: int, in_hw: tuple[int, int], out_ch: int, stride: int):
        self.in_ch, self.out_ch, self.stride = in_ch, out_ch, stride
        h, w = in_hw
        self.in_hw = in_hw
        self.out_hw = (-(-h // stride), -(-w // stride))
        self.w_shape = (out_ch, in_ch * KERNEL * KERNEL)
        self.b_shape = (out_ch,)
        self.param_count = out_ch * in_ch * KERNEL * KERNEL + out_ch
        self._pad_shape = (in_ch, h + 2, w + 2)
        self._gather = self._build_gather()

    def _build_gather(self) -> np.ndarray:
        # Flat indices into the zero-padded input selecting the 3x3 patch
        # of every output position, laid out as (in_ch*9, out_h*out_w).
        c, hp, wp = self._pad_shape
        oh, ow = self.out_hw
        rows = np.arange(oh) * self.stride
        cols = np.arange(ow) * self.stride
        base = rows[:, None] * wp + cols[None, :]  # top-left corner per output
        patch = (np.arange(KERNEL)[:, None] * wp + np.arange(KERNEL)[None, :]).ravel()
        chan = np.arange(c) * hp * wp
        idx = chan[:, None, None] + patch[None, :, None] + base.ravel()[None, None, :]
        return idx.reshape(c * KERNEL * KERNEL, oh * ow)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        fan_in = self.in_ch * KERNEL * KERNEL
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=self.w_shape)
        return np.concatenate([w.ravel(), np.zeros(self.out_ch)])

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_w = self.w_shape[0] * self.w_shape[1]
        return theta[:n_w].reshape(self.w_shape), theta[n_w:]

    def forward(self, x: np.ndarray, theta: np.ndarray):
        w, b = self.split(theta)
        xp = np.zeros(self._pad_shape)
        xp[:, 1:-1, 1:-1] = x
        cols = xp.ravel()[self._gather]
        y = w @ cols + b[:, None]
        return y.reshape(self.out_ch, *self.out_hw), cols

    def backward(self, dy: np.ndarray, theta: np.ndarray, cols: np.ndarray):
        w, _ = self.split(theta)
        dy2 = dy.reshape(self.out_ch, -1)
        dw = dy2 @ cols.T
        db = dy2.sum(axis=1)
        dcols = w.T @ dy2
        dxp = np.bincount(
            self._gather.ravel(), weights=dcols.ravel(), minlength=int(np.prod(self._pad_shape))
        ).reshape(self._pad_shape)
        dx = dxp[:, 1:-1, 1:-1]
        return dx, np.concatenate([dw.ravel(), db])


class _LeakyRelu:
    """Leaky rectifier, y = x for x >= 0 else slope*x."""

    param_count = 0

    def __init__(self, channels: int, hw: tuple[int, int], slope: float):
        self.slope = slope
        self.out_hw = hw
        self.out_ch = channels

    def forward(self, x: np.ndarray, theta: np.ndarray):
        gate = np.where(x >= 0, 1.0, self.slope)
        return x * gate, gate

    def backward(self, dy: np.ndarray, theta: np.ndarray, gate: np.ndarray):
        return dy * gate, np.empty(0)


class _NearestUpsample:
    """Nearest-neighbor resize to a fixed target shape."""

    param_count = 0

    def __init__(self, channels: int, in_hw: tuple[int, int], out_hw: tuple[int, int]):
        self.out_ch = channels
        self.in_hw, self.out_hw = in_hw, out_hw
        h, w = in_hw
        th, tw = out_hw
        self._rows = (np.arange(th) * h) // th
        self._cols = (np.arange(tw) * w) // tw
        flat = (self._rows[:, None] * w + self._cols[None, :]).ravel()
        chan = np.arange(channels) * h * w
        self._scatter = (chan[:, None] + flat[None, :]).ravel()
        self._in_size = channels * h * w

    def forward(self, x: np.ndarray, theta: np.ndarray):
        return x[:, self._rows[:, None], self._cols[None, :]], None

    def backward(self, dy: np.ndarray, theta: np.ndarray, cache):
        dx = np.bincount(self._scatter, weights=dy.ravel(), minlength=self._in_size)
        return dx.reshape(self.out_ch, *self.in_hw), np.empty(0)


@dataclass(frozen=True)
class NetDescription:
    """Architecture summary (layer kinds, widths, activation slope)."""

    layers: tuple[str, ...]
    hidden: int
    stages: int
    slope: float


class ConvGenerator:
    """Fixed encoder-decoder generator mapping noise to a frame stack.

    ``stages`` stride-2 conv + leaky-relu blocks halve the spatial dims,
    then the same number of nearest-upsample + conv + leaky-relu blocks
    restore them; a final linear 3x3 conv maps back to ``channels``
    output channels.  Input and output share the shape
    (channels, height, width).
    """

    def __init__(
        self,
        channels: int,
        height: int,
        width: int,
        hidden: int = 16,
        stages: int = 3,
        slope: float = 0.1,
    ):
        self.channels, self.height, self.width = channels, height, width
        self.hidden, self.stages, self.slope = hidden, stages, slope

        layers = []
        shapes = [(height, width)]
        ch = channels
        for _ in range(stages):
            conv = _Conv(ch, shapes[-1], hidden, stride=2)
            layers.append(conv)
            layers.append(_LeakyRelu(hidden, conv.out_hw, slope))
            shapes.append(conv.out_hw)
            ch = hidden
        for s in range(stages):
            target = shapes[stages - 1 - s]
            layers.append(_NearestUpsample(ch, shapes[stages - s], target))
            conv = _Conv(ch, target, hidden, stride=1)
            layers.append(conv)
            layers.append(_LeakyRelu(hidden, target, slope))
            ch = hidden
        layers.append(_Conv(ch, (height, width), channels, stride=1))
        self.layers = layers

        self.param_count = sum(l.param_count for l in layers)
        self._slices = []
        offset = 0
        for l in layers:
            self._slices.append(slice(offset, offset + l.param_count))
            offset += l.param_count

    def describe(self) -> NetDescription:
        return NetDescription(
            layers=tuple(type(l).__name__.lstrip("_") for l in self.layers),
            hidden=self.hidden,
            stages=self.stages,
            slope=self.slope,
        )

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for l in self.layers:
            if l.param_count:
                parts.append(l.init_params(rng))
            else:
                parts.append(np.empty(0))
        return np.concatenate(parts)

    def forward(self, params: np.ndarray, e: np.ndarray):
        """Run the net; returns (output, caches) with caches reusable by
        :meth:`backward`."""
        if e.shape != (self.channels, self.height, self.width):
            raise ValueError(f"noise input must have shape {(self.channels, self.height, self.width)}")
        x = e
        caches = []
        for l, sl in zip(self.layers, self._slices):
            x, cache = l.forward(x, params[sl])
            caches.append(cache)
        return x, caches

    def backward(self, params: np.ndarray, caches: list, dout: np.ndarray) -> np.ndarray:
        """Gradient of sum(dout * output) with respect to the parameters."""
        grad = np.zeros_like(params)
        dx = dout
        for l, sl, cache in zip(reversed(self.layers), reversed(self._slices), reversed(caches)):
            dx, dtheta = l.backward(dx, params[sl], cache)
            if l.param_count:
                grad[sl] = dtheta
        return grad

    def __call__(self, params: np.ndarray, e: np.ndarray) -> np.ndarray:
        out, _ = self.forward(params, e)
        return out
