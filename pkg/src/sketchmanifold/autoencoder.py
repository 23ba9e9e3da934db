"""Optional convolutional autoencoder behind the same embedder contract
as the PCA models: a strided-conv encoder to a dense latent, and a
transposed-conv decoder back to the crop.

Everything is float64 numpy with hand-written backward passes, so the
analytic gradients can be validated against central finite differences
to tight tolerance.  Training uses Adam with beta1 = 0.5, beta2 = 0.999
and learning rate 2e-4 by default, minimizing mean squared error.

Shapes: stride-2 k3 p1 convolutions halve (ceil) each spatial dim;
stride-2 k4 p1 transposed convolutions double them exactly.  For odd
crop sizes the decoder output overshoots and is cropped back, so any
window size round-trips.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .components import ComponentCrop, ComponentKind
from .errors import (
    DimensionMismatchError,
    InvalidInputError,
    TrainingDivergedError,
)
from .pca import LatentVector
from .raster import SketchRaster

from typing import Sequence


@dataclass(frozen=True)
class AutoencoderConfig:
    latent_dim: int = 16
    channels: tuple[int, int] = (4, 8)
    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    leaky_slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise InvalidInputError("latent dimension must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning rate must be positive")
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise InvalidInputError("two positive channel counts required")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidInputError("bad epochs/batch size")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


# -- convolution core ------------------------------------------------------
# All convolutions reduce to three primitives over a pre-padded input.
# Transposed convolution is expressed as zero-dilation + flipped-kernel
# stride-1 convolution, so one backward derivation covers both layers.


def _patches(xp: np.ndarray, k: int, s: int, hout: int, wout: int) -> np.ndarray:
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, k, k, hout, wout),
        strides=(sn, sc, sh, sw, sh * s, sw * s),
        writeable=False,
    )


def _conv_fwd(xp: np.ndarray, w: np.ndarray, s: int) -> np.ndarray:
    k = w.shape[2]
    hout = (xp.shape[2] - k) // s + 1
    wout = (xp.shape[3] - k) // s + 1
    pat = _patches(xp, k, s, hout, wout)
    return np.einsum("ocij,ncijhw->nohw", w, pat, optimize=True)


def _conv_grad_w(xp: np.ndarray, gy: np.ndarray, k: int, s: int) -> np.ndarray:
    hout, wout = gy.shape[2:]
    pat = _patches(xp, k, s, hout, wout)
    return np.einsum("nohw,ncijhw->ocij", gy, pat, optimize=True)


def _conv_grad_x(gy: np.ndarray, w: np.ndarray, s: int, xp_shape) -> np.ndarray:
    k = w.shape[2]
    gxp = np.zeros(xp_shape)
    hout, wout = gy.shape[2:]
    for i in range(k):
        for j in range(k):
            gxp[:, :, i : i + s * hout : s, j : j + s * wout : s] += np.einsum(
                "nohw,oc->nchw", gy, w[:, :, i, j], optimize=True
            )
    return gxp


class Layer:
    """Forward/backward pair; parameterized layers fill params and grads."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    """3x3 stride-2 pad-1 convolution: (N,Ci,H,W) -> (N,Co,ceil(H/2),ceil(W/2))."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 k: int = 3, stride: int = 2, pad: int = 1):
        super().__init__()
        self.k, self.stride, self.pad = k, stride, pad
        scale = np.sqrt(2.0 / (cin * k * k))
        self.params["w"] = rng.standard_normal((cout, cin, k, k)) * scale
        self.params["b"] = np.zeros(cout)
        self._xp: np.ndarray | None = None

    def forward(self, x):
        p = self.pad
        self._xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        y = _conv_fwd(self._xp, self.params["w"], self.stride)
        return y + self.params["b"][None, :, None, None]

    def backward(self, gy):
        p = self.pad
        self.grads["w"] = _conv_grad_w(self._xp, gy, self.k, self.stride)
        self.grads["b"] = gy.sum(axis=(0, 2, 3))
        gxp = _conv_grad_x(gy, self.params["w"], self.stride, self._xp.shape)
        return gxp[:, :, p : gxp.shape[2] - p, p : gxp.shape[3] - p]


class ConvTranspose2d(Layer):
    """4x4 stride-2 pad-1 transposed convolution: doubles each spatial dim.

    Implemented as zero-dilation by the stride, padding by k-1-p, then a
    flipped-kernel stride-1 convolution, which is the exact adjoint map.
    """

    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 k: int = 4, stride: int = 2, pad: int = 1):
        super().__init__()
        self.k, self.stride, self.pad = k, stride, pad
        scale = np.sqrt(2.0 / (cin * k * k))
        self.params["w"] = rng.standard_normal((cin, cout, k, k)) * scale
        self.params["b"] = np.zeros(cout)
        self._xp: np.ndarray | None = None
        self._x_shape: tuple | None = None

    def _w_conv(self):
        # flipped kernel in (cout, cin, k, k) layout for the stride-1 core
        return self.params["w"][:, :, ::-1, ::-1].transpose(1, 0, 2, 3)

    def forward(self, x):
        n, c, h, w = x.shape
        self._x_shape = x.shape
        s, k, p = self.stride, self.k, self.pad
        up = np.zeros((n, c, s * (h - 1) + 1, s * (w - 1) + 1))
        up[:, :, ::s, ::s] = x
        q = k - 1 - p
        self._xp = np.pad(up, ((0, 0), (0, 0), (q, q), (q, q)))
        y = _conv_fwd(self._xp, self._w_conv(), 1)
        return y + self.params["b"][None, :, None, None]

    def backward(self, gy):
        s, k, p = self.stride, self.k, self.pad
        q = k - 1 - p
        gw_conv = _conv_grad_w(self._xp, gy, k, 1)
        self.grads["w"] = gw_conv.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
        self.grads["b"] = gy.sum(axis=(0, 2, 3))
        gxp = _conv_grad_x(gy, self._w_conv(), 1, self._xp.shape)
        gup = gxp[:, :, q : gxp.shape[2] - q, q : gxp.shape[3] - q]
        return gup[:, :, ::s, ::s].copy()


class Dense(Layer):
    def __init__(self, nin: int, nout: int, rng: np.random.Generator):
        super().__init__()
        self.params["w"] = rng.standard_normal((nout, nin)) * np.sqrt(2.0 / nin)
        self.params["b"] = np.zeros(nout)
        self._x: np.ndarray | None = None

    def forward(self, x):
        self._x = x
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, gy):
        self.grads["w"] = gy.T @ self._x
        self.grads["b"] = gy.sum(axis=0)
        return gy @ self.params["w"]


class LeakyReLU(Layer):
    def __init__(self, slope: float):
        super().__init__()
        self.slope = slope
        self._mask: np.ndarray | None = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, gy):
        return np.where(self._mask, gy, self.slope * gy)


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._shape: tuple | None = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, shape: tuple[int, ...]):
        super().__init__()
        self.shape = shape

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, gy):
        return gy.reshape(gy.shape[0], -1)


class Crop2d(Layer):
    """Top-left crop back to the target size; backward zero-pads."""

    def __init__(self, height: int, width: int):
        super().__init__()
        self.height, self.width = height, width
        self._shape: tuple | None = None

    def forward(self, x):
        self._shape = x.shape
        return x[:, :, : self.height, : self.width]

    def backward(self, gy):
        gx = np.zeros(self._shape)
        gx[:, :, : self.height, : self.width] = gy
        return gx


class Autoencoder:
    """Encoder/decoder layer stacks over (N, 1, H, W) float64 batches."""

    def __init__(self, kind: ComponentKind, crop_shape: tuple[int, int],
                 config: AutoencoderConfig):
        self.kind = kind
        self.crop_shape = crop_shape
        self.config = config
        h, w = crop_shape
        c1, c2 = config.channels
        h2 = _ceil_div(_ceil_div(h, 2), 2)  # spatial size after two stride-2 convs
        w2 = _ceil_div(_ceil_div(w, 2), 2)
        d = config.latent_dim
        rng = np.random.default_rng(config.seed)
        slope = config.leaky_slope
        self.encoder: list[Layer] = [
            Conv2d(1, c1, rng),
            LeakyReLU(slope),
            Conv2d(c1, c2, rng),
            LeakyReLU(slope),
            Flatten(),
            Dense(c2 * h2 * w2, d, rng),
        ]
        self.decoder: list[Layer] = [
            Dense(d, c2 * h2 * w2, rng),
            LeakyReLU(slope),
            Reshape((c2, h2, w2)),
            ConvTranspose2d(c2, c1, rng),
            LeakyReLU(slope),
            ConvTranspose2d(c1, 1, rng),
            Crop2d(h, w),
        ]

    @property
    def layers(self) -> list[Layer]:
        return self.encoder + self.decoder

    def encode_batch(self, x: np.ndarray) -> np.ndarray:
        for layer in self.encoder:
            x = layer.forward(x)
        return x

    def decode_batch(self, z: np.ndarray) -> np.ndarray:
        for layer in self.decoder:
            z = layer.forward(z)
        return z

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.decode_batch(self.encode_batch(x))

    def loss_and_gradients(self, x: np.ndarray) -> float:
        """Full forward/backward of the MSE objective; fills layer grads."""
        y = self.forward(x)
        diff = y - x
        loss = float(np.mean(diff * diff))
        g = (2.0 / diff.size) * diff
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return loss

    def loss(self, x: np.ndarray) -> float:
        diff = self.forward(x) - x
        return float(np.mean(diff * diff))

    def digest_bytes(self) -> bytes:
        acc = hashlib.sha256()
        acc.update(b"AECM")
        acc.update(self.kind.slug.encode())
        acc.update(repr(self.crop_shape).encode())
        for layer in self.layers:
            for name in sorted(layer.params):
                acc.update(name.encode())
                acc.update(np.ascontiguousarray(layer.params[name], dtype="<f8").tobytes())
        return acc.digest()


def numeric_gradient(
    ae: Autoencoder,
    x: np.ndarray,
    layer: Layer,
    name: str,
    index: tuple[int, ...],
    h: float = 1e-6,
) -> float:
    """Central finite difference of the MSE loss wrt one parameter entry."""
    param = layer.params[name]
    saved = param[index]
    param[index] = saved + h
    lo_hi = ae.loss(x)
    param[index] = saved - h
    lo_lo = ae.loss(x)
    param[index] = saved
    return (lo_hi - lo_lo) / (2.0 * h)


class _Adam:
    def __init__(self, layers: Sequence[Layer], config: AutoencoderConfig):
        self.lr = config.learning_rate
        self.b1, self.b2 = config.beta1, config.beta2
        self.eps = 1e-8
        self.t = 0
        self.state = [
            {name: (np.zeros_like(p), np.zeros_like(p)) for name, p in layer.params.items()}
            for layer in layers
        ]
        self.layers = list(layers)

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for layer, slots in zip(self.layers, self.state):
            for name, (m, v) in slots.items():
                g = layer.grads[name]
                m *= self.b1
                m += (1.0 - self.b1) * g
                v *= self.b2
                v += (1.0 - self.b2) * g * g
                layer.params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class AutoencoderEmbedder:
    """Same encode/decode surface as the PCA models, backed by the net."""

    def __init__(self, net: Autoencoder):
        self.net = net

    @property
    def kind(self) -> ComponentKind:
        return self.net.kind

    @property
    def latent_dim(self) -> int:
        return self.net.config.latent_dim

    @property
    def crop_shape(self) -> tuple[int, int]:
        return self.net.crop_shape

    def _check_crop(self, crop: ComponentCrop) -> np.ndarray:
        if crop.kind is not self.kind:
            raise InvalidInputError(
                f"crop kind {crop.kind.slug} does not match {self.kind.slug}"
            )
        if crop.raster.ink.shape != self.crop_shape:
            raise DimensionMismatchError(
                f"crop shape {crop.raster.ink.shape} does not match {self.crop_shape}"
            )
        return crop.raster.ink

    def encode(self, crop: ComponentCrop) -> LatentVector:
        ink = self._check_crop(crop)
        z = self.net.encode_batch(ink[None, None, :, :])
        return LatentVector(self.kind, z[0])

    def decode_values(self, values: np.ndarray) -> np.ndarray:
        z = np.asarray(values, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise DimensionMismatchError(
                f"latent shape {z.shape} does not match ({self.latent_dim},)"
            )
        y = self.net.decode_batch(z[None, :])
        return y[0, 0].reshape(-1)

    def decode(self, latent: LatentVector) -> ComponentCrop:
        if latent.component is not self.kind:
            raise InvalidInputError("latent component does not match embedder")
        flat = self.decode_values(latent.values)
        ink = np.clip(flat.reshape(self.crop_shape), 0.0, 1.0)
        return ComponentCrop(kind=self.kind, raster=SketchRaster(ink))

    def digest_bytes(self) -> bytes:
        return self.net.digest_bytes()


@dataclass
class TrainResult:
    embedder: AutoencoderEmbedder
    initial_loss: float
    epoch_losses: list[float] = field(default_factory=list)


def train_autoencoder(
    corpus: Sequence[ComponentCrop], config: AutoencoderConfig
) -> TrainResult:
    """Fit the autoencoder on same-kind crops; deterministic given seed."""
    if len(corpus) == 0:
        raise InvalidInputError("training corpus must be non-empty")
    kind = corpus[0].kind
    shape = corpus[0].raster.ink.shape
    for crop in corpus:
        if crop.kind is not kind or crop.raster.ink.shape != shape:
            raise InvalidInputError("corpus crops must share kind and dimensions")

    x = np.stack([crop.raster.ink for crop in corpus])[:, None, :, :]
    net = Autoencoder(kind, shape, config)
    optimizer = _Adam(net.layers, config)
    # Separate stream from weight init so architecture tweaks don't
    # reshuffle the batches.
    shuffle_rng = np.random.default_rng(config.seed + 1)

    initial_loss = net.loss(x)
    epoch_losses: list[float] = []
    n = x.shape[0]
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            batch = x[order[start : start + config.batch_size]]
            loss = net.loss_and_gradients(batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss {loss}")
            optimizer.step()
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))

    return TrainResult(
        embedder=AutoencoderEmbedder(net),
        initial_loss=initial_loss,
        epoch_losses=epoch_losses,
    )
