"""GDCA generator, the shared discriminator architecture, and the frozen feature extractor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .layers import (Conv2dParams, DenseParams, conv2d, dense, global_avg_pool,
                     leaky_relu, pixel_shuffle, sigmoid)
from .tensor import Precision, Tensor, mul, current_tape

SLOPE = 0.2


class Module:
    """Mixin giving ``named_parameters`` over ``Conv2dParams``/``DenseParams`` children.

    Subclasses implement ``_children`` yielding ``(prefix, params)`` pairs,
    where params is a layer parameter set or a bare ``Tensor``.
    """

    def _children(self):
        raise NotImplementedError

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, item in self._children():
            if isinstance(item, Tensor):
                out[prefix] = item
            else:
                for k, t in item.tensors().items():
                    out[f"{prefix}.{k}"] = t
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def set_trainable(self, flag: bool):
        for t in self.parameters():
            t.requires_grad = flag

    def load_state(self, tensors: dict[str, Tensor], prefix: str = ""):
        """Copy values from ``tensors`` (keys carrying ``prefix``) into this module."""
        for name, t in self.named_parameters().items():
            key = prefix + name
            if key not in tensors:
                raise KeyError(f"missing tensor {key!r}")
            src = tensors[key]
            if src.shape != t.shape:
                raise ShapeError(f"{key}: stored shape {src.shape} != model shape {t.shape}")
            t.data = src.data.astype(t.dtype)


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 64
    n_ca_blocks: int = 4
    n_le_blocks: int = 4
    ca_reduction: int = 4
    scale_factor: int = 4
    skip_weight_init: float = 1.0

    def __post_init__(self):
        for f in ("base_channels", "n_ca_blocks", "n_le_blocks", "ca_reduction"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be positive")
        if self.base_channels % self.ca_reduction:
            raise ValueError("base_channels must be divisible by ca_reduction")
        if self.scale_factor != 4:
            raise ValueError("only x4 super-resolution is supported")


class CABlock(Module):
    """Residual block whose branch is gated per channel by squeeze-and-excite attention."""

    def __init__(self, channels, reduction, rng, precision=None):
        self.conv1 = Conv2dParams.create(channels, channels, 3, rng, precision=precision)
        self.conv2 = Conv2dParams.create(channels, channels, 3, rng, precision=precision)
        self.squeeze = DenseParams.create(channels, channels // reduction, rng, precision=precision)
        self.excite = DenseParams.create(channels // reduction, channels, rng, precision=precision)

    def _children(self):
        return [("conv1", self.conv1), ("conv2", self.conv2),
                ("squeeze", self.squeeze), ("excite", self.excite)]

    def attention(self, f: Tensor) -> Tensor:
        z = leaky_relu(dense(global_avg_pool(f), self.squeeze), SLOPE)
        return sigmoid(dense(z, self.excite))

    def __call__(self, x: Tensor) -> Tensor:
        _check_channels(x, self.conv1.in_channels, "CA block")
        f = conv2d(leaky_relu(conv2d(x, self.conv1), SLOPE), self.conv2)
        return x + f * self.attention(f)


class LEBlock(Module):
    """Plain residual conv block, no normalization, no gating."""

    def __init__(self, channels, rng, precision=None):
        self.conv1 = Conv2dParams.create(channels, channels, 3, rng, precision=precision)
        self.conv2 = Conv2dParams.create(channels, channels, 3, rng, precision=precision)

    def _children(self):
        return [("conv1", self.conv1), ("conv2", self.conv2)]

    def __call__(self, x: Tensor) -> Tensor:
        _check_channels(x, self.conv1.in_channels, "LE block")
        return x + conv2d(leaky_relu(conv2d(x, self.conv1), SLOPE), self.conv2)


def ca_block_forward(x: Tensor, block: CABlock) -> Tensor:
    return block(x)


def le_block_forward(x: Tensor, block: LEBlock) -> Tensor:
    return block(x)


def _check_channels(x: Tensor, expected: int, what: str):
    if x.ndim not in (3, 4) or x.shape[-3] != expected:
        raise ShapeError(f"{what} expects {expected} channels, got input shape {x.shape}")


class Generator(Module):
    """Head 5x5 conv, CA blocks then LE blocks, weighted long skip, fusion conv, two x2 sub-pixel stages, tail."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig(), seed: int = 0, precision=None):
        self.config = config
        self.precision = Precision.of(precision)
        rng = np.random.default_rng(seed)
        c = config.base_channels
        p = self.precision
        self.head = Conv2dParams.create(3, c, 5, rng, precision=p)
        self.ca_blocks = [CABlock(c, config.ca_reduction, rng, p) for _ in range(config.n_ca_blocks)]
        self.le_blocks = [LEBlock(c, rng, p) for _ in range(config.n_le_blocks)]
        self.skip_weight = Tensor(np.full(1, config.skip_weight_init), requires_grad=True, precision=p)
        self.fusion = Conv2dParams.create(c, c, 3, rng, precision=p)
        self.upsample1 = Conv2dParams.create(c, 4 * c, 3, rng, precision=p)
        self.upsample2 = Conv2dParams.create(c, 4 * c, 3, rng, precision=p)
        self.tail = Conv2dParams.create(c, 3, 3, rng, precision=p)

    def _children(self):
        yield "head", self.head
        for i, b in enumerate(self.ca_blocks):
            for name, t in b._children():
                yield f"ca.{i}.{name}", t
        for i, b in enumerate(self.le_blocks):
            for name, t in b._children():
                yield f"le.{i}.{name}", t
        yield "skip_weight", self.skip_weight
        yield "fusion", self.fusion
        yield "upsample1", self.upsample1
        yield "upsample2", self.upsample2
        yield "tail", self.tail

    def body(self, h: Tensor) -> Tensor:
        for block in self.ca_blocks:
            h = block(h)
        for block in self.le_blocks:
            h = block(h)
        return h

    def __call__(self, lr: Tensor, clamp: bool = False) -> Tensor:
        if lr.ndim not in (3, 4) or lr.shape[-3] != 3:
            raise ShapeError(f"generator expects a 3-channel image, got shape {lr.shape}")
        head = conv2d(lr, self.head)
        joined = self.body(head) + mul(head, self.skip_weight)
        h = conv2d(joined, self.fusion)
        h = leaky_relu(pixel_shuffle(conv2d(h, self.upsample1), 2), SLOPE)
        h = leaky_relu(pixel_shuffle(conv2d(h, self.upsample2), 2), SLOPE)
        out = conv2d(h, self.tail)
        if clamp:
            out = Tensor._wrap(np.clip(out.data, 0.0, 1.0))
        return out

    def super_resolve(self, lr: Tensor) -> Tensor:
        """Inference path: no recording, output clamped to [0, 1]."""
        if current_tape() is not None:
            raise RuntimeError("super_resolve must run outside a tape")
        return self(lr, clamp=True)

    @classmethod
    def config_from_state(cls, tensors: dict[str, Tensor], prefix: str = "g.") -> GeneratorConfig:
        """Recover the architecture from stored tensor names and shapes."""
        def blocks(kind):
            idx = {int(k[len(prefix):].split(".")[1]) for k in tensors
                   if k.startswith(f"{prefix}{kind}.")}
            return len(idx)

        head = tensors[f"{prefix}head.weight"]
        c = head.shape[0]
        n_ca = blocks("ca")
        reduction = 4
        if n_ca:
            reduction = c // tensors[f"{prefix}ca.0.squeeze.weight"].shape[0]
        return GeneratorConfig(base_channels=c, n_ca_blocks=n_ca, n_le_blocks=blocks("le"),
                               ca_reduction=reduction,
                               skip_weight_init=float(tensors[f"{prefix}skip_weight"].item()))


def generator_forward(g: Generator, lr: Tensor, clamp: bool = False) -> Tensor:
    return g(lr, clamp=clamp)


# ---------------------------------------------------------------------------
# discriminators and feature extractor


class Discriminator(Module):
    """Conv stride-1/stride-2 pairs, global average pool, two dense stages -> one logit.

    The same architecture serves the image instance (3 input channels) and
    the feature instance (feature-extractor channels).
    """

    def __init__(self, input_channels: int = 3, widths=(32, 64, 128), hidden: int = 64,
                 seed: int = 0, precision=None):
        self.input_channels = input_channels
        rng = np.random.default_rng(seed)
        p = Precision.of(precision)
        self.conv_stack = []
        cin = input_channels
        for w in widths:
            self.conv_stack.append(Conv2dParams.create(cin, w, 3, rng, stride=1, padding=1, precision=p))
            self.conv_stack.append(Conv2dParams.create(w, w, 3, rng, stride=2, padding=1, precision=p))
            cin = w
        self.fc1 = DenseParams.create(cin, hidden, rng, precision=p)
        self.fc2 = DenseParams.create(hidden, 1, rng, precision=p)

    def _children(self):
        for i, c in enumerate(self.conv_stack):
            yield f"conv.{i}", c
        yield "fc1", self.fc1
        yield "fc2", self.fc2

    def __call__(self, x: Tensor) -> Tensor:
        """Unbounded logits: shape ``[1]`` for one input, ``[N]`` for a batch."""
        if x.ndim not in (3, 4) or x.shape[-3] != self.input_channels:
            raise ShapeError(f"discriminator expects {self.input_channels} channels, got shape {x.shape}")
        h = x
        for conv in self.conv_stack:
            h = leaky_relu(conv2d(h, conv), SLOPE)
        h = leaky_relu(dense(global_avg_pool(h), self.fc1), SLOPE)
        logit = dense(h, self.fc2)
        return logit.reshape(x.shape[0]) if x.ndim == 4 else logit


def discriminator_forward(d: Discriminator, x: Tensor) -> Tensor:
    return d(x)


class FeatureExtractor(Module):
    """Frozen random conv stack, x16 downsampling, 128 output channels.

    Stands in for a pretrained deep feature network.  Parameters are drawn
    from ``seed`` and never require gradients; gradients still flow to the
    input image.
    """

    channels = (32, 64, 96, 128)

    def __init__(self, seed: int = 0, precision=None):
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        p = Precision.of(precision)
        self.conv_stack = []
        cin = 3
        for cout in self.channels:
            self.conv_stack.append(Conv2dParams.create(cin, cout, 3, rng, stride=1, padding=1,
                                                       precision=p, trainable=False))
            self.conv_stack.append(Conv2dParams.create(cout, cout, 3, rng, stride=2, padding=1,
                                                       precision=p, trainable=False))
            cin = cout

    @property
    def out_channels(self):
        return self.channels[-1]

    def _children(self):
        for i, c in enumerate(self.conv_stack):
            yield f"conv.{i}", c

    def __call__(self, img: Tensor) -> Tensor:
        if img.ndim not in (3, 4) or img.shape[-3] != 3:
            raise ShapeError(f"feature extractor expects a 3-channel image, got {img.shape}")
        h, w = img.shape[-2:]
        if h % 16 or w % 16:
            raise ShapeError(f"image dims {h}x{w} must be divisible by 16")
        x = img
        last = len(self.conv_stack) - 1
        for i, conv in enumerate(self.conv_stack):
            x = conv2d(x, conv)
            if i != last:
                x = leaky_relu(x, SLOPE)
        return x


def feature_extract(fe: FeatureExtractor, img: Tensor) -> Tensor:
    return fe(img)
