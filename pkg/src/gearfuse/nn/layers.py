"""Stateful layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` during
``backward``. Gradients are zeroed by the optimizer after each step.
"""

from __future__ import annotations

import numpy as np

from . import functional as F


class Parameter:
    """A trainable array plus its gradient and Adam moments (all congruent)."""

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Parameter(shape={self.value.shape})"


class Module:
    tag = 0                 # checkpoint type tag, 0 means "container, no own state"

    def __init__(self):
        self.training = True

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def children(self) -> list["Module"]:
        return []

    def own_parameters(self) -> list[Parameter]:
        return []

    def parameters(self) -> list[Parameter]:
        out = list(self.own_parameters())
        for c in self.children():
            out.extend(c.parameters())
        return out

    def modules(self) -> list["Module"]:
        out = [self]
        for c in self.children():
            out.extend(c.modules())
        return out

    def train(self, flag: bool = True) -> "Module":
        for m in self.modules():
            m.training = flag
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    # checkpoint hooks: integer spec and the arrays that define the state
    def spec_ints(self) -> list[int]:
        return []

    def state_arrays(self) -> list[np.ndarray]:
        return [p.value for p in self.own_parameters()]

    def load_state_arrays(self, arrays) -> None:
        params = self.own_parameters()
        for p, a in zip(params, arrays):
            if p.value.shape != a.shape:
                raise ValueError(f"shape mismatch {p.value.shape} vs {a.shape}")
            p.value[...] = a


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Module):
    tag = 1

    def __init__(self, in_channels: int, out_channels: int, kernel=3, stride=1, dilation=1, padding=0,
                 bias: bool = True, rng: np.random.Generator | None = None, init_scale: float = 1.0):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = F.ConvSpec(out_channels, kernel, stride, dilation, padding)
        kh, kw = self.spec.kernel
        self.in_channels = in_channels
        self.weight = Parameter(init_scale * he_normal(rng, (out_channels, in_channels, kh, kw), in_channels * kh * kw))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self._cache = None

    def own_parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def forward(self, x):
        s = self.spec
        y, self._cache = F.conv2d(x, self.weight.value, None if self.bias is None else self.bias.value,
                                  s.stride, s.dilation, s.padding, return_cache=True)
        return y

    def backward(self, dy):
        dx, dw, db = F.conv2d_backward(dy, self.weight.value, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        return dx

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        s = self.spec
        return (F.conv_output_size(h, s.kernel[0], s.stride[0], s.dilation[0], s.padding[0]),
                F.conv_output_size(w, s.kernel[1], s.stride[1], s.dilation[1], s.padding[1]))

    def spec_ints(self):
        s = self.spec
        return [self.in_channels, s.out_channels, *s.kernel, *s.stride, *s.dilation, *s.padding,
                int(self.bias is not None)]


class ConvTranspose2d(Module):
    tag = 2

    def __init__(self, in_channels: int, out_channels: int, kernel=4, stride=2, padding=0,
                 bias: bool = True, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = F.ConvSpec(out_channels, kernel, stride, 1, padding, transposed=True)
        kh, kw = self.spec.kernel
        self.in_channels = in_channels
        # each output sees about in_channels * K^2 / S^2 taps
        fan_in = max(1, in_channels * kh * kw // (self.spec.stride[0] * self.spec.stride[1]))
        self.weight = Parameter(he_normal(rng, (in_channels, out_channels, kh, kw), fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self._cache = None

    def own_parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def forward(self, x):
        s = self.spec
        y, self._cache = F.conv_transpose2d(x, self.weight.value, None if self.bias is None else self.bias.value,
                                            s.stride, s.padding, return_cache=True)
        return y

    def backward(self, dy):
        dx, dw, db = F.conv_transpose2d_backward(dy, self.weight.value, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        return dx

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        s = self.spec
        return (F.deconv_output_size(h, s.kernel[0], s.stride[0], s.padding[0]),
                F.deconv_output_size(w, s.kernel[1], s.stride[1], s.padding[1]))

    def spec_ints(self):
        s = self.spec
        return [self.in_channels, s.out_channels, *s.kernel, *s.stride, *s.padding, int(self.bias is not None)]


class BatchNorm2d(Module):
    tag = 3

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.tracked = False    # running stats start from the first batch, not from (0, 1)
        self._cache = None

    def own_parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        if not self.training:
            return F.batchnorm_infer(x, self.gamma.value, self.beta.value,
                                     self.running_mean, self.running_var, self.eps)
        y, self._cache, mu, var = F.batchnorm_train(x, self.gamma.value, self.beta.value, self.eps)
        m = x.shape[0] * x.shape[2] * x.shape[3]
        k = self.momentum if self.tracked else 1.0
        self.tracked = True
        self.running_mean = (1 - k) * self.running_mean + k * mu
        self.running_var = (1 - k) * self.running_var + k * var * m / (m - 1)
        return y

    def backward(self, dy):
        dx, dg, db = F.batchnorm_backward(dy, self._cache)
        self.gamma.grad += dg
        self.beta.grad += db
        return dx

    def spec_ints(self):
        return [self.channels]

    def state_arrays(self):
        return [self.gamma.value, self.beta.value, self.running_mean, self.running_var]

    def load_state_arrays(self, arrays):
        g, b, rm, rv = arrays
        self.gamma.value[...] = g
        self.beta.value[...] = b
        self.running_mean = np.array(rm, dtype=np.float64)
        self.running_var = np.array(rv, dtype=np.float64)
        self.tracked = True


class ReLU(Module):
    def forward(self, x):
        self._x = x
        return F.relu(x)

    def backward(self, dy):
        return F.relu_backward(dy, self._x)


class MaxPool2d(Module):
    def __init__(self, kernel=2, stride=None):
        super().__init__()
        self.kernel = F._pair(kernel)
        self.stride = F._pair(stride) if stride is not None else self.kernel

    def forward(self, x):
        self._shape = x.shape
        y, self._idx = F.maxpool2d(x, self.kernel, self.stride)
        return y

    def backward(self, dy):
        return F.maxpool2d_backward(dy, self._idx, self._shape, self.kernel, self.stride)


class GlobalAvgPool(Module):
    def forward(self, x):
        self._shape = x.shape
        return F.gap(x)

    def backward(self, dy):
        return F.gap_backward(dy, self._shape)


class CenterCrop(Module):
    def __init__(self, height: int, width: int):
        super().__init__()
        self.size = (height, width)

    def forward(self, x):
        self._shape = x.shape
        return np.ascontiguousarray(F.center_crop(x, *self.size))

    def backward(self, dy):
        return F.center_crop_backward(dy, self._shape)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class ResidualBlock(Module):
    """y = relu(F(x) + shortcut(x)), F = conv-BN-ReLU-conv-BN.

    A stride-2 block uses an unpadded 3x3 first conv (the ceiling rule
    adds one low-side row/col so 2n -> n exactly) and a 2x2 stride-2
    projection on the shortcut. A dilated block keeps stride 1 and pads by
    the dilation so the size is unchanged.
    """

    def __init__(self, in_channels: int, out_channels: int, stride=1, dilation=1, kernel=(3, 3),
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = F._pair(kernel)
        sh, sw = F._pair(stride)
        rh, rw = F._pair(dilation)
        pad1 = (0 if sh > 1 else rh * (kh // 2), 0 if sw > 1 else rw * (kw // 2))
        pad2 = (rh * (kh // 2), rw * (kw // 2))
        self.conv1 = Conv2d(in_channels, out_channels, (kh, kw), (sh, sw), (rh, rw), pad1, bias=False, rng=rng)
        self.bn1 = BatchNorm2d(out_channels)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(out_channels, out_channels, (kh, kw), 1, (rh, rw), pad2, bias=False, rng=rng)
        self.bn2 = BatchNorm2d(out_channels)
        self.shortcut = None
        if (sh, sw) != (1, 1) or in_channels != out_channels:
            self.shortcut = Sequential(
                Conv2d(in_channels, out_channels, (sh, sw), (sh, sw), 1, 0, bias=False, rng=rng),
                BatchNorm2d(out_channels))
        self.relu_out = ReLU()

    def children(self):
        out = [self.conv1, self.bn1, self.relu1, self.conv2, self.bn2]
        if self.shortcut is not None:
            out.append(self.shortcut)
        return out + [self.relu_out]

    def forward(self, x):
        f = self.bn2(self.conv2(self.relu1(self.bn1(self.conv1(x)))))
        s = x if self.shortcut is None else self.shortcut(x)
        if f.shape != s.shape:
            raise ValueError(f"residual shapes differ: {f.shape} vs {s.shape}")
        return self.relu_out(f + s)

    def backward(self, dy):
        d = self.relu_out.backward(dy)
        df = self.conv1.backward(self.bn1.backward(self.relu1.backward(self.conv2.backward(self.bn2.backward(d)))))
        ds = d if self.shortcut is None else self.shortcut.backward(d)
        return df + ds
