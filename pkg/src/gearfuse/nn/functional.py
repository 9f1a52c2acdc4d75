"""Forward and backward kernels on NCHW float64 arrays.

Convolution is cross-correlation. Output size follows the ceiling rule

    H = ceil((H' + 2p - ext) / S + 1),   ext = K + (K - 1)(r - 1)

and when the stride does not tile the padded input exactly, the missing
rows/cols are zero padded on the low side (top/left) so every output
position still sees a full kernel. Transposed convolution is implemented
as the exact adjoint of the matching strided convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    transposed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "dilation", _pair(self.dilation))
        object.__setattr__(self, "padding", _pair(self.padding))
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if min(self.kernel + self.stride + self.dilation) < 1:
            raise ValueError("kernel, stride and dilation must be >= 1")
        if min(self.padding) < 0:
            raise ValueError("padding must be >= 0")
        if self.transposed and self.dilation != (1, 1):
            raise ValueError("transposed convolution does not take a dilation")

    @property
    def extent(self) -> tuple[int, int]:
        return tuple(k + (k - 1) * (r - 1) for k, r in zip(self.kernel, self.dilation))


def conv_output_size(size: int, kernel: int, stride: int = 1, dilation: int = 1, padding: int = 0) -> int:
    """Ceiling-rule output length of a (dilated, strided) convolution."""
    ext = kernel + (kernel - 1) * (dilation - 1)
    span = size + 2 * padding - ext
    if span < 0:
        raise ValueError(f"kernel extent {ext} exceeds padded input {size + 2 * padding}")
    return -(-span // stride) + 1


def deconv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    out = (size - 1) * stride + kernel - 2 * padding
    if out < 1:
        raise ValueError("transposed convolution output would be empty")
    return out


@dataclass(frozen=True)
class _Geometry:
    out_hw: tuple[int, int]
    pads: tuple[tuple[int, int], tuple[int, int]]   # (low, high) per spatial axis


def _geometry(in_hw, kernel, stride, dilation, padding) -> _Geometry:
    out, pads = [], []
    for n, k, s, r, p in zip(in_hw, kernel, stride, dilation, padding):
        o = conv_output_size(n, k, s, r, p)
        ext = k + (k - 1) * (r - 1)
        extra = (o - 1) * s + ext - (n + 2 * p)
        out.append(o)
        pads.append((p + extra, p))
    return _Geometry(tuple(out), tuple(pads))


def _im2col(xp: np.ndarray, kernel, stride, dilation, out_hw) -> np.ndarray:
    """(N, C, Hp, Wp) -> columns (N, C*Kh*Kw, Ho*Wo), one strided copy per tap."""
    (kh, kw), (sh, sw), (rh, rw) = kernel, stride, dilation
    n, c = xp.shape[:2]
    ho, wo = out_hw
    cols = np.empty((n, c, kh, kw, ho, wo))
    for i in range(kh):
        r0 = i * rh
        for j in range(kw):
            c0 = j * rw
            cols[:, :, i, j] = xp[:, :, r0: r0 + sh * (ho - 1) + 1: sh, c0: c0 + sw * (wo - 1) + 1: sw]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(dcols: np.ndarray, padded_shape, kernel, stride, dilation, out_hw) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back into (N, C, Hp, Wp)."""
    (kh, kw), (sh, sw), (rh, rw) = kernel, stride, dilation
    n, c = padded_shape[:2]
    ho, wo = out_hw
    d = dcols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(padded_shape)
    for i in range(kh):
        r0 = i * rh
        for j in range(kw):
            c0 = j * rw
            out[:, :, r0: r0 + sh * (ho - 1) + 1: sh, c0: c0 + sw * (wo - 1) + 1: sw] += d[:, :, i, j]
    return out


def _batched_weight_grad(dy3: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """sum_n dy3[n] @ cols[n].T for dy3 (N, A, P) and cols (N, B, P)."""
    n, a, p = dy3.shape
    b = cols.shape[1]
    if n * p * (a + b) < 1 << 22:
        return np.matmul(dy3, cols.transpose(0, 2, 1)).sum(axis=0)
    out = np.zeros((a, b))
    for k in range(n):
        out += dy3[k] @ cols[k].T
    return out


def _pad(x: np.ndarray, pads) -> np.ndarray:
    if not any(any(p) for p in pads):
        return x
    return np.pad(x, ((0, 0), (0, 0)) + tuple(pads))


def _unpad(xp: np.ndarray, pads, in_hw) -> np.ndarray:
    (t, _), (l, _) = pads
    return xp[:, :, t: t + in_hw[0], l: l + in_hw[1]]


def _check4(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4 or 0 in x.shape:
        raise ValueError(f"{name} must be a nonempty (N, C, H, W) array, got shape {x.shape}")


# --- convolution --------------------------------------------------------------


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None, stride=1, dilation=1, padding=0,
           *, return_cache: bool = False):
    """Dilated, strided cross-correlation. w has shape (C_out, C_in, Kh, Kw)."""
    _check4(x)
    stride, dilation, padding = _pair(stride), _pair(dilation), _pair(padding)
    c_out, c_in, kh, kw = w.shape
    if x.shape[1] != c_in:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {c_in}")
    geo = _geometry(x.shape[2:], (kh, kw), stride, dilation, padding)
    cols = _im2col(_pad(x, geo.pads), (kh, kw), stride, dilation, geo.out_hw)
    y = np.matmul(w.reshape(c_out, -1), cols)
    if b is not None:
        y += b[:, None]
    y = y.reshape(x.shape[0], c_out, *geo.out_hw)
    if return_cache:
        return y, (cols, x.shape, geo, stride, dilation)
    return y


def conv2d_backward(dy: np.ndarray, w: np.ndarray, cache, need_input_grad: bool = True):
    """Returns (dx, dw, db) for conv2d given the cache from its forward pass."""
    cols, x_shape, geo, stride, dilation = cache
    c_out = w.shape[0]
    n = x_shape[0]
    if dy.shape != (n, c_out, *geo.out_hw):
        raise ValueError(f"upstream gradient shape {dy.shape} does not match output {(n, c_out, *geo.out_hw)}")
    dy3 = np.ascontiguousarray(dy).reshape(n, c_out, -1)
    dw = _batched_weight_grad(dy3, cols).reshape(w.shape)
    db = dy3.sum(axis=(0, 2))
    dx = None
    if need_input_grad:
        dcols = np.matmul(w.reshape(c_out, -1).T, dy3)
        padded = (n, x_shape[1], x_shape[2] + sum(geo.pads[0]), x_shape[3] + sum(geo.pads[1]))
        dxp = _col2im(dcols, padded, w.shape[2:], stride, dilation, geo.out_hw)
        dx = np.ascontiguousarray(_unpad(dxp, geo.pads, x_shape[2:]))
    return dx, dw, db


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None, stride=1, padding=0,
                     *, return_cache: bool = False):
    """Transposed convolution; w has shape (C_in, C_out, Kh, Kw).

    Output size is (H' - 1) S + K - 2p, and the map is the adjoint of
    conv2d(., w, stride, padding) from the output space back to the input.
    """
    _check4(x)
    stride, padding = _pair(stride), _pair(padding)
    c_in, c_out, kh, kw = w.shape
    if x.shape[1] != c_in:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {c_in}")
    out_hw = tuple(deconv_output_size(n, k, s, p) for n, k, s, p in zip(x.shape[2:], (kh, kw), stride, padding))
    geo = _geometry(out_hw, (kh, kw), stride, (1, 1), padding)
    n, _, hi, wi = x.shape
    x3 = np.ascontiguousarray(x).reshape(n, c_in, hi * wi)
    dcols = np.matmul(w.reshape(c_in, -1).T, x3)
    padded = (n, c_out, out_hw[0] + sum(geo.pads[0]), out_hw[1] + sum(geo.pads[1]))
    y = _unpad(_col2im(dcols, padded, (kh, kw), stride, (1, 1), (hi, wi)), geo.pads, out_hw)
    y = np.ascontiguousarray(y)
    if b is not None:
        y += b[None, :, None, None]
    if return_cache:
        return y, (x3, x.shape, geo, stride)
    return y


def conv_transpose2d_backward(dy: np.ndarray, w: np.ndarray, cache, need_input_grad: bool = True):
    x3, x_shape, geo, stride = cache
    c_in, c_out, kh, kw = w.shape
    n, _, hi, wi = x_shape
    cols = _im2col(_pad(dy, geo.pads), (kh, kw), stride, (1, 1), (hi, wi))     # (N, C_out*K*K, Hi*Wi)
    dw = _batched_weight_grad(x3, cols).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dx = None
    if need_input_grad:
        dx = np.matmul(w.reshape(c_in, -1), cols).reshape(n, c_in, hi, wi)
    return dx, dw, db


def center_crop(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Symmetric crop; on odd differences the extra row/col comes off the high side."""
    h, w = x.shape[2:]
    if target_h > h or target_w > w or target_h < 1 or target_w < 1:
        raise ValueError(f"cannot crop {h}x{w} to {target_h}x{target_w}")
    top, left = (h - target_h) // 2, (w - target_w) // 2
    return x[:, :, top: top + target_h, left: left + target_w]


def center_crop_backward(dy: np.ndarray, in_shape) -> np.ndarray:
    h, w = in_shape[2:]
    th, tw = dy.shape[2:]
    top, left = (h - th) // 2, (w - tw) // 2
    dx = np.zeros(in_shape)
    dx[:, :, top: top + th, left: left + tw] = dy
    return dx


# --- normalization and activations ---------------------------------------------


def batchnorm_train(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    n, c, h, w = x.shape
    m = n * h * w
    if m < 2:
        raise ValueError("batch norm in training mode needs at least 2 values per channel")
    x3 = x.reshape(n, c, h * w)
    mu = x3.sum(axis=(0, 2)) / m
    xc = x3 - mu[:, None]
    var = np.einsum("ncp,ncp->c", xc, xc) / m
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc
    xhat *= inv[:, None]
    y = xhat * gamma[:, None] + beta[:, None]
    return y.reshape(x.shape), (xhat, inv, gamma, x.shape), mu, var


def batchnorm_infer(x, gamma, beta, mean, var, eps):
    inv = 1.0 / np.sqrt(var + eps)
    scale = gamma * inv
    return x * scale[None, :, None, None] + (beta - mean * scale)[None, :, None, None]


def batchnorm_backward(dy: np.ndarray, cache):
    xhat, inv, gamma, shape = cache
    n, c = shape[:2]
    m = xhat.shape[0] * xhat.shape[2]
    dy3 = dy.reshape(n, c, -1)
    dbeta = dy3.sum(axis=(0, 2))
    dgamma = np.einsum("ncp,ncp->c", dy3, xhat)
    k = gamma * inv
    dx = dy3 * k[:, None]
    dx -= (k * dbeta / m)[:, None]
    dx -= xhat * (k * dgamma / m)[:, None]
    return dx.reshape(shape), dgamma, dbeta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def maxpool2d(x: np.ndarray, kernel=2, stride=None):
    """Max over kernel windows (floor output size). Returns (y, argmax index within each window)."""
    _check4(x)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else (kh, kw))
    h, w = x.shape[2:]
    if kh > h or kw > w:
        raise ValueError(f"pool window {kh}x{kw} larger than input {h}x{w}")
    ho, wo = (h - kh) // sh + 1, (w - kw) // sw + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    flat = win.reshape(*win.shape[:4], kh * kw)
    idx = flat.argmax(axis=-1)          # first maximum on ties
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return y, idx


def maxpool2d_backward(dy: np.ndarray, idx: np.ndarray, in_shape, kernel=2, stride=None) -> np.ndarray:
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else (kh, kw))
    n, c, ho, wo = dy.shape
    di, dj = np.divmod(idx, kw)
    rows = np.arange(ho)[None, None, :, None] * sh + di
    cols = np.arange(wo)[None, None, None, :] * sw + dj
    dx = np.zeros(in_shape)
    nn_ = np.arange(n)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    if sh >= kh and sw >= kw:
        dx[nn_, cc, rows, cols] = dy      # windows are disjoint, no collisions
    else:
        np.add.at(dx, (nn_, cc, rows, cols), dy)
    return dx


def gap(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3))


def gap_backward(dy: np.ndarray, in_shape) -> np.ndarray:
    h, w = in_shape[2:]
    return np.broadcast_to(dy[:, :, None, None] / (h * w), in_shape).copy()


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels) -> tuple[np.ndarray, float, np.ndarray]:
    """Stable softmax, mean cross-entropy and its gradient (p - onehot) / N."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if k < 2:
        raise ValueError("softmax cross-entropy needs at least 2 classes")
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must be {n} integers in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    p = np.exp(log_p)
    rows = np.arange(n)
    loss = -float(log_p[rows, labels].mean())
    grad = p.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    return p, loss, grad
