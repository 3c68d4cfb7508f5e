"""
Layer primitives: zero-padded stride-1 convolution, ReLU and channel concatenation.

The batched kernels work on stacked ``(N, C, H, W)`` arrays and are what the
network and the trainer call. The Tensor-level functions are single-sample
wrappers around them.

Convolution is computed as a sum over kernel offsets: for every (dy, dx) the
shifted input window is contracted against ``w[:, :, dy, dx]``. This is the
im2col gather without materializing the column matrix, and the backward pass
scatters the same way (col2im).
"""

from dataclasses import dataclass, field

import numpy as np

from cnnpost.errors import ShapeMismatchError, SpecError
from cnnpost.tensor import Tensor


@dataclass
class ConvParams:
    """Weights (out, in, kh, kw) and biases (out,) of one convolution module."""

    weights: np.ndarray
    biases: np.ndarray
    in_channels: int = field(init=False)
    out_channels: int = field(init=False)
    kernel_h: int = field(init=False)
    kernel_w: int = field(init=False)

    def __post_init__(self) -> None:
        if self.weights.ndim != 4:
            raise SpecError(f"Conv weights must be (out, in, kh, kw), got shape {self.weights.shape}")
        self.out_channels, self.in_channels, self.kernel_h, self.kernel_w = (int(d) for d in self.weights.shape)
        if self.kernel_h % 2 == 0 or self.kernel_w % 2 == 0:
            raise SpecError(f"Only odd kernels are supported, got {self.kernel_h}x{self.kernel_w}")
        if self.biases.shape != (self.out_channels,):
            raise ShapeMismatchError("conv biases", self.biases.shape, (self.out_channels,))

    @classmethod
    def zeros(cls, in_channels: int, out_channels: int, kernel_h: int, kernel_w: int,
              dtype: type[np.floating] = np.float64) -> "ConvParams":
        return cls(
            np.zeros((out_channels, in_channels, kernel_h, kernel_w), dtype=dtype),
            np.zeros(out_channels, dtype=dtype),
        )

    @property
    def weight_count(self) -> int:
        return self.in_channels * self.out_channels * self.kernel_h * self.kernel_w

    @property
    def bias_count(self) -> int:
        return self.out_channels

    def copy(self) -> "ConvParams":
        return ConvParams(self.weights.copy(), self.biases.copy())

    def astype(self, dtype: type[np.floating]) -> "ConvParams":
        return ConvParams(self.weights.astype(dtype), self.biases.astype(dtype))


# Batched kernels

def _pad(x: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    if pad_h == 0 and pad_w == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)), mode="constant")


def _correlate(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Same-size zero-padded correlation without bias: (N, C, H, W) -> (N, O, H, W)."""
    n, c, h, w = x.shape
    out_channels, in_channels, kh, kw = weights.shape
    if c != in_channels:
        raise SpecError(f"Convolution expects {in_channels} input channels, got {c}")
    padded = _pad(x, (kh - 1) // 2, (kw - 1) // 2)
    out = np.zeros((out_channels, n, h, w), dtype=np.result_type(x, weights))
    for dy in range(kh):
        for dx in range(kw):
            window = padded[:, :, dy:dy + h, dx:dx + w]
            out += np.tensordot(weights[:, :, dy, dx], window, axes=([1], [1]))
    return out.transpose(1, 0, 2, 3)


def conv2d_forward_batch(x: np.ndarray, params: ConvParams) -> np.ndarray:
    out = _correlate(x, params.weights)
    out += params.biases[np.newaxis, :, np.newaxis, np.newaxis]
    return out


def conv2d_backward_batch(
    x: np.ndarray, params: ConvParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of :func:`conv2d_forward_batch` w.r.t. input, weights and biases."""
    n, c, h, w = x.shape
    expected = (n, params.out_channels, h, w)
    if grad_out.shape != expected:
        raise ShapeMismatchError("conv2d backward grad_out", grad_out.shape, expected)
    if c != params.in_channels:
        raise SpecError(f"Convolution expects {params.in_channels} input channels, got {c}")

    kh, kw = params.kernel_h, params.kernel_w
    padded = _pad(x, (kh - 1) // 2, (kw - 1) // 2)
    grad_weights = np.empty_like(params.weights, dtype=np.result_type(x, grad_out))
    for dy in range(kh):
        for dx in range(kw):
            window = padded[:, :, dy:dy + h, dx:dx + w]
            grad_weights[:, :, dy, dx] = np.tensordot(grad_out, window, axes=([0, 2, 3], [0, 2, 3]))
    grad_biases = grad_out.sum(axis=(0, 2, 3))

    # Transposed, flipped kernel maps grad_out back onto the input grid.
    flipped = params.weights.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    grad_input = _correlate(grad_out, flipped)
    return grad_input, grad_weights, grad_biases


def relu_forward_batch(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward_batch(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass the gradient where the input is strictly positive; g'(0) = 0."""
    if x.shape != grad_out.shape:
        raise ShapeMismatchError("relu backward", x.shape, grad_out.shape)
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


# Tensor-level operations

def _as_batch(t: Tensor) -> np.ndarray:
    return t.data[np.newaxis]


def conv2d_forward(input: Tensor, params: ConvParams) -> Tensor:
    if input.channels != params.in_channels:
        raise SpecError(
            f"Convolution expects {params.in_channels} input channels, got {input.channels}"
        )
    return Tensor.from_array(conv2d_forward_batch(_as_batch(input), params)[0], dtype=input.data.dtype.type)


def conv2d_backward(
    input: Tensor, params: ConvParams, grad_out: Tensor
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    expected = (params.out_channels, input.height, input.width)
    if grad_out.shape != expected:
        raise ShapeMismatchError("conv2d backward grad_out", grad_out.shape, expected)
    grad_input, grad_weights, grad_biases = conv2d_backward_batch(
        _as_batch(input), params, _as_batch(grad_out)
    )
    return Tensor.from_array(grad_input[0], dtype=input.data.dtype.type), grad_weights, grad_biases


def relu_forward(t: Tensor) -> Tensor:
    return Tensor.from_array(relu_forward_batch(t.data), dtype=t.data.dtype.type)


def relu_backward(t: Tensor, grad_out: Tensor) -> Tensor:
    return Tensor.from_array(relu_backward_batch(t.data, grad_out.data), dtype=grad_out.data.dtype.type)


def concat_channels(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise SpecError("concat_channels needs at least one tensor")
    spatial = (parts[0].height, parts[0].width)
    for part in parts[1:]:
        if (part.height, part.width) != spatial:
            raise ShapeMismatchError("concat_channels", (part.height, part.width), spatial)
    if len(parts) == 1:
        return parts[0]
    return Tensor.from_array(np.concatenate([p.data for p in parts], axis=0), dtype=parts[0].data.dtype.type)


def split_channels(t: Tensor, sizes: list[int]) -> list[Tensor]:
    if sum(sizes) != t.channels or any(s < 1 for s in sizes):
        raise SpecError(f"Cannot split {t.channels} channels into {sizes}")
    bounds = np.cumsum(sizes)[:-1]
    return [Tensor.from_array(chunk, dtype=t.data.dtype.type) for chunk in np.split(t.data, bounds, axis=0)]
