"""
Declarative network descriptions and the exact forward/backward passes over them.

A network is an ordered list of layers; each layer runs one or more parallel
convolution branches over the same input and concatenates their outputs along
the channel axis. ReLU is applied per branch after its convolution, which is the
same as activating after concatenation. The last layer is always linear. With the
residue flag set the network input is added to the last layer output.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from cnnpost.errors import ShapeMismatchError, SpecError, StaleActivationsError
from cnnpost.nn.layers import (
    ConvParams,
    conv2d_backward_batch,
    conv2d_forward_batch,
    relu_backward_batch,
    relu_forward_batch,
)
from cnnpost.tensor import Plane, Tensor, plane_to_tensor, quantize_samples

logger = logging.getLogger(__name__)

# Inference splits tall frames into row strips of this height plus a halo.
STRIP_ROWS = 64


@dataclass(frozen=True)
class BranchSpec:
    """One convolution module: `filters` kernels of size kernel_h x kernel_w."""

    filters: int
    kernel_h: int
    kernel_w: int

    def __post_init__(self) -> None:
        if self.filters < 1:
            raise SpecError(f"A branch needs at least one filter, got {self.filters}")
        if self.kernel_h < 1 or self.kernel_w < 1 or self.kernel_h % 2 == 0 or self.kernel_w % 2 == 0:
            raise SpecError(f"Kernels must be odd and positive, got {self.kernel_h}x{self.kernel_w}")

    @classmethod
    def square(cls, filters: int, kernel: int) -> "BranchSpec":
        return cls(filters, kernel, kernel)

    @property
    def kernel_label(self) -> str:
        return f"{self.kernel_h}x{self.kernel_w}"


@dataclass(frozen=True)
class LayerSpec:
    in_channels: int
    branches: tuple[BranchSpec, ...]
    relu: bool = True

    def __post_init__(self) -> None:
        if not self.branches:
            raise SpecError("A layer needs at least one branch")
        if self.in_channels < 1:
            raise SpecError(f"A layer needs a positive input channel count, got {self.in_channels}")

    @property
    def out_channels(self) -> int:
        return sum(b.filters for b in self.branches)

    @property
    def radius(self) -> int:
        return max(max(b.kernel_h, b.kernel_w) for b in self.branches) // 2


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    residue: bool = False

    def __post_init__(self) -> None:
        if not self.layers:
            raise SpecError(f"Network '{self.name}' has no layers")
        if self.layers[0].in_channels != 1:
            raise SpecError(f"Network '{self.name}': first layer must take 1 channel, takes {self.layers[0].in_channels}")
        for i, (prev, layer) in enumerate(zip(self.layers, self.layers[1:]), start=2):
            if layer.in_channels != prev.out_channels:
                raise SpecError(
                    f"Network '{self.name}': layer {i} takes {layer.in_channels} channels "
                    f"but layer {i - 1} produces {prev.out_channels}"
                )
        if self.layers[-1].out_channels != 1:
            raise SpecError(f"Network '{self.name}': last layer must produce 1 channel, produces {self.layers[-1].out_channels}")
        if self.layers[-1].relu:
            raise SpecError(f"Network '{self.name}': the last layer must be linear")

    @property
    def receptive_radius(self) -> int:
        return sum(layer.radius for layer in self.layers)


@dataclass
class ModelParams:
    """All weights and biases of a network, per layer and per branch in spec order."""

    layers: list[list[ConvParams]] = field(default_factory=list)

    def __iter__(self) -> Iterator[ConvParams]:
        for layer in self.layers:
            yield from layer

    def named(self) -> Iterator[tuple[str, int, int, ConvParams]]:
        """Yield (module name, layer index, branch index, params); modules are conv1, conv2, ..."""
        k = 0
        for i, layer in enumerate(self.layers):
            for j, conv in enumerate(layer):
                k += 1
                yield f"conv{k}", i, j, conv

    @property
    def weight_count(self) -> int:
        return sum(c.weight_count for c in self)

    @property
    def bias_count(self) -> int:
        return sum(c.bias_count for c in self)

    @property
    def dtype(self) -> np.dtype:
        return self.layers[0][0].weights.dtype

    def copy(self) -> "ModelParams":
        return ModelParams([[c.copy() for c in layer] for layer in self.layers])

    def zeros_like(self) -> "ModelParams":
        return ModelParams([
            [ConvParams(np.zeros_like(c.weights), np.zeros_like(c.biases)) for c in layer]
            for layer in self.layers
        ])

    def astype(self, dtype: type[np.floating]) -> "ModelParams":
        return ModelParams([[c.astype(dtype) for c in layer] for layer in self.layers])

    def check_matches(self, spec: NetworkSpec) -> None:
        """Raise SpecError unless every branch has the shape the spec asks for."""
        if len(self.layers) != len(spec.layers):
            raise SpecError(f"Parameters have {len(self.layers)} layers, spec '{spec.name}' has {len(spec.layers)}")
        for i, (layer_params, layer) in enumerate(zip(self.layers, spec.layers), start=1):
            if len(layer_params) != len(layer.branches):
                raise SpecError(f"Layer {i}: parameters have {len(layer_params)} branches, spec has {len(layer.branches)}")
            for conv, branch in zip(layer_params, layer.branches):
                expected = (branch.filters, layer.in_channels, branch.kernel_h, branch.kernel_w)
                if conv.weights.shape != expected:
                    raise SpecError(f"Layer {i}: weight shape {conv.weights.shape} does not match spec {expected}")


ParamGrads = ModelParams


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], dtype: type[np.floating] = np.float64) -> np.ndarray:
    """Zero-mean Gaussian with std sqrt(2 / fan_in), fan_in = in_channels * kh * kw."""
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def init_params(spec: NetworkSpec, seed: int, dtype: type[np.floating] = np.float64) -> ModelParams:
    rng = np.random.default_rng(seed)
    layers = []
    for layer in spec.layers:
        convs = []
        for branch in layer.branches:
            shape = (branch.filters, layer.in_channels, branch.kernel_h, branch.kernel_w)
            convs.append(ConvParams(he_normal(rng, shape, dtype), np.zeros(branch.filters, dtype=dtype)))
        layers.append(convs)
    return ModelParams(layers)


# Batched passes

def forward_batch(
    spec: NetworkSpec, params: ModelParams, x: np.ndarray, keep_activations: bool = True
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run (N, 1, H, W) through the network.

    Returns the output and the activations list: the input followed by every
    layer output (post-ReLU for hidden layers, the linear last-layer output
    before the residue add). The list is empty when keep_activations is False.
    """
    if x.ndim != 4 or x.shape[1] != 1:
        raise SpecError(f"Network input must be (N, 1, H, W), got {x.shape}")
    x = x.astype(params.dtype, copy=False)
    activations = [x] if keep_activations else []
    current = x
    for i, (layer, convs) in enumerate(zip(spec.layers, params.layers)):
        outputs = [conv2d_forward_batch(current, conv) for conv in convs]
        current = outputs[0] if len(outputs) == 1 else np.concatenate(outputs, axis=1)
        if layer.relu:
            current = relu_forward_batch(current)
        if keep_activations:
            activations.append(current)
    output = current + x if spec.residue else current
    return output, activations


def backward_batch(
    spec: NetworkSpec, params: ModelParams, activations: list[np.ndarray], grad_output: np.ndarray
) -> tuple[ModelParams, np.ndarray]:
    """Gradients of the loss w.r.t. every parameter and w.r.t. the network input."""
    _check_activations(spec, activations)
    if grad_output.shape != activations[0].shape:
        raise ShapeMismatchError("network backward grad_output", grad_output.shape, activations[0].shape)

    grads: list[list[ConvParams]] = [[] for _ in spec.layers]
    grad = grad_output
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, convs = spec.layers[i], params.layers[i]
        layer_input, layer_output = activations[i], activations[i + 1]
        if layer.relu:
            grad = relu_backward_batch(layer_output, grad)
        grad_input = np.zeros_like(layer_input, dtype=grad.dtype)
        start = 0
        for conv, branch in zip(convs, layer.branches):
            branch_grad = grad[:, start:start + branch.filters]
            start += branch.filters
            gi, gw, gb = conv2d_backward_batch(layer_input, conv, branch_grad)
            grad_input += gi
            grads[i].append(ConvParams(gw, gb))
        grad = grad_input
    if spec.residue:
        grad = grad + grad_output
    return ModelParams(grads), grad


def _check_activations(spec: NetworkSpec, activations: list[np.ndarray]) -> None:
    if len(activations) != len(spec.layers) + 1:
        raise StaleActivationsError(
            f"Expected {len(spec.layers) + 1} activations for '{spec.name}', got {len(activations)}"
        )
    n, _, h, w = activations[0].shape
    for i, (layer, act) in enumerate(zip(spec.layers, activations[1:]), start=1):
        if act.shape != (n, layer.out_channels, h, w):
            raise StaleActivationsError(
                f"Activation {i} has shape {act.shape}, expected {(n, layer.out_channels, h, w)}"
            )


# Tensor-level passes

def network_forward(spec: NetworkSpec, params: ModelParams, input: Tensor) -> tuple[Tensor, list[Tensor]]:
    if input.channels != 1:
        raise SpecError(f"Network input must have 1 channel, got {input.channels}")
    params.check_matches(spec)
    output, activations = forward_batch(spec, params, input.data[np.newaxis])
    dtype = params.dtype.type
    return Tensor.from_array(output[0], dtype), [Tensor.from_array(a[0], dtype) for a in activations]


def network_backward(
    spec: NetworkSpec, params: ModelParams, activations: list[Tensor], grad_output: Tensor
) -> ParamGrads:
    grads, _ = backward_batch(
        spec, params, [a.data[np.newaxis] for a in activations], grad_output.data[np.newaxis]
    )
    return grads


def filter_array(spec: NetworkSpec, params: ModelParams, x: np.ndarray, threads: int = 1) -> np.ndarray:
    """Filter one (H, W) array of [0, 1] samples, strip by strip.

    Each strip carries a halo of receptive_radius rows on both sides, so the
    result is exactly what a whole-frame pass computes. Strip height does not
    depend on the thread count.
    """
    height = x.shape[0]
    halo = spec.receptive_radius
    starts = list(range(0, height, STRIP_ROWS))

    def run(start: int) -> np.ndarray:
        stop = min(start + STRIP_ROWS, height)
        lo, hi = max(0, start - halo), min(height, stop + halo)
        out, _ = forward_batch(spec, params, x[np.newaxis, np.newaxis, lo:hi], keep_activations=False)
        return out[0, 0, start - lo:stop - lo]

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            strips = list(pool.map(run, starts))
    else:
        strips = [run(s) for s in starts]
    return np.concatenate(strips, axis=0)


def filter_plane(spec: NetworkSpec, params: ModelParams, plane: Plane, threads: int = 1) -> Plane:
    """Run a decoded plane through the network; output size equals input size."""
    params.check_matches(spec)
    t = plane_to_tensor(plane, params.dtype.type)
    return Plane.from_array(quantize_samples(filter_array(spec, params, t.data[0], threads)))
