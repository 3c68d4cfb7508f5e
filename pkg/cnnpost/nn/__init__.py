"""
Convolutional network primitives with exact forward and backward passes.

Usage:
    from cnnpost.nn import init_params, network_forward
    from cnnpost.zoo import build_vrcnn

    spec = build_vrcnn()
    params = init_params(spec, seed=0)
    output, activations = network_forward(spec, params, tensor)
"""

from cnnpost.nn.graph import (
    BranchSpec,
    LayerSpec,
    ModelParams,
    NetworkSpec,
    ParamGrads,
    backward_batch,
    filter_array,
    filter_plane,
    forward_batch,
    he_normal,
    init_params,
    network_backward,
    network_forward,
)
from cnnpost.nn.layers import (
    ConvParams,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    split_channels,
)

__all__ = [
    "BranchSpec",
    "ConvParams",
    "LayerSpec",
    "ModelParams",
    "NetworkSpec",
    "ParamGrads",
    "backward_batch",
    "concat_channels",
    "conv2d_backward",
    "conv2d_forward",
    "filter_array",
    "filter_plane",
    "forward_batch",
    "he_normal",
    "init_params",
    "network_backward",
    "network_forward",
    "relu_backward",
    "relu_forward",
    "split_channels",
]
