"""
Canonical network descriptions with exact parameter accounting.

The parameter count of a convolution module is
(input channels) x (filters) x (kernel area), summed over every branch.
"""

from dataclasses import dataclass
from typing import Callable

from cnnpost.errors import SpecError
from cnnpost.nn.graph import BranchSpec, LayerSpec, NetworkSpec

_b = BranchSpec.square


def build_vrcnn(residue: bool = True) -> NetworkSpec:
    """Variable-filter-size network: 4 layers, two multi-branch middle layers.

    Branches are listed larger kernel first, which fixes the concatenation order.
    """
    layers = (
        LayerSpec(1, (_b(64, 5),)),
        LayerSpec(64, (_b(16, 5), _b(32, 3))),
        LayerSpec(48, (_b(16, 3), _b(32, 1))),
        LayerSpec(48, (_b(1, 3),), relu=False),
    )
    return NetworkSpec("vrcnn" if residue else "vrcnn-plain", layers, residue=residue)


def build_arcnn() -> NetworkSpec:
    layers = (
        LayerSpec(1, (_b(64, 9),)),
        LayerSpec(64, (_b(32, 7),)),
        LayerSpec(32, (_b(16, 1),)),
        LayerSpec(16, (_b(1, 5),), relu=False),
    )
    return NetworkSpec("arcnn", layers, residue=False)


def build_vdsr(depth: int = 20, width: int = 64) -> NetworkSpec:
    """Deep residue network of 3x3 layers, `width` filters each except the single-filter output."""
    if depth < 2:
        raise SpecError(f"VDSR needs at least 2 layers, got {depth}")
    layers = [LayerSpec(1, (_b(width, 3),))]
    layers += [LayerSpec(width, (_b(width, 3),)) for _ in range(depth - 2)]
    layers.append(LayerSpec(width, (_b(1, 3),), relu=False))
    return NetworkSpec("vdsr", tuple(layers), residue=True)


def build_srcnn() -> NetworkSpec:
    layers = (
        LayerSpec(1, (_b(64, 9),)),
        LayerSpec(64, (_b(32, 5),)),
        LayerSpec(32, (_b(1, 5),), relu=False),
    )
    return NetworkSpec("srcnn", layers, residue=False)


MODELS: dict[str, Callable[[], NetworkSpec]] = {
    "vrcnn": build_vrcnn,
    "vrcnn-plain": lambda: build_vrcnn(residue=False),
    "arcnn": build_arcnn,
    "vdsr": build_vdsr,
    "srcnn": build_srcnn,
}


def build_model(name: str) -> NetworkSpec:
    try:
        return MODELS[name.lower()]()
    except KeyError:
        raise SpecError(f"Unknown model '{name}'. Known models: {', '.join(MODELS)}") from None


def param_count(spec: NetworkSpec) -> tuple[int, int]:
    """(weights, biases) of a network."""
    weights = biases = 0
    for layer in spec.layers:
        for branch in layer.branches:
            weights += layer.in_channels * branch.filters * branch.kernel_h * branch.kernel_w
            biases += branch.filters
    return weights, biases


def mac_count(spec: NetworkSpec, height: int, width: int) -> int:
    """Multiply-accumulates to filter one height x width plane (same-size outputs)."""
    return param_count(spec)[0] * height * width


@dataclass(frozen=True)
class ModuleRow:
    layer: int
    module: str
    filter_size: str
    filters: int
    parameters: int


def describe(spec: NetworkSpec) -> list[ModuleRow]:
    rows = []
    k = 0
    for i, layer in enumerate(spec.layers, start=1):
        for branch in layer.branches:
            k += 1
            rows.append(ModuleRow(
                layer=i,
                module=f"conv{k}",
                filter_size=branch.kernel_label,
                filters=branch.filters,
                parameters=layer.in_channels * branch.filters * branch.kernel_h * branch.kernel_w,
            ))
    return rows
