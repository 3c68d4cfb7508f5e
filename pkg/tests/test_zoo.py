"""
Tests for the canonical network builders and their parameter accounting.
"""

import pytest

from cnnpost.errors import SpecError
from cnnpost.nn.graph import init_params
from cnnpost.zoo import (
    MODELS,
    build_arcnn,
    build_model,
    build_srcnn,
    build_vdsr,
    build_vrcnn,
    describe,
    mac_count,
    param_count,
)


def test_vrcnn_modules():
    """Per-branch weights follow the variable-filter-size configuration."""
    rows = describe(build_vrcnn())
    assert [r.parameters for r in rows] == [1600, 25600, 18432, 6912, 1536, 432]
    assert [r.filter_size for r in rows] == ["5x5", "5x5", "3x3", "3x3", "1x1", "3x3"]
    assert [r.module for r in rows] == [f"conv{i}" for i in range(1, 7)]
    assert [r.layer for r in rows] == [1, 2, 2, 3, 3, 4]


def test_vrcnn_totals():
    """54512 weights and 161 biases; residue on."""
    spec = build_vrcnn()
    assert param_count(spec) == (54512, 161)
    assert spec.residue
    assert spec.name == "vrcnn"
    assert not build_vrcnn(residue=False).residue
    assert build_vrcnn(residue=False).name == "vrcnn-plain"


def test_arcnn_layers():
    """Four single-branch layers: 5184, 100352, 512, 400 weights; no residue."""
    spec = build_arcnn()
    assert [r.parameters for r in describe(spec)] == [5184, 100352, 512, 400]
    assert param_count(spec) == (106448, 113)
    assert not spec.residue
    assert [layer.relu for layer in spec.layers] == [True, True, True, False]


def test_vdsr_totals():
    """Twenty 3x3 layers, 64 wide: 664704 weights and 1217 biases."""
    spec = build_vdsr()
    assert len(spec.layers) == 20
    assert param_count(spec) == (576 + 18 * 36864 + 576, 19 * 64 + 1)
    assert param_count(spec)[0] == 664704
    assert spec.residue


def test_vdsr_depth_validation():
    """At least an input and an output layer."""
    with pytest.raises(SpecError):
        build_vdsr(depth=1)


def test_srcnn():
    """Three layers: 9x9x64, 5x5x32, 5x5x1."""
    assert param_count(build_srcnn()) == (5184 + 51200 + 800, 97)


def test_vrcnn_is_smaller_than_arcnn():
    """Variable filter sizes cut the parameter count roughly in half."""
    assert param_count(build_vrcnn())[0] < param_count(build_arcnn())[0]


def test_param_count_single_filter():
    """A single 1x1 filter on one channel has one weight and one bias."""
    from cnnpost.nn.graph import BranchSpec, LayerSpec, NetworkSpec

    spec = NetworkSpec("one", (LayerSpec(1, (BranchSpec.square(1, 1),), relu=False),))
    assert param_count(spec) == (1, 1)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_registry_builds_consistent_specs(name):
    """Every registered network initializes parameters matching its accounting."""
    spec = build_model(name)
    params = init_params(spec, seed=0)
    assert (params.weight_count, params.bias_count) == param_count(spec)


def test_unknown_model():
    """Unknown names list the known ones."""
    with pytest.raises(SpecError, match="vrcnn"):
        build_model("resnet")


@pytest.mark.parametrize("height,width", [(144, 176), (35, 35), (1, 1)])
def test_mac_ordering(height, width):
    """VRCNN needs fewer multiply-accumulates than AR-CNN and VDSR at any frame size."""
    vrcnn = mac_count(build_vrcnn(), height, width)
    assert vrcnn == 54512 * height * width
    assert vrcnn < mac_count(build_arcnn(), height, width)
    assert vrcnn < mac_count(build_vdsr(), height, width)
