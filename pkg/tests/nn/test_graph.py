"""
Tests for network descriptions, initialization and whole-network passes.
"""

import numpy as np
import pytest

from cnnpost.errors import SpecError, StaleActivationsError
from cnnpost.nn.graph import (
    STRIP_ROWS,
    BranchSpec,
    LayerSpec,
    ModelParams,
    NetworkSpec,
    backward_batch,
    filter_array,
    filter_plane,
    forward_batch,
    he_normal,
    init_params,
    network_backward,
    network_forward,
)
from cnnpost.tensor import Plane, Tensor
from cnnpost.zoo import build_arcnn, build_vdsr, build_vrcnn

H = 1e-5


def _objective(spec: NetworkSpec, params: ModelParams, x: np.ndarray, proj: np.ndarray) -> tuple[float, list[np.ndarray]]:
    out, acts = forward_batch(spec, params, x)
    return float(np.sum(out * proj)), [a > 0 for a in acts[1:-1]]


def _same_masks(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(m, n) for m, n in zip(a, b))


def _check_gradients(spec: NetworkSpec, params: ModelParams, x: np.ndarray, rng: np.random.Generator,
                     max_params: int | None = None, full_modules: frozenset[int] = frozenset(),
                     all_biases: bool = False) -> int:
    """Compare backward_batch against central differences; returns the number of components checked.

    Modules in ``full_modules`` (and every bias when ``all_biases``) are checked exhaustively;
    other arrays are sampled down to ``max_params`` entries. Components whose perturbation
    moves any ReLU across its kink are skipped.
    """
    proj = rng.standard_normal(x.shape)
    _, base_masks = _objective(spec, params, x, proj)
    _, acts = forward_batch(spec, params, x)
    grads, grad_input = backward_batch(spec, params, acts, proj)

    checked = 0
    analytic, numeric = [], []

    def perturb(array: np.ndarray, idx: tuple[int, ...], arrays_x: np.ndarray) -> None:
        nonlocal checked
        original = array[idx]
        array[idx] = original + H
        f_plus, masks_plus = _objective(spec, params, arrays_x, proj)
        array[idx] = original - H
        f_minus, masks_minus = _objective(spec, params, arrays_x, proj)
        array[idx] = original
        if _same_masks(masks_plus, base_masks) and _same_masks(masks_minus, base_masks):
            numeric.append((f_plus - f_minus) / (2 * H))
            checked += 1
        else:
            numeric.append(None)

    for module, (conv, grad) in enumerate(zip(params, grads)):
        for array, garray, is_bias in ((conv.weights, grad.weights, False), (conv.biases, grad.biases, True)):
            indices = list(np.ndindex(array.shape))
            full = module in full_modules or (is_bias and all_biases)
            if not full and max_params is not None and len(indices) > max_params:
                picks = rng.choice(len(indices), size=max_params, replace=False)
                indices = [indices[i] for i in picks]
            for idx in indices:
                perturb(array, idx, x)
                analytic.append(garray[idx])

    x_work = x.copy()
    for idx in np.ndindex(x.shape):
        perturb(x_work, idx, x_work)
        analytic.append(grad_input[idx])

    pairs = [(a, n) for a, n in zip(analytic, numeric) if n is not None]
    a_vals = np.array([p[0] for p in pairs])
    n_vals = np.array([p[1] for p in pairs])
    np.testing.assert_allclose(a_vals, n_vals, rtol=1e-4, atol=1e-7)
    return checked


def _check_directions(spec: NetworkSpec, params: ModelParams, x: np.ndarray, rng: np.random.Generator,
                      count: int) -> int:
    """Directional derivatives along random unit vectors over every parameter at once."""
    proj = rng.standard_normal(x.shape)
    _, base_masks = _objective(spec, params, x, proj)
    _, acts = forward_batch(spec, params, x)
    grads, _ = backward_batch(spec, params, acts, proj)
    arrays = [a for conv in params for a in (conv.weights, conv.biases)]
    garrays = [g for grad in grads for g in (grad.weights, grad.biases)]
    originals = [a.copy() for a in arrays]

    checked = 0
    for _ in range(count):
        direction = [rng.standard_normal(a.shape) for a in arrays]
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in direction))
        direction = [d / norm for d in direction]
        values = []
        for sign in (1.0, -1.0):
            for a, o, d in zip(arrays, originals, direction):
                a[...] = o + sign * H * d
            values.append(_objective(spec, params, x, proj))
        for a, o in zip(arrays, originals):
            a[...] = o
        (f_plus, masks_plus), (f_minus, masks_minus) = values
        if not (_same_masks(masks_plus, base_masks) and _same_masks(masks_minus, base_masks)):
            continue
        expected = sum(float(np.sum(g * d)) for g, d in zip(garrays, direction))
        np.testing.assert_allclose((f_plus - f_minus) / (2 * H), expected, rtol=1e-4, atol=1e-7)
        checked += 1
    return checked


def _single_layer(kernel: int = 1, residue: bool = True) -> NetworkSpec:
    return NetworkSpec("tiny", (LayerSpec(1, (BranchSpec.square(1, kernel),), relu=False),), residue=residue)


def test_spec_validates_channel_chaining():
    """Consecutive layers must agree on channel counts."""
    with pytest.raises(SpecError):
        NetworkSpec("bad", (
            LayerSpec(1, (BranchSpec.square(8, 3),)),
            LayerSpec(4, (BranchSpec.square(1, 3),), relu=False),
        ))


def test_spec_requires_single_channel_ends_and_linear_output():
    """First layer takes 1 channel, last produces 1 and has no ReLU."""
    with pytest.raises(SpecError):
        NetworkSpec("bad", (LayerSpec(2, (BranchSpec.square(1, 3),), relu=False),))
    with pytest.raises(SpecError):
        NetworkSpec("bad", (LayerSpec(1, (BranchSpec.square(2, 3),), relu=False),))
    with pytest.raises(SpecError):
        NetworkSpec("bad", (LayerSpec(1, (BranchSpec.square(1, 3),), relu=True),))


def test_layer_output_channels_and_radius():
    """Output channels are the sum over branches; the radius follows the largest kernel."""
    layer = LayerSpec(64, (BranchSpec.square(16, 5), BranchSpec.square(32, 3)))
    assert layer.out_channels == 48
    assert layer.radius == 2
    assert build_vrcnn().receptive_radius == 2 + 2 + 1 + 1


def test_init_is_deterministic():
    """The same seed gives bit-identical parameters; biases start at zero."""
    spec = build_vrcnn()
    a = init_params(spec, seed=11)
    b = init_params(spec, seed=11)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.weights, pb.weights)
        assert not pa.biases.any()
    c = init_params(spec, seed=12)
    assert not np.array_equal(a.layers[0][0].weights, c.layers[0][0].weights)


def test_he_normal_std():
    """Empirical std over 10^6 draws with fan_in 25 is within 1% of sqrt(2/25)."""
    draws = he_normal(np.random.default_rng(0), (40000, 1, 5, 5))
    assert draws.size == 10**6
    assert abs(draws.std() / np.sqrt(2 / 25) - 1) < 0.01
    assert abs(draws.mean()) < 0.01 * np.sqrt(2 / 25)


@pytest.mark.parametrize("spec", [build_vrcnn(), build_vdsr(depth=4), _single_layer(3)], ids=lambda s: s.name)
def test_residue_network_with_zero_params_is_identity(spec):
    """Zero weights and biases plus the residue path reproduce the input exactly."""
    params = init_params(spec, seed=0).zeros_like()
    x = Tensor.from_array(np.random.default_rng(1).random((1, 9, 13)))
    out, _ = network_forward(spec, params, x)
    np.testing.assert_array_equal(out.data, x.data)


def test_plain_network_with_zero_weights_outputs_last_bias():
    """Without residue and with zero weights the output is the last layer's bias."""
    spec = build_arcnn()
    params = init_params(spec, seed=0).zeros_like()
    params.layers[-1][0].biases[0] = 0.3
    out, _ = network_forward(spec, params, Tensor.from_array(np.random.default_rng(0).random((1, 6, 6))))
    np.testing.assert_array_equal(out.data, np.full((1, 6, 6), 0.3))


def test_vrcnn_output_shape():
    """A 35x35 sample comes out 1x35x35."""
    spec = build_vrcnn()
    out, activations = network_forward(spec, init_params(spec, seed=0), Tensor.zeros(1, 35, 35))
    assert out.shape == (1, 35, 35)
    assert [a.channels for a in activations] == [1, 64, 48, 48, 1]


@pytest.mark.parametrize("height,width", [(1, 1), (2, 7), (10, 3)])
def test_shape_preservation(height, width):
    """Any input size survives every layer."""
    spec = build_vrcnn()
    out, _ = network_forward(spec, init_params(spec, seed=1), Tensor.zeros(1, height, width))
    assert out.shape == (1, height, width)


def test_param_spec_mismatch():
    """Parameters of another network are rejected."""
    with pytest.raises(SpecError):
        network_forward(build_vrcnn(), init_params(build_arcnn(), seed=0), Tensor.zeros(1, 4, 4))


def test_zero_grad_output_gives_zero_grads():
    """A zero upstream gradient produces zero parameter gradients."""
    spec = build_vrcnn()
    params = init_params(spec, seed=0)
    x = Tensor.from_array(np.random.default_rng(0).random((1, 6, 6)))
    _, activations = network_forward(spec, params, x)
    grads = network_backward(spec, params, activations, Tensor.zeros(1, 6, 6))
    assert all(not g.weights.any() and not g.biases.any() for g in grads)


def test_single_1x1_residue_gradient_is_input():
    """For output = w x + b + x, d(output at p)/dw equals the input value at p."""
    spec = _single_layer(1)
    params = init_params(spec, seed=0)
    x = np.random.default_rng(2).random((1, 3, 3))
    _, activations = network_forward(spec, params, Tensor.from_array(x))
    seed = np.zeros((1, 3, 3))
    seed[0, 1, 2] = 1.0
    grads = network_backward(spec, params, activations, Tensor.from_array(seed))
    assert grads.layers[0][0].weights[0, 0, 0, 0] == x[0, 1, 2]
    assert grads.layers[0][0].biases[0] == 1.0


def test_stale_activations():
    """Activations that do not belong to the spec are refused."""
    spec = build_vrcnn()
    params = init_params(spec, seed=0)
    x = np.zeros((1, 1, 4, 4))
    _, acts = forward_batch(spec, params, x)
    with pytest.raises(StaleActivationsError):
        backward_batch(spec, params, acts[:-1], np.zeros_like(x))
    other = build_arcnn()
    _, other_acts = forward_batch(other, init_params(other, seed=0), x)
    with pytest.raises(StaleActivationsError):
        backward_batch(spec, params, other_acts, np.zeros_like(x))


def test_vrcnn_gradients_match_finite_differences():
    """Full VRCNN on an 8x8 input: every bias, every weight of conv1, conv5 and conv6,
    sampled weights of the rest and every input gradient."""
    rng = np.random.default_rng(42)
    spec = build_vrcnn()
    params = init_params(spec, seed=42)
    for conv in params:
        conv.biases[:] = rng.normal(0.0, 0.05, conv.biases.shape)
    x = rng.random((1, 1, 8, 8))
    # conv1, conv5, conv6 in module order
    full = frozenset({0, 4, 5})
    checked = _check_gradients(spec, params, x, rng, max_params=20, full_modules=full, all_biases=True)
    total_full = 1600 + 32 * 48 + 48 * 9 + 161
    assert checked > 0.9 * total_full


def test_vrcnn_directional_derivatives():
    """Random directions through all 54,673 VRCNN parameters agree with backward_batch."""
    rng = np.random.default_rng(11)
    spec = build_vrcnn()
    params = init_params(spec, seed=11)
    for conv in params:
        conv.biases[:] = rng.normal(0.0, 0.05, conv.biases.shape)
    x = rng.random((2, 1, 8, 8))
    assert _check_directions(spec, params, x, rng, count=12) >= 6


def _random_spec(rng: np.random.Generator, index: int) -> NetworkSpec:
    kernels = [1, 3, 5, 7, 9]
    depth = int(rng.integers(1, 4))
    layers = []
    channels = 1
    for i in range(depth):
        last = i == depth - 1
        if last:
            branches = (BranchSpec.square(1, int(rng.choice(kernels))),)
        else:
            n_branches = int(rng.integers(1, 3))
            branches = tuple(BranchSpec.square(int(rng.integers(1, 5)), int(rng.choice(kernels))) for _ in range(n_branches))
        layers.append(LayerSpec(channels, branches, relu=not last))
        channels = layers[-1].out_channels
    return NetworkSpec(f"random{index}", tuple(layers), residue=bool(rng.integers(0, 2)))


def test_random_networks_match_finite_differences():
    """50 random small networks (<= 8x8, <= 8 channels, kernels 1..9), every parameter checked."""
    rng = np.random.default_rng(7)
    for i in range(50):
        spec = _random_spec(rng, i)
        params = init_params(spec, seed=i)
        for conv in params:
            conv.biases[:] = rng.normal(0.0, 0.1, conv.biases.shape)
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        x = rng.random((1, 1, h, w))
        _check_gradients(spec, params, x, rng)


def test_filter_plane_is_thread_independent():
    """Strip-parallel filtering gives the same plane for any thread count."""
    spec = build_vrcnn()
    params = init_params(spec, seed=3)
    plane = Plane.from_array(np.random.default_rng(0).integers(0, 256, (2 * STRIP_ROWS + 20, 30)))
    single = filter_plane(spec, params, plane, threads=1)
    assert single.shape == plane.shape
    assert filter_plane(spec, params, plane, threads=3) == single


def test_strips_match_whole_frame():
    """The halo makes strip-wise filtering equal the whole-frame pass."""
    spec = build_vrcnn()
    params = init_params(spec, seed=4)
    x = np.random.default_rng(1).random((STRIP_ROWS + 17, 21))
    whole, _ = forward_batch(spec, params, x[np.newaxis, np.newaxis], keep_activations=False)
    np.testing.assert_allclose(filter_array(spec, params, x, threads=2), whole[0, 0], rtol=0, atol=1e-12)


def test_identity_filter_keeps_plane():
    """A zero-parameter residue network leaves decoded pixels untouched."""
    spec = build_vrcnn()
    params = init_params(spec, seed=0).zeros_like()
    plane = Plane.from_array(np.random.default_rng(9).integers(0, 256, (20, 24)))
    assert filter_plane(spec, params, plane) == plane
