import numpy as np
import pytest

from conftest import (
    naive_avg_pool,
    naive_conv2d,
    naive_depthwise,
    naive_pointwise,
    naive_resize_bilinear,
    naive_resize_nearest,
)
from depthbench import micronet
from depthbench.dataset import RgbImage
from depthbench.micronet import (
    DECODER_CHANNELS,
    ENCODER_CHANNELS,
    GraphValidationError,
    LayerSpec,
    NetworkGraph,
    WrongInputShapeError,
    build_reference_net,
    forward,
    param_stats,
)

KERNEL_TOL = 1e-5


@pytest.fixture(scope="module")
def reference():
    return build_reference_net(seed=0)


@pytest.fixture(scope="module")
def vga_image():
    rng = np.random.default_rng(99)
    return RgbImage(rng.integers(0, 256, (480, 640, 3), dtype=np.uint8))


# --- primitive kernels against naive references ------------------------------


def test_conv2d_matches_naive(rng):
    x = rng.normal(size=(9, 7, 5)).astype(np.float32)
    w = rng.normal(size=(3, 3, 5, 4)).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    for stride in (1, 2):
        fast = micronet.conv2d(x, w, b, stride=stride)
        slow = naive_conv2d(x, w, b, stride=stride)
        assert fast.shape == slow.shape
        assert np.max(np.abs(fast - slow)) < KERNEL_TOL


def test_depthwise_matches_naive(rng):
    x = rng.normal(size=(9, 7, 5)).astype(np.float32)
    w = rng.normal(size=(3, 3, 5)).astype(np.float32)
    b = rng.normal(size=5).astype(np.float32)
    for stride in (1, 2):
        fast = micronet.depthwise_conv2d(x, w, b, stride=stride)
        slow = naive_depthwise(x, w, b, stride=stride)
        assert fast.shape == slow.shape
        assert np.max(np.abs(fast - slow)) < KERNEL_TOL


def test_pointwise_matches_naive(rng):
    x = rng.normal(size=(9, 7, 5)).astype(np.float32)
    w = rng.normal(size=(5, 6)).astype(np.float32)
    b = rng.normal(size=6).astype(np.float32)
    fast = micronet.pointwise_conv(x, w, b)
    assert np.max(np.abs(fast - naive_pointwise(x, w, b))) < KERNEL_TOL


def test_avg_pool_matches_naive(rng):
    x = rng.normal(size=(9, 7, 5)).astype(np.float32)
    fast = micronet.avg_pool_2x2(x)
    slow = naive_avg_pool(x)
    assert fast.shape == (4, 3, 5)
    assert np.max(np.abs(fast - slow)) < KERNEL_TOL


def test_resizes_match_naive(rng):
    x = rng.normal(size=(9, 7, 5)).astype(np.float32)
    for size in ((18, 14), (5, 3), (9, 7), (13, 11)):
        fast_n = micronet.resize_nearest(x, size)
        fast_b = micronet.resize_bilinear(x, size)
        assert np.max(np.abs(fast_n - naive_resize_nearest(x, size))) < KERNEL_TOL
        assert np.max(np.abs(fast_b - naive_resize_bilinear(x, size))) < KERNEL_TOL


def test_resize_constants():
    const = np.full((6, 5, 2), 3.25, dtype=np.float32)
    assert np.all(micronet.resize_nearest(const, (13, 9)) == 3.25)
    assert np.allclose(micronet.resize_bilinear(const, (13, 9)), 3.25, atol=0)


# --- reference net ------------------------------------------------------------


def test_build_deterministic(reference):
    _, weights = reference
    _, again = build_reference_net(seed=0)
    assert weights.buffers.keys() == again.buffers.keys()
    for name in weights.buffers:
        for key in weights.buffers[name]:
            assert np.array_equal(weights.buffers[name][key], again.buffers[name][key])
    _, other = build_reference_net(seed=1)
    assert not np.array_equal(
        weights.buffers["head"]["weight"], other.buffers["head"]["weight"]
    )


def expected_parameter_tally():
    """Independent per-layer recomputation of the parameter count."""
    total = 0
    cin = 3
    for cout in ENCODER_CHANNELS:
        total += 9 * cin + cin  # 3x3 depthwise + bias
        total += cin * cout + cout  # 1x1 pointwise + bias
        cin = cout
    skips = [3] + list(ENCODER_CHANNELS[:-1])
    for (mid, out), skip in zip(DECODER_CHANNELS, reversed(skips)):
        cat = cin + skip
        total += cat * mid + mid  # 1x1 fuse conv
        total += 9 * mid * out + out  # 3x3 conv
        cin = out
    total += 9 * cin * 1 + 1  # head
    return total


def test_param_stats_match_independent_tally(reference):
    net, weights = reference
    stats = param_stats(net, weights)
    assert stats.parameter_count == expected_parameter_tally()
    assert stats.fp32_size_bytes == 4 * stats.parameter_count
    assert weights.total_parameters() == stats.parameter_count


def test_footprint_window(reference):
    net, weights = reference
    stats = param_stats(net, weights)
    assert 2.7 <= stats.fp32_size_mb <= 4.1


def test_mac_count_head(reference):
    net, weights = reference
    stats = param_stats(net, weights)
    per_layer = {layer.name: layer for layer in stats.per_layer}
    # head: 3x3 conv 48 -> 1 at 128x160
    assert per_layer["head"].macs == 128 * 160 * 1 * 9 * 48
    assert per_layer["stem_resize"].macs == 0


def test_graph_shapes(reference):
    net, _ = reference
    shapes = net.validate()
    assert shapes["stem"] == (128, 160, 3)
    assert shapes["enc5_out"] == (4, 5, 112)
    assert shapes["dec5_out"] == (128, 160, DECODER_CHANNELS[-1][1])
    assert shapes["depth"] == (480, 640, 1)


def test_graph_rejects_bad_wiring():
    with pytest.raises(GraphValidationError):
        NetworkGraph(
            input_name="input",
            input_shape=(4, 4, 3),
            layers=(LayerSpec("l", "relu", ("ghost",), "out"),),
            output_name="out",
        ).validate()
    with pytest.raises(GraphValidationError):
        NetworkGraph(
            input_name="input",
            input_shape=(4, 4, 3),
            layers=(
                LayerSpec("up", "resize_nearest", ("input",), "big", target_size=(8, 8)),
                LayerSpec("cat", "concat", ("input", "big"), "out"),
            ),
            output_name="out",
        ).validate()


def test_forward_output_contract(reference, vga_image):
    net, weights = reference
    field = forward(net, weights, vga_image, threads=1)
    assert field.depth_m.shape == (480, 640)
    assert np.all(field.depth_m > 0)
    assert field.mask.all()


def test_forward_deterministic_and_thread_invariant(reference, vga_image):
    net, weights = reference
    one = forward(net, weights, vga_image, threads=1)
    again = forward(net, weights, vga_image, threads=1)
    four = forward(net, weights, vga_image, threads=4)
    assert np.array_equal(one.depth_m, again.depth_m)
    assert np.max(np.abs(one.depth_m - four.depth_m)) <= 1e-6


def test_forward_rejects_wrong_shape(reference):
    net, weights = reference
    small = RgbImage(np.zeros((240, 320, 3), dtype=np.uint8))
    with pytest.raises(WrongInputShapeError):
        forward(net, weights, small)
