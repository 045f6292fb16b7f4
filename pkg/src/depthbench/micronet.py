"""Deterministic CPU inference engine for the challenge-winning network shape.

The graph mirrors the fastest submitted architecture at parameter parity: a
640x480 RGB input scaled to [0,1] and bilinear-resized to 160x128, five
encoder blocks of depthwise-separable convolutions (3x3 depthwise stride 2 +
1x1 pointwise, hard-swish) with channels 16/24/40/80/112, five decoder stages
of nearest x2 upsampling fused with the matching encoder skip (concat, 1x1
conv, 3x3 conv, relu), a single-channel head at 160x128 and a final nearest
resize back to 640x480 with a softplus to keep depths positive.

Weights are RANDOM (seeded He-uniform), never trained: predictions carry no
fidelity meaning whatsoever. The network exists as a structurally faithful,
reproducible workload for latency benchmarking. The fp32 footprint lands near
the winning submission's published 3.4 MB model size.

Execution is deterministic: convolutions are computed one output row at a
time with a fixed per-row reduction order, and worker threads only distribute
whole rows, so results are bit-identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import MetricDepthField, RgbImage

INPUT_SIZE = (480, 640)  # (h, w) of the RGB input
BACKBONE_SIZE = (128, 160)  # (h, w) the encoder/decoder operate at
ENCODER_CHANNELS = (16, 24, 40, 80, 112)
DECODER_CHANNELS = ((224, 224), (128, 128), (96, 96), (64, 64), (48, 48))  # (mid, out)

LAYER_KINDS = (
    "conv2d",
    "depthwise_conv2d",
    "pointwise_conv",
    "hard_swish",
    "relu",
    "avg_pool",
    "resize_nearest",
    "resize_bilinear",
    "concat",
    "ffm_fuse",
)


class GraphValidationError(ValueError):
    """Layer graph is inconsistent (shapes, ordering or unknown tensors)."""


class WrongInputShapeError(ValueError):
    """forward() expects a 640x480 RGB input."""


@dataclass(frozen=True)
class LayerSpec:
    """One declarative layer: kind, consumed tensors, produced tensor, parameters."""

    name: str
    kind: str
    inputs: tuple[str, ...]
    output: str
    out_channels: int | None = None
    mid_channels: int | None = None  # ffm_fuse only: width of the 1x1 fusion conv
    kernel: int = 3
    stride: int = 1
    target_size: tuple[int, int] | None = None  # (h, w) for resizes


@dataclass(frozen=True)
class NetworkGraph:
    input_name: str
    input_shape: tuple[int, int, int]  # (h, w, c)
    layers: tuple[LayerSpec, ...]
    output_name: str

    def validate(self) -> dict[str, tuple[int, int, int]]:
        """Infer and check every tensor shape; returns name -> (h, w, c)."""
        shapes: dict[str, tuple[int, int, int]] = {self.input_name: self.input_shape}
        for layer in self.layers:
            if layer.kind not in LAYER_KINDS:
                raise GraphValidationError(f"{layer.name}: unknown kind {layer.kind!r}")
            for tensor in layer.inputs:
                if tensor not in shapes:
                    raise GraphValidationError(
                        f"{layer.name}: consumes {tensor!r} before it is produced"
                    )
            if layer.output in shapes:
                raise GraphValidationError(f"{layer.name}: re-defines tensor {layer.output!r}")
            shapes[layer.output] = _infer_shape(layer, [shapes[t] for t in layer.inputs])
        if self.output_name not in shapes:
            raise GraphValidationError(f"output tensor {self.output_name!r} is never produced")
        return shapes


def _conv_out_size(size: int, kernel: int, stride: int) -> int:
    pad = kernel // 2
    return (size + 2 * pad - kernel) // stride + 1


def _infer_shape(layer: LayerSpec, in_shapes: list[tuple[int, int, int]]) -> tuple[int, int, int]:
    kind = layer.kind
    if kind in ("hard_swish", "relu"):
        return in_shapes[0]
    if kind == "avg_pool":
        h, w, c = in_shapes[0]
        return (h // 2, w // 2, c)
    if kind in ("resize_nearest", "resize_bilinear"):
        h, w, c = in_shapes[0]
        if layer.target_size is None:
            raise GraphValidationError(f"{layer.name}: resize needs target_size")
        return (layer.target_size[0], layer.target_size[1], c)
    if kind == "concat":
        h, w, _ = in_shapes[0]
        for shape in in_shapes[1:]:
            if shape[:2] != (h, w):
                raise GraphValidationError(f"{layer.name}: concat spatial mismatch {in_shapes}")
        return (h, w, sum(s[2] for s in in_shapes))
    if kind == "conv2d":
        h, w, _ = in_shapes[0]
        return (
            _conv_out_size(h, layer.kernel, layer.stride),
            _conv_out_size(w, layer.kernel, layer.stride),
            layer.out_channels,
        )
    if kind == "depthwise_conv2d":
        h, w, c = in_shapes[0]
        return (
            _conv_out_size(h, layer.kernel, layer.stride),
            _conv_out_size(w, layer.kernel, layer.stride),
            c,
        )
    if kind == "pointwise_conv":
        h, w, _ = in_shapes[0]
        return (h, w, layer.out_channels)
    if kind == "ffm_fuse":
        h, w, _ = in_shapes[0]
        for shape in in_shapes[1:]:
            if shape[:2] != (h, w):
                raise GraphValidationError(f"{layer.name}: fuse spatial mismatch {in_shapes}")
        return (h, w, layer.out_channels)
    raise GraphValidationError(f"{layer.name}: unhandled kind {kind!r}")


@dataclass(frozen=True)
class WeightStore:
    """Per-layer fp32 weight/bias buffers, fully determined by the seed."""

    seed: int
    buffers: dict[str, dict[str, np.ndarray]]

    def total_parameters(self) -> int:
        return sum(int(arr.size) for layer in self.buffers.values() for arr in layer.values())


@dataclass(frozen=True)
class LayerStats:
    name: str
    kind: str
    parameters: int
    macs: int


@dataclass(frozen=True)
class ParamStats:
    parameter_count: int
    fp32_size_bytes: int
    per_layer: tuple[LayerStats, ...]

    @property
    def fp32_size_mb(self) -> float:
        return self.fp32_size_bytes / 2**20

    @property
    def total_macs(self) -> int:
        return sum(layer.macs for layer in self.per_layer)


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _bias(rng: np.random.Generator, size: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=size).astype(np.float32)


def _layer_weight_specs(layer: LayerSpec, in_channels: int):
    """Yield (buffer_name, shape, fan_in) pairs for one layer, in init order."""
    k = layer.kernel
    if layer.kind == "conv2d":
        yield "weight", (k, k, in_channels, layer.out_channels), k * k * in_channels
        yield "bias", (layer.out_channels,), k * k * in_channels
    elif layer.kind == "depthwise_conv2d":
        yield "weight", (k, k, in_channels), k * k
        yield "bias", (in_channels,), k * k
    elif layer.kind == "pointwise_conv":
        yield "weight", (in_channels, layer.out_channels), in_channels
        yield "bias", (layer.out_channels,), in_channels
    elif layer.kind == "ffm_fuse":
        mid = layer.mid_channels
        yield "fuse_weight", (in_channels, mid), in_channels
        yield "fuse_bias", (mid,), in_channels
        yield "conv_weight", (3, 3, mid, layer.out_channels), 9 * mid
        yield "conv_bias", (layer.out_channels,), 9 * mid


def build_reference_net(seed: int = 0) -> tuple[NetworkGraph, WeightStore]:
    """Construct the reference graph and its seeded random weights.

    Calling twice with the same seed reproduces bit-identical buffers.
    """
    layers: list[LayerSpec] = []
    h, w = BACKBONE_SIZE
    layers.append(
        LayerSpec("stem_resize", "resize_bilinear", ("input",), "stem", target_size=(h, w))
    )
    prev = "stem"
    skips = ["stem"]  # resolution-matched tensors for the decoder, innermost last
    for i, channels in enumerate(ENCODER_CHANNELS, start=1):
        layers.append(
            LayerSpec(f"enc{i}_dw", "depthwise_conv2d", (prev,), f"enc{i}_dw_out", stride=2)
        )
        layers.append(
            LayerSpec(
                f"enc{i}_pw", "pointwise_conv", (f"enc{i}_dw_out",), f"enc{i}_pw_out",
                out_channels=channels, kernel=1,
            )
        )
        layers.append(LayerSpec(f"enc{i}_act", "hard_swish", (f"enc{i}_pw_out",), f"enc{i}_out"))
        prev = f"enc{i}_out"
        skips.append(prev)
        h, w = _conv_out_size(h, 3, 2), _conv_out_size(w, 3, 2)

    skips.pop()  # the deepest encoder output is the decoder input, not a skip
    for s, (mid, out) in enumerate(DECODER_CHANNELS, start=1):
        h, w = h * 2, w * 2
        skip = skips.pop()
        layers.append(
            LayerSpec(f"dec{s}_up", "resize_nearest", (prev,), f"dec{s}_up_out", target_size=(h, w))
        )
        layers.append(
            LayerSpec(
                f"dec{s}_ffm", "ffm_fuse", (f"dec{s}_up_out", skip), f"dec{s}_out",
                mid_channels=mid, out_channels=out,
            )
        )
        prev = f"dec{s}_out"

    layers.append(LayerSpec("head", "conv2d", (prev,), "head_out", out_channels=1))
    layers.append(
        LayerSpec(
            "output_resize", "resize_nearest", ("head_out",), "depth", target_size=INPUT_SIZE
        )
    )

    graph = NetworkGraph(
        input_name="input",
        input_shape=(*INPUT_SIZE, 3),
        layers=tuple(layers),
        output_name="depth",
    )
    shapes = graph.validate()

    rng = np.random.default_rng(seed)
    buffers: dict[str, dict[str, np.ndarray]] = {}
    for layer in graph.layers:
        in_channels = sum(shapes[t][2] for t in layer.inputs)
        specs = list(_layer_weight_specs(layer, in_channels))
        if specs:
            buffers[layer.name] = {
                name: (_bias(rng, shape[0], fan_in) if name.endswith("bias")
                       else _he_uniform(rng, shape, fan_in))
                for name, shape, fan_in in specs
            }
    return graph, WeightStore(seed=seed, buffers=buffers)


def param_stats(net: NetworkGraph, weights: WeightStore) -> ParamStats:
    """Exact parameter and MAC counts per layer at the reference input size."""
    shapes = net.validate()
    per_layer = []
    total = 0
    for layer in net.layers:
        in_channels = sum(shapes[t][2] for t in layer.inputs)
        params = 0
        for _, shape, _ in _layer_weight_specs(layer, in_channels):
            params += int(np.prod(shape))
        out_h, out_w, out_c = shapes[layer.output]
        if layer.kind == "conv2d":
            macs = out_h * out_w * out_c * layer.kernel**2 * in_channels
        elif layer.kind == "depthwise_conv2d":
            macs = out_h * out_w * out_c * layer.kernel**2
        elif layer.kind == "pointwise_conv":
            macs = out_h * out_w * out_c * in_channels
        elif layer.kind == "ffm_fuse":
            macs = out_h * out_w * layer.mid_channels * in_channels
            macs += out_h * out_w * out_c * 9 * layer.mid_channels
        else:
            macs = 0
        total += params
        per_layer.append(LayerStats(layer.name, layer.kind, params, macs))
    stored = weights.total_parameters()
    if stored != total:
        raise GraphValidationError(f"weight store holds {stored} params, specs say {total}")
    return ParamStats(
        parameter_count=total, fp32_size_bytes=4 * total, per_layer=tuple(per_layer)
    )


# ---------------------------------------------------------------------------
# Kernels. Each convolution computes one output row per call with a fixed
# reduction order, so distributing rows over threads cannot change results.
# ---------------------------------------------------------------------------

RowRunner = Callable[[Callable[[int], None], int], None]


def _serial_rows(fn: Callable[[int], None], n_rows: int) -> None:
    for i in range(n_rows):
        fn(i)


def conv2d(x, weight, bias, stride: int = 1, row_runner: RowRunner = _serial_rows):
    """kxk convolution, zero padding k//2; x (h, w, cin), weight (k, k, cin, cout)."""
    k = weight.shape[0]
    cout = weight.shape[3]
    pad = k // 2
    h, w = x.shape[:2]
    out_h, out_w = _conv_out_size(h, k, stride), _conv_out_size(w, k, stride)
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    wmat = weight.reshape(-1, cout)
    out = np.empty((out_h, out_w, cout), dtype=np.float32)

    def run_row(oy: int) -> None:
        iy = oy * stride
        patch = np.empty((out_w, k, k, x.shape[2]), dtype=np.float32)
        for ky in range(k):
            for kx in range(k):
                patch[:, ky, kx, :] = xp[iy + ky, kx : kx + out_w * stride : stride, :]
        out[oy] = patch.reshape(out_w, -1) @ wmat + bias

    row_runner(run_row, out_h)
    return out


def depthwise_conv2d(x, weight, bias, stride: int = 1, row_runner: RowRunner = _serial_rows):
    """Per-channel kxk convolution; weight (k, k, c)."""
    k = weight.shape[0]
    pad = k // 2
    h, w, c = x.shape
    out_h, out_w = _conv_out_size(h, k, stride), _conv_out_size(w, k, stride)
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    out = np.empty((out_h, out_w, c), dtype=np.float32)

    def run_row(oy: int) -> None:
        iy = oy * stride
        acc = np.zeros((out_w, c), dtype=np.float32)
        for ky in range(k):
            row = xp[iy + ky]
            for kx in range(k):
                acc += row[kx : kx + out_w * stride : stride, :] * weight[ky, kx]
        out[oy] = acc + bias

    row_runner(run_row, out_h)
    return out


def pointwise_conv(x, weight, bias, row_runner: RowRunner = _serial_rows):
    """1x1 cross-channel mixing; weight (cin, cout)."""
    h = x.shape[0]
    out = np.empty((h, x.shape[1], weight.shape[1]), dtype=np.float32)

    def run_row(oy: int) -> None:
        out[oy] = x[oy] @ weight + bias

    row_runner(run_row, h)
    return out


def hard_swish(x):
    return x * np.clip(x + 3.0, 0.0, 6.0) * np.float32(1.0 / 6.0)


def relu(x):
    return np.maximum(x, 0.0)


def avg_pool_2x2(x):
    """2x2 average pooling, stride 2; odd trailing rows/columns are dropped."""
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    t = x[: 2 * h2, : 2 * w2]
    return (t[0::2, 0::2] + t[0::2, 1::2] + t[1::2, 0::2] + t[1::2, 1::2]) * np.float32(0.25)


def resize_nearest(x, size: tuple[int, int]):
    """Nearest-neighbor resize to (h, w) with half-pixel source mapping."""
    th, tw = size
    h, w = x.shape[:2]
    ys = np.minimum(((np.arange(th) + 0.5) * (h / th)).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(tw) + 0.5) * (w / tw)).astype(np.int64), w - 1)
    return x[ys][:, xs]


def resize_bilinear(x, size: tuple[int, int]):
    """Bilinear resize to (h, w) with half-pixel centers; preserves constants."""
    th, tw = size
    h, w = x.shape[:2]
    sy = np.clip((np.arange(th) + 0.5) * (h / th) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(tw) + 0.5) * (w / tw) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (sy - y0).astype(np.float32)[:, None, None]
    tx = (sx - x0).astype(np.float32)[None, :, None]
    top = x[y0][:, x0] * (1 - tx) + x[y0][:, x1] * tx
    bottom = x[y1][:, x0] * (1 - tx) + x[y1][:, x1] * tx
    return top * (1 - ty) + bottom * ty


def _softplus(x):
    return np.logaddexp(0.0, x.astype(np.float64))


def forward(
    net: NetworkGraph, weights: WeightStore, rgb: RgbImage, threads: int = 1
) -> MetricDepthField:
    """Run the network on a 640x480 RGB image; returns positive depths in meters.

    ``threads`` only distributes convolution rows across a worker pool; the
    result is bit-identical for any thread count.
    """
    if (rgb.height, rgb.width) != INPUT_SIZE:
        raise WrongInputShapeError(
            f"expected {INPUT_SIZE[1]}x{INPUT_SIZE[0]} RGB input, got {rgb.width}x{rgb.height}"
        )
    if threads < 1:
        raise ValueError("threads must be >= 1")
    shapes = net.validate()
    tensors: dict[str, np.ndarray] = {
        net.input_name: rgb.values.astype(np.float32) / np.float32(255.0)
    }

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    if executor is None:
        row_runner: RowRunner = _serial_rows
    else:
        def row_runner(fn, n_rows):
            list(executor.map(fn, range(n_rows)))

    try:
        for layer in net.layers:
            ins = [tensors[t] for t in layer.inputs]
            buf = weights.buffers.get(layer.name, {})
            kind = layer.kind
            if kind == "conv2d":
                result = conv2d(ins[0], buf["weight"], buf["bias"], layer.stride, row_runner)
            elif kind == "depthwise_conv2d":
                result = depthwise_conv2d(
                    ins[0], buf["weight"], buf["bias"], layer.stride, row_runner
                )
            elif kind == "pointwise_conv":
                result = pointwise_conv(ins[0], buf["weight"], buf["bias"], row_runner)
            elif kind == "hard_swish":
                result = hard_swish(ins[0])
            elif kind == "relu":
                result = relu(ins[0])
            elif kind == "avg_pool":
                result = avg_pool_2x2(ins[0])
            elif kind == "resize_nearest":
                result = resize_nearest(ins[0], layer.target_size)
            elif kind == "resize_bilinear":
                result = resize_bilinear(ins[0], layer.target_size)
            elif kind == "concat":
                result = np.concatenate(ins, axis=2)
            elif kind == "ffm_fuse":
                fused = np.concatenate(ins, axis=2)
                mid = pointwise_conv(fused, buf["fuse_weight"], buf["fuse_bias"], row_runner)
                result = relu(conv2d(mid, buf["conv_weight"], buf["conv_bias"], 1, row_runner))
            else:  # pragma: no cover - validate() rejects unknown kinds
                raise GraphValidationError(f"unhandled kind {kind!r}")
            if result.shape != shapes[layer.output]:
                raise GraphValidationError(
                    f"{layer.name}: runtime shape {result.shape} != declared {shapes[layer.output]}"
                )
            tensors[layer.output] = result
    finally:
        if executor is not None:
            executor.shutdown()

    depth = np.maximum(_softplus(tensors[net.output_name][:, :, 0]), 1e-12)
    return MetricDepthField(depth_m=depth, mask=np.ones(depth.shape, dtype=bool))
