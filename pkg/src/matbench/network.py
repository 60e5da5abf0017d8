"""Forward-only layer engine with a designated feature tap.

Activations are float64 arrays shaped (height, width, channels); an image is
the same thing with values in [0, 1]. The feature vector of an image is the
row-major flattening of the activation flowing into the tap point; layers
past the tap are never executed.

Weights are not learned. Every parameterised layer draws its flat parameter
sequence from a SplitMix64 stream keyed by the network seed xor
(layer_index * golden gamma), each draw mapped to 0.1 * (2u - 1) with
u in [0, 1). That makes features bit-identical for identical
(spec, seed, image) and keeps layers independent: editing a layer after the
tap can never change the feature.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    CenterOutOfBounds,
    DegeneratePatch,
    InvalidSpec,
    NonPositiveOutput,
    ParseError,
    ShapeMismatch,
)
from .rng import GOLDEN_GAMMA, MASK64, uniform_array

Shape = tuple[int, int, int]


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    out_units: int = 0
    branches: tuple[int, int, int, int] = (0, 0, 0, 0)


def conv(out_channels: int, kernel: int, stride: int = 1, pad: int = 0) -> LayerSpec:
    if out_channels < 1 or kernel < 1 or stride < 1 or pad < 0:
        raise InvalidSpec(f"bad conv parameters ({out_channels}, {kernel}, {stride}, {pad})")
    return LayerSpec("conv", out_channels=out_channels, kernel=kernel, stride=stride, pad=pad)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool(kernel: int, stride: int) -> LayerSpec:
    if kernel < 1 or stride < 1:
        raise InvalidSpec(f"bad maxpool parameters ({kernel}, {stride})")
    return LayerSpec("maxpool", kernel=kernel, stride=stride)


def avgpool(kernel: int, stride: int) -> LayerSpec:
    if kernel < 1 or stride < 1:
        raise InvalidSpec(f"bad avgpool parameters ({kernel}, {stride})")
    return LayerSpec("avgpool", kernel=kernel, stride=stride)


def fc(out_units: int) -> LayerSpec:
    if out_units < 1:
        raise InvalidSpec(f"bad fc width {out_units}")
    return LayerSpec("fc", out_units=out_units)


def inception(b1: int, b2: int, b3: int, b4: int) -> LayerSpec:
    if min(b1, b2, b3, b4) < 1:
        raise InvalidSpec(f"inception branch widths must be >= 1, got {(b1, b2, b3, b4)}")
    return LayerSpec("inception", branches=(b1, b2, b3, b4))


def resblock(out_channels: int, stride: int = 1) -> LayerSpec:
    if out_channels < 1 or stride < 1:
        raise InvalidSpec(f"bad resblock parameters ({out_channels}, {stride})")
    return LayerSpec("resblock", out_channels=out_channels, stride=stride)


def tap() -> LayerSpec:
    return LayerSpec("tap")


@dataclass(eq=False)
class FeatureVector:
    """Flattened tap activation of one image."""

    values: np.ndarray
    source_image: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.source_image == other.source_image and np.array_equal(
            self.values, other.values
        )


def layer_output_shape(in_shape: Shape, layer: LayerSpec) -> Shape:
    """Shape arithmetic for a single layer; raises NonPositiveOutput when it collapses."""
    h, w, c = in_shape
    if h < 1 or w < 1 or c < 1:
        raise NonPositiveOutput(f"input shape {in_shape} is not positive")
    if layer.kind == "conv":
        oh = (h - layer.kernel + 2 * layer.pad) // layer.stride + 1
        ow = (w - layer.kernel + 2 * layer.pad) // layer.stride + 1
        out = (oh, ow, layer.out_channels)
    elif layer.kind in ("maxpool", "avgpool"):
        oh = (h - layer.kernel) // layer.stride + 1
        ow = (w - layer.kernel) // layer.stride + 1
        out = (oh, ow, c)
    elif layer.kind == "fc":
        out = (1, 1, layer.out_units)
    elif layer.kind in ("relu", "tap"):
        out = (h, w, c)
    elif layer.kind == "inception":
        out = (h, w, sum(layer.branches))
    elif layer.kind == "resblock":
        oh = (h - 1) // layer.stride + 1
        ow = (w - 1) // layer.stride + 1
        out = (oh, ow, layer.out_channels)
    else:
        raise InvalidSpec(f"unknown layer kind {layer.kind!r}")
    if out[0] < 1 or out[1] < 1:
        raise NonPositiveOutput(f"{layer.kind} collapses {in_shape} to {out}")
    return out


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: Shape
    layers: tuple[LayerSpec, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise InvalidSpec(f"bad input shape {self.input_shape}")
        if self.seed < 0:
            raise InvalidSpec("seed must be a non-negative integer")
        taps = [i for i, l in enumerate(self.layers) if l.kind == "tap"]
        if len(taps) > 1:
            raise InvalidSpec("at most one tap per network")
        if not taps and not any(l.kind == "fc" for l in self.layers):
            raise InvalidSpec("network needs an explicit tap or a final fc layer")
        shape = self.input_shape
        for layer in self.layers:
            try:
                shape = layer_output_shape(shape, layer)
            except NonPositiveOutput as err:
                raise InvalidSpec(str(err)) from err

    def tap_index(self) -> int:
        """Index of the layer the feature is taken before."""
        for i, layer in enumerate(self.layers):
            if layer.kind == "tap":
                return i
        last_fc = max(i for i, l in enumerate(self.layers) if l.kind == "fc")
        return last_fc

    def tap_shape(self) -> Shape:
        shape = self.input_shape
        for layer in self.layers[: self.tap_index()]:
            shape = layer_output_shape(shape, layer)
        return shape

    def feature_dim(self) -> int:
        h, w, c = self.tap_shape()
        return h * w * c


# ---------------------------------------------------------------------------
# parameter bookkeeping

def layer_param_count(layer: LayerSpec, in_shape: Shape) -> int:
    h, w, c = in_shape
    if layer.kind == "conv":
        return layer.out_channels * layer.kernel * layer.kernel * c
    if layer.kind == "fc":
        return layer.out_units * h * w * c
    if layer.kind == "inception":
        b1, b2, b3, b4 = layer.branches
        return (
            b1 * c                      # 1x1 branch
            + b2 * c + b2 * 9 * b2      # 1x1 reduce then 3x3
            + b3 * c + b3 * 25 * b3     # 1x1 reduce then 5x5
            + b4 * c                    # pool projection 1x1
        )
    if layer.kind == "resblock":
        out = layer.out_channels
        total = out * 9 * c + out * 9 * out
        if layer.stride != 1 or out != c:
            total += out * c            # 1x1 projection shortcut
        return total
    return 0


def _layer_params(spec: NetworkSpec, index: int, in_shape: Shape) -> np.ndarray:
    count = layer_param_count(spec.layers[index], in_shape)
    layer_seed = (spec.seed ^ ((index * GOLDEN_GAMMA) & MASK64)) & MASK64
    return (uniform_array(layer_seed, count) * 2.0 - 1.0) * 0.1


def _take(flat: np.ndarray, cursor: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
    size = int(np.prod(shape))
    return flat[cursor : cursor + size].reshape(shape), cursor + size


# ---------------------------------------------------------------------------
# layer execution

def _conv2d(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    # x: (h, w, c); w: (out, kh, kw, c)
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    kh, kw = w.shape[1], w.shape[2]
    windows = sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride, ::stride]
    return np.einsum("yxcij,oijc->yxo", windows, w, optimize=True)


def _pool2d(x: np.ndarray, kernel: int, stride: int, reducer) -> np.ndarray:
    windows = sliding_window_view(x, (kernel, kernel), axis=(0, 1))[::stride, ::stride]
    return reducer(windows, axis=(3, 4))


def _apply_inception(x: np.ndarray, layer: LayerSpec, flat: np.ndarray) -> np.ndarray:
    b1, b2, b3, b4 = layer.branches
    c = x.shape[2]
    cur = 0
    w1, cur = _take(flat, cur, (b1, 1, 1, c))
    w2r, cur = _take(flat, cur, (b2, 1, 1, c))
    w2, cur = _take(flat, cur, (b2, 3, 3, b2))
    w3r, cur = _take(flat, cur, (b3, 1, 1, c))
    w3, cur = _take(flat, cur, (b3, 5, 5, b3))
    w4, cur = _take(flat, cur, (b4, 1, 1, c))
    y1 = _conv2d(x, w1, 1, 0)
    y2 = _conv2d(_conv2d(x, w2r, 1, 0), w2, 1, 1)
    y3 = _conv2d(_conv2d(x, w3r, 1, 0), w3, 1, 2)
    # -inf padding keeps max semantics under same-padding
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    pooled = _pool2d(padded, 3, 1, np.max)
    y4 = _conv2d(pooled, w4, 1, 0)
    return np.concatenate([y1, y2, y3, y4], axis=2)


def resblock_forward(
    x: np.ndarray, layer: LayerSpec, params: np.ndarray | None = None
) -> np.ndarray:
    """Residual block: relu(F(x) + shortcut(x)), F = two stacked 3x3 convs.

    `params` is the block's flat parameter sequence (conv1, conv2, then the
    1x1 projection when the shortcut cannot be the identity); None runs the
    block with all-zero parameters.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"resblock input must be (h, w, c), got ndim {x.ndim}")
    c = x.shape[2]
    out = layer.out_channels
    stride = layer.stride
    needs_projection = stride != 1 or out != c
    if params is None:
        params = np.zeros(layer_param_count(layer, x.shape), dtype=np.float64)
    cur = 0
    w1, cur = _take(params, cur, (out, 3, 3, c))
    w2, cur = _take(params, cur, (out, 3, 3, out))
    f = _conv2d(_conv2d(x, w1, stride, 1), w2, 1, 1)
    if needs_projection:
        ws, cur = _take(params, cur, (out, 1, 1, c))
        shortcut = _conv2d(x, ws, stride, 0)
    else:
        shortcut = x
    if f.shape != shortcut.shape:
        raise ShapeMismatch(f"residual add {f.shape} vs {shortcut.shape}")
    return np.maximum(f + shortcut, 0.0)


def _apply_layer(x: np.ndarray, layer: LayerSpec, flat: np.ndarray) -> np.ndarray:
    if layer.kind == "conv":
        c = x.shape[2]
        w = flat.reshape(layer.out_channels, layer.kernel, layer.kernel, c)
        return _conv2d(x, w, layer.stride, layer.pad)
    if layer.kind == "relu":
        return np.maximum(x, 0.0)
    if layer.kind == "maxpool":
        return _pool2d(x, layer.kernel, layer.stride, np.max)
    if layer.kind == "avgpool":
        return _pool2d(x, layer.kernel, layer.stride, np.mean)
    if layer.kind == "fc":
        w = flat.reshape(layer.out_units, x.size)
        return (w @ x.ravel()).reshape(1, 1, layer.out_units)
    if layer.kind == "inception":
        return _apply_inception(x, layer, flat)
    if layer.kind == "resblock":
        return resblock_forward(x, layer, flat)
    if layer.kind == "tap":
        return x
    raise InvalidSpec(f"unknown layer kind {layer.kind!r}")


def forward_with_tap(
    spec: NetworkSpec,
    image: np.ndarray,
    image_id: str = "",
    weight_overrides: Mapping[int, np.ndarray] | None = None,
) -> FeatureVector:
    """Run layers up to the tap point and return the flattened activation.

    `weight_overrides` maps a layer index to its flat parameter sequence and
    replaces the deterministic draw for that layer.
    """
    x = np.asarray(image, dtype=np.float64)
    if x.shape != spec.input_shape:
        raise ShapeMismatch(f"image shape {x.shape} != network input {spec.input_shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    stop = spec.tap_index()
    shape: Shape = spec.input_shape
    for index, layer in enumerate(spec.layers[:stop]):
        count = layer_param_count(layer, shape)
        if weight_overrides is not None and index in weight_overrides:
            flat = np.asarray(weight_overrides[index], dtype=np.float64).reshape(-1)
            if flat.size != count:
                raise InvalidSpec(
                    f"override for layer {index} has {flat.size} values, expected {count}"
                )
        else:
            flat = _layer_params(spec, index, shape)
        x = _apply_layer(x, layer, flat)
        shape = layer_output_shape(shape, layer)
    return FeatureVector(values=x.ravel().copy(), source_image=image_id)


# ---------------------------------------------------------------------------
# patch extraction

def extract_patch(
    image: np.ndarray,
    center: tuple[int, int],
    scale: float,
    out_size: tuple[int, int],
) -> np.ndarray:
    """Square crop around `center` with side round(scale * min(h, w)).

    The crop is clamped to stay inside the image, then bilinearly resized
    (half-pixel centers) to `out_size` = (height, width).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ShapeMismatch(f"image must be (h, w, c), got ndim {img.ndim}")
    h, w = img.shape[0], img.shape[1]
    cx, cy = center
    if not (0 <= cx < w and 0 <= cy < h):
        raise CenterOutOfBounds(f"center {center} outside {w}x{h} image")
    if not 0.0 < scale <= 1.0:
        raise ValueError("scale must be in (0, 1]")
    # round half up, not banker's
    side = int(math.floor(scale * min(h, w) + 0.5))
    if side < 1:
        raise DegeneratePatch(f"patch side {side} for scale {scale}")
    x0 = min(max(int(cx) - side // 2, 0), w - side)
    y0 = min(max(int(cy) - side // 2, 0), h - side)
    crop = img[y0 : y0 + side, x0 : x0 + side, :]
    return bilinear_resize(crop, out_size)


def bilinear_resize(image: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Half-pixel-center bilinear resize; the identity when sizes match."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[0], img.shape[1]
    oh, ow = out_size
    if oh < 1 or ow < 1:
        raise ValueError("output size must be positive")
    ys = np.clip((np.arange(oh) + 0.5) * (h / oh) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(ow) + 0.5) * (w / ow) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


# ---------------------------------------------------------------------------
# text format and presets

def parse_network_spec(
    stream: IO[str] | str | Iterable[str], name: str, seed: int = 0
) -> NetworkSpec:
    """Parse the one-layer-per-line network grammar into a NetworkSpec."""
    lines = stream.splitlines() if isinstance(stream, str) else stream
    input_shape: Shape | None = None
    layers: list[LayerSpec] = []
    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        kind, args = tokens[0], tokens[1:]
        try:
            values = [int(a) for a in args]
        except ValueError as err:
            raise ParseError(f"non-integer argument in {raw.strip()!r}", lineno) from err
        if input_shape is None:
            if kind != "input" or len(values) != 3:
                raise ParseError("expected 'input <h> <w> <c>' first", lineno)
            input_shape = (values[0], values[1], values[2])
            continue
        try:
            if kind == "conv" and len(values) == 4:
                layers.append(conv(*values))
            elif kind == "relu" and not values:
                layers.append(relu())
            elif kind == "maxpool" and len(values) == 2:
                layers.append(maxpool(*values))
            elif kind == "avgpool" and len(values) == 2:
                layers.append(avgpool(*values))
            elif kind == "fc" and len(values) == 1:
                layers.append(fc(values[0]))
            elif kind == "inception" and len(values) == 4:
                layers.append(inception(*values))
            elif kind == "resblock" and len(values) == 2:
                layers.append(resblock(*values))
            elif kind == "tap" and not values:
                layers.append(tap())
            else:
                raise ParseError(f"unknown or malformed layer line {raw.strip()!r}", lineno)
        except InvalidSpec as err:
            raise ParseError(str(err), lineno) from err
    if input_shape is None:
        raise ParseError("missing 'input <h> <w> <c>' line", 1)
    return NetworkSpec(name=name, input_shape=input_shape, layers=tuple(layers), seed=seed)


# Desk-scale analogues of the nine benchmark families. Each keeps the trait
# that sets its family apart (first-layer stride, where the stride drops to
# one, inception stacking, residual depth) at reduced width and depth. All
# taps are implicit: the feature is whatever feeds the final fc classifier.
PRESETS: dict[str, str] = {
    "vggf-mini": """
input 32 32 3
conv 8 5 4 0
relu
maxpool 2 2
conv 16 3 1 1
relu
fc 64
relu
fc 10
""",
    "vggm-mini": """
input 32 32 3
conv 8 5 2 0
relu
conv 12 3 2 1
relu
conv 16 3 1 1
relu
maxpool 2 2
fc 64
relu
fc 10
""",
    "vggs-mini": """
input 32 32 3
conv 8 5 2 0
relu
conv 16 3 1 1
relu
maxpool 3 3
fc 64
relu
fc 10
""",
    "googlenet-mini": """
input 32 32 3
conv 8 3 2 1
relu
maxpool 2 2
inception 4 4 4 4
inception 4 8 2 2
maxpool 2 2
inception 4 4 4 4
avgpool 4 1
fc 10
""",
    "vgg16-mini": """
input 32 32 3
conv 8 3 1 1
relu
conv 8 3 1 1
relu
maxpool 2 2
conv 16 3 1 1
relu
conv 16 3 1 1
relu
maxpool 2 2
conv 16 3 1 1
relu
maxpool 2 2
fc 64
relu
fc 64
relu
fc 10
""",
    "vgg19-mini": """
input 32 32 3
conv 8 3 1 1
relu
conv 8 3 1 1
relu
maxpool 2 2
conv 16 3 1 1
relu
conv 16 3 1 1
relu
maxpool 2 2
conv 16 3 1 1
relu
conv 16 3 1 1
relu
maxpool 2 2
fc 64
relu
fc 64
relu
fc 10
""",
    "resnet50-mini": """
input 32 32 3
conv 8 3 2 1
relu
maxpool 2 2
resblock 8 1
resblock 16 2
avgpool 4 1
fc 10
""",
    "resnet101-mini": """
input 32 32 3
conv 8 3 2 1
relu
maxpool 2 2
resblock 8 1
resblock 8 1
resblock 16 2
avgpool 4 1
fc 10
""",
    "resnet152-mini": """
input 32 32 3
conv 8 3 2 1
relu
maxpool 2 2
resblock 8 1
resblock 8 1
resblock 16 2
resblock 16 1
avgpool 4 1
fc 10
""",
}


def load_network(arch: str, seed: int = 0) -> NetworkSpec:
    """Resolve `arch` as a preset name first, then as a spec file path."""
    if arch in PRESETS:
        return parse_network_spec(PRESETS[arch], name=arch, seed=seed)
    try:
        with open(arch, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise InvalidSpec(f"unknown architecture {arch!r} (not a preset or file)") from err
    return parse_network_spec(text, name=os.path.splitext(os.path.basename(arch))[0], seed=seed)
