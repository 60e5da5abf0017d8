"""Layer engine: shape arithmetic, conv oracle, tap semantics, patches."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import conv_reference
from matbench.errors import (
    CenterOutOfBounds,
    DegeneratePatch,
    InvalidSpec,
    NonPositiveOutput,
    ParseError,
    ShapeMismatch,
)
from matbench.network import (
    PRESETS,
    NetworkSpec,
    avgpool,
    bilinear_resize,
    conv,
    extract_patch,
    fc,
    forward_with_tap,
    inception,
    layer_output_shape,
    layer_param_count,
    load_network,
    maxpool,
    parse_network_spec,
    relu,
    resblock,
    resblock_forward,
    tap,
)
from matbench.rng import SplitMix64


class TestLayerOutputShape:
    def test_large_stride_conv(self):
        assert layer_output_shape((224, 224, 3), conv(64, 11, 4, 0)) == (54, 54, 64)

    def test_global_avgpool(self):
        assert layer_output_shape((7, 7, 1024), avgpool(7, 1)) == (1, 1, 1024)

    def test_kernel_larger_than_input(self):
        with pytest.raises(NonPositiveOutput):
            layer_output_shape((10, 10, 8), conv(4, 11, 1, 0))

    def test_fc_collapses_spatial(self):
        assert layer_output_shape((5, 5, 4), fc(32)) == (1, 1, 32)

    def test_relu_and_tap_identity(self):
        assert layer_output_shape((9, 7, 2), relu()) == (9, 7, 2)
        assert layer_output_shape((9, 7, 2), tap()) == (9, 7, 2)

    def test_inception_concatenates_channels(self):
        assert layer_output_shape((8, 8, 16), inception(4, 8, 2, 2)) == (8, 8, 16)

    def test_resblock_stride_two(self):
        assert layer_output_shape((9, 9, 8), resblock(16, 2)) == (5, 5, 16)

    def test_same_pad_conv_preserves_dims(self):
        assert layer_output_shape((14, 14, 8), conv(16, 3, 1, 1)) == (14, 14, 16)


class TestForwardWithTap:
    def test_identity_tap_returns_flattened_input(self):
        spec = NetworkSpec("ident", (3, 4, 2), (tap(),), seed=5)
        image = np.linspace(0.0, 1.0, 24).reshape(3, 4, 2)
        feature = forward_with_tap(spec, image, image_id="img0")
        assert feature.source_image == "img0"
        assert np.array_equal(feature.values, image.ravel())

    def test_single_conv_dimension(self):
        spec = NetworkSpec("one-conv", (224, 224, 3), (conv(64, 11, 4, 0), tap()), seed=1)
        image = np.full((224, 224, 3), 0.5)
        feature = forward_with_tap(spec, image)
        assert len(feature) == 54 * 54 * 64 == 186624

    def test_vgg_style_tap_is_penultimate_fc_width(self):
        layers = (fc(4096), relu(), fc(10))
        spec = NetworkSpec("head", (4, 4, 2), layers, seed=3)
        feature = forward_with_tap(spec, np.full((4, 4, 2), 0.25))
        assert len(feature) == 4096

    def test_explicit_tap_matches_implicit(self):
        base = (fc(64), relu())
        implicit = NetworkSpec("a", (2, 2, 3), base + (fc(10),), seed=9)
        explicit = NetworkSpec("b", (2, 2, 3), base + (tap(), fc(10)), seed=9)
        image = np.full((2, 2, 3), 0.7)
        assert np.array_equal(
            forward_with_tap(implicit, image).values,
            forward_with_tap(explicit, image).values,
        )

    def test_shape_mismatch(self):
        spec = NetworkSpec("ident", (3, 3, 1), (tap(),))
        with pytest.raises(ShapeMismatch):
            forward_with_tap(spec, np.zeros((4, 3, 1)))

    def test_determinism_and_seed_sensitivity(self):
        image = np.full((8, 8, 2), 0.3)
        spec_a = NetworkSpec("n", (8, 8, 2), (conv(4, 3, 1, 1), relu(), tap()), seed=11)
        spec_b = NetworkSpec("n", (8, 8, 2), (conv(4, 3, 1, 1), relu(), tap()), seed=12)
        first = forward_with_tap(spec_a, image)
        second = forward_with_tap(spec_a, image)
        assert np.array_equal(first.values, second.values)
        assert not np.array_equal(first.values, forward_with_tap(spec_b, image).values)

    def test_mutating_layer_after_tap_keeps_feature(self):
        image = np.full((6, 6, 1), 0.4)
        before = NetworkSpec(
            "n", (6, 6, 1), (conv(2, 3, 1, 0), tap(), fc(5)), seed=21
        )
        after = NetworkSpec(
            "n", (6, 6, 1), (conv(2, 3, 1, 0), tap(), fc(50), relu(), fc(3)), seed=21
        )
        assert np.array_equal(
            forward_with_tap(before, image).values,
            forward_with_tap(after, image).values,
        )

    def test_relu_output_non_negative(self):
        spec = NetworkSpec("n", (8, 8, 2), (conv(4, 3, 1, 1), relu(), tap()), seed=2)
        feature = forward_with_tap(spec, np.full((8, 8, 2), 0.9))
        assert np.all(feature.values >= 0.0)

    def test_weight_override_replaces_draw(self):
        spec = NetworkSpec("n", (2, 2, 1), (fc(3), tap(), fc(2)), seed=4)
        zeros = {0: np.zeros(layer_param_count(fc(3), (2, 2, 1)))}
        feature = forward_with_tap(spec, np.full((2, 2, 1), 0.6), weight_overrides=zeros)
        assert np.array_equal(feature.values, np.zeros(3))

    def test_two_taps_rejected(self):
        with pytest.raises(InvalidSpec):
            NetworkSpec("n", (3, 3, 1), (tap(), tap()))

    def test_no_tap_no_fc_rejected(self):
        with pytest.raises(InvalidSpec):
            NetworkSpec("n", (3, 3, 1), (conv(2, 3, 1, 1), relu()))

    def test_geometry_validated_at_construction(self):
        with pytest.raises(InvalidSpec):
            NetworkSpec("n", (4, 4, 1), (conv(2, 5, 1, 0), tap()))


def test_conv_matches_reference_on_random_cases():
    rng = SplitMix64(31337)
    for _ in range(60):
        h = 3 + rng.below(6)
        w = 3 + rng.below(6)
        c = 1 + rng.below(2)
        k = 1 + rng.below(3)
        stride = 1 + rng.below(2)
        pad = rng.below(2)
        out_c = 1 + rng.below(3)
        if (h + 2 * pad - k) < 0 or (w + 2 * pad - k) < 0:
            continue
        image = np.array([rng.next_float() for _ in range(h * w * c)]).reshape(h, w, c)
        spec = NetworkSpec("case", (h, w, c), (conv(out_c, k, stride, pad), tap()), seed=rng.next_u64())
        feature = forward_with_tap(spec, image)
        weights = (
            (np.array([rng.next_float() for _ in range(out_c * k * k * c)]) * 2 - 1) * 0.1
        ).reshape(out_c, k, k, c)
        engine = forward_with_tap(
            NetworkSpec("case", (h, w, c), (conv(out_c, k, stride, pad), tap()), seed=0),
            image,
            weight_overrides={0: weights.ravel()},
        )
        expected = conv_reference(image, weights, stride, pad)
        assert np.allclose(engine.values, expected.ravel(), atol=1e-10, rtol=0)
        assert len(feature) == expected.size


class TestResblock:
    def test_zero_f_identity_shortcut_is_relu(self):
        x = np.linspace(-1.0, 1.0, 4 * 4 * 3).reshape(4, 4, 3)
        out = resblock_forward(x, resblock(3, 1))
        assert np.array_equal(out, np.maximum(x, 0.0))

    def test_stride_two_halves_spatial_dims(self):
        x = np.random.default_rng(0).random((9, 9, 4))
        out = resblock_forward(x, resblock(8, 2), np.ones(layer_param_count(resblock(8, 2), (9, 9, 4))))
        assert out.shape == (5, 5, 8)

    def test_negative_input_clamped(self):
        x = -np.ones((5, 5, 2))
        out = resblock_forward(x, resblock(2, 1))
        assert np.all(out >= 0.0)

    def test_projection_shortcut_when_channels_change(self):
        x = np.full((4, 4, 2), 0.5)
        layer = resblock(6, 1)
        count = layer_param_count(layer, (4, 4, 2))
        # zero F and zero projection: output must be all zeros, not relu(x)
        out = resblock_forward(x, layer, np.zeros(count))
        assert out.shape == (4, 4, 6)
        assert np.all(out == 0.0)

    def test_bad_input_rank(self):
        with pytest.raises(ShapeMismatch):
            resblock_forward(np.zeros((4, 4)), resblock(2, 1))


class TestExtractPatch:
    def test_full_scale_center_is_whole_image(self):
        image = np.random.default_rng(1).random((10, 10, 3))
        patch = extract_patch(image, (5, 5), 1.0, (10, 10))
        assert np.allclose(patch, image)

    def test_half_scale_crop_size(self):
        image = np.random.default_rng(2).random((100, 100, 1))
        patch = extract_patch(image, (50, 50), 0.5, (50, 50))
        # output size equals crop size, so the resize is the identity
        assert np.array_equal(patch, image[25:75, 25:75, :])

    def test_corner_center_clamps_to_inside(self):
        image = np.random.default_rng(3).random((100, 100, 1))
        patch = extract_patch(image, (0, 0), 0.5, (50, 50))
        assert np.array_equal(patch, image[0:50, 0:50, :])

    def test_center_out_of_bounds(self):
        with pytest.raises(CenterOutOfBounds):
            extract_patch(np.zeros((10, 10, 1)), (10, 3), 0.5, (4, 4))

    def test_degenerate_patch(self):
        with pytest.raises(DegeneratePatch):
            extract_patch(np.zeros((100, 100, 1)), (5, 5), 0.004, (4, 4))

    def test_resize_constant_image_stays_constant(self):
        image = np.full((30, 40, 3), 0.37)
        patch = extract_patch(image, (20, 15), 0.6, (8, 8))
        assert np.allclose(patch, 0.37)

    def test_values_stay_in_unit_interval(self):
        image = np.random.default_rng(4).random((21, 17, 3))
        patch = extract_patch(image, (8, 11), 0.9, (32, 32))
        assert patch.min() >= 0.0 and patch.max() <= 1.0

    def test_bilinear_identity_when_sizes_match(self):
        image = np.random.default_rng(5).random((7, 9, 2))
        assert np.array_equal(bilinear_resize(image, (7, 9)), image)

    def test_bilinear_doubling_interpolates_midpoints(self):
        image = np.array([[[0.0], [1.0]]])  # 1 x 2
        resized = bilinear_resize(image, (1, 4))
        assert np.allclose(resized[0, :, 0], [0.0, 0.25, 0.75, 1.0])


class TestSpecParsing:
    def test_parse_round_trip(self):
        text = "input 8 8 3\nconv 4 3 1 1\nrelu\nmaxpool 2 2\nfc 16\nrelu\nfc 4\n"
        spec = parse_network_spec(text, name="tiny", seed=7)
        assert spec.input_shape == (8, 8, 3)
        assert [l.kind for l in spec.layers] == ["conv", "relu", "maxpool", "fc", "relu", "fc"]
        assert spec.feature_dim() == 16

    def test_missing_input_line(self):
        with pytest.raises(ParseError):
            parse_network_spec("conv 4 3 1 1\n", name="x")

    def test_unknown_layer(self):
        with pytest.raises(ParseError) as exc:
            parse_network_spec("input 4 4 1\nsoftmax\nfc 2\n", name="x")
        assert exc.value.line == 2

    def test_non_integer_argument(self):
        with pytest.raises(ParseError):
            parse_network_spec("input 4 4 1\nconv 4 3.5 1 1\nfc 2\n", name="x")

    def test_unknown_arch_name(self):
        with pytest.raises(InvalidSpec):
            load_network("vgg99-mega")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "custom.net"
        path.write_text("input 4 4 1\nfc 8\nrelu\nfc 2\n", encoding="utf-8")
        spec = load_network(str(path), seed=3)
        assert spec.name == "custom"
        assert spec.seed == 3
        assert spec.feature_dim() == 8


class TestPresets:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_preset_shapes_compose_and_forward(self, name):
        spec = load_network(name, seed=17)
        shape = spec.input_shape
        for layer in spec.layers:
            shape = layer_output_shape(shape, layer)
        feature = forward_with_tap(spec, np.full(spec.input_shape, 0.5))
        assert len(feature) == spec.feature_dim()
        assert np.all(np.isfinite(feature.values))

    def test_distinguishing_strides(self):
        assert load_network("vggf-mini").layers[0].stride == 4
        assert load_network("vggm-mini").layers[0].stride == 2
        # the medium net drops to stride one at its third conv, the slow
        # variant already at its second
        vggm_convs = [l for l in load_network("vggm-mini").layers if l.kind == "conv"]
        vggs_convs = [l for l in load_network("vggs-mini").layers if l.kind == "conv"]
        assert [c.stride for c in vggm_convs] == [2, 2, 1]
        assert [c.stride for c in vggs_convs] == [2, 1]

    def test_family_traits(self):
        googlenet = load_network("googlenet-mini")
        assert sum(1 for l in googlenet.layers if l.kind == "inception") == 3
        depths = [
            sum(1 for l in load_network(f"resnet{d}-mini").layers if l.kind == "resblock")
            for d in (50, 101, 152)
        ]
        assert depths == sorted(depths) and len(set(depths)) == 3
        vgg16 = load_network("vgg16-mini")
        vgg19 = load_network("vgg19-mini")
        assert all(l.stride == 1 for l in vgg16.layers if l.kind == "conv")
        assert sum(1 for l in vgg19.layers if l.kind == "conv") > sum(
            1 for l in vgg16.layers if l.kind == "conv"
        )

    def test_vgg_style_tap_dimension_is_penultimate_fc(self):
        for name in ("vggf-mini", "vggm-mini", "vggs-mini", "vgg16-mini", "vgg19-mini"):
            spec = load_network(name)
            fc_layers = [l for l in spec.layers if l.kind == "fc"]
            assert spec.feature_dim() == fc_layers[-2].out_units
