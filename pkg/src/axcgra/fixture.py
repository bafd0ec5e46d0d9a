"""Desk-scale demo network: three convolutions (3 -> 8 -> 16 -> 32 channels)
on 16x16 inputs, with deterministically generated weights and a calibrated
quantization scale per layer. Used by the test suite and the CLI quickstart.
"""

import numpy as np

from .qnn import ConvSpec, Layer, ModelGraph, TensorI8, conv2d, requantize

FIXTURE_INPUT_SHAPE = (3, 16, 16)
# (out_channels, kernel, stride, padding)
_FIXTURE_LAYERS = [
    ("conv0", 8, 3, 1, 1),
    ("conv1", 16, 3, 2, 1),
    ("conv2", 32, 3, 2, 1),
]


def build_fixture_batch(seed=0, batch=4):
    # full int8 range on purpose: magnitude-128 operands are the only ones
    # the k=7 multiplier approximates, and the fixture must exercise them
    rng = np.random.default_rng(seed + 1000)
    data = rng.integers(-128, 128, size=(batch,) + FIXTURE_INPUT_SHAPE)
    return TensorI8(data.astype(np.int8), scale=0.02)


def build_fixture_model(seed=0, calibration_batch=4):
    """Build the demo model; out_scales are calibrated so each layer's
    activations span most of the int8 range on the fixture batch."""
    rng = np.random.default_rng(seed)
    layers = []
    in_ch = FIXTURE_INPUT_SHAPE[0]
    for name, out_ch, k, stride, pad in _FIXTURE_LAYERS:
        weights = rng.integers(-128, 128, size=(out_ch, in_ch, k, k)).astype(np.int8)
        weight_scales = rng.uniform(0.004, 0.012, size=out_ch)
        bias = rng.integers(-400, 401, size=out_ch).astype(np.int32)
        conv = ConvSpec(in_ch, out_ch, (k, k), stride, pad, weights,
                        weight_scales, bias)
        layers.append(Layer(name=name, conv=conv, relu=True, out_scale=1.0))
        in_ch = out_ch
    layers[-1].relu = False
    layers[-1].out_scale = None

    model = ModelGraph(FIXTURE_INPUT_SHAPE, 0.02, layers)
    _calibrate(model, build_fixture_batch(seed, calibration_batch))
    return model


def _calibrate(model, batch):
    """Set each non-final out_scale so peak activation maps near code 100."""
    x = batch
    for layer in model.layers[:-1]:
        acc = conv2d(x, layer.conv)
        if layer.relu:
            acc = np.maximum(acc, 0)
        real = acc.astype(np.float64) * (
            x.scale * layer.conv.weight_scales[None, :, None, None]
        )
        peak = float(np.max(np.abs(real)))
        layer.out_scale = peak / 120.0 if peak > 0 else 1.0
        x = TensorI8(
            requantize(acc, x.scale, layer.conv.weight_scales, layer.out_scale),
            layer.out_scale,
        )
