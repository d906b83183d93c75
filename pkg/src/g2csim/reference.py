"""The three reference models (detector, coarse and precise converter).

Structures are reconstructions sized to the published op counts
(4 K / 2.69 M / 5.79 M MACs) on a ``3 x 16 x 64`` EGM frame, i.e. 1024
samples per lead folded into 16 rows of 64. All converter layers keep the
16 x 64 map so each activation tensor fits a 14 KB activation buffer
(at most 12 channels), and every width is a multiple of 8 for D-RIR.

Weights come from a fixed seed. Detector weights are all positive so its
score grows monotonically with the rectified input amplitude.
"""
import numpy as np

from .model import Act, Kind, LayerSpec, ModelSpec, Role, _accumulate
from .quant import PO2_MAX_EXP, Quant, multipliers, requantize

FRAME_SHAPE = (3, 16, 64)
ECG_LEADS = 12
SEED = 2021
CALIB_FRAMES = 4
DETECTOR_SCORE_BITS = 12

N, DW, PW, FC = Kind.NORMAL, Kind.DW, Kind.PW, Kind.FC


def _conv_stack(plan, quant, h=16, w=64):
    layers = []
    for i, (kind, cin, cout) in enumerate(plan):
        last = i == len(plan) - 1
        layers.append(LayerSpec(kind, cin, cout, h, w, 1, quant,
                                act=Act.IDENTITY if last else Act.RELU))
    return layers


C = ECG_LEADS
COARSE_PLAN = [(N, 3, C), (DW, C, C), (PW, C, C), (N, C, C), (DW, C, C),
               (PW, C, C), (PW, C, C), (DW, C, C), (PW, C, C), (DW, C, C)]
PRECISE_PLAN = [(N, 3, C), (DW, C, C), (PW, C, C), (N, C, C), (DW, C, C), (PW, C, C),
                (N, C, C), (DW, C, C), (PW, C, C), (PW, C, C), (N, C, C), (PW, C, C),
                (PW, C, C), (DW, C, C), (PW, C, C)]


def detector_layers():
    return [
        LayerSpec(N, 3, 7, 16, 64, stride=8, quant=Quant.INT8),
        LayerSpec(FC, 7 * 2 * 8, 9, quant=Quant.INT8),
        LayerSpec(FC, 9, 1, quant=Quant.INT8, act=Act.IDENTITY, out_bits=16),
    ]


def _random_weights(rng, layer, positive=False):
    shape = layer.weight_shape
    if layer.quant == Quant.PO2:
        e = rng.integers(0, PO2_MAX_EXP + 1, size=shape)
        sign = 0 if positive else rng.integers(0, 2, size=shape)
        return ((sign << 3) | e).astype(np.uint8)
    mag = rng.integers(1, 128, size=shape)
    if positive:
        return mag.astype(np.int8)
    sign = rng.choice([-1, 1], size=shape)
    return (mag * sign).astype(np.int8)


def _calibrate(layers, weights, rng, score_bits):
    """Pick each layer's requant shift from seeded random frames."""
    x = rng.integers(-128, 128, size=(CALIB_FRAMES,) + layers[0].in_shape)
    out = []
    for i, (layer, raw) in enumerate(zip(layers, weights)):
        mult = multipliers(raw, layer.quant)
        accs = np.stack([_accumulate(layer, mult, xi) for xi in x])
        peak = int(accs.max() if layer.act == Act.RELU else np.abs(accs).max())
        target = score_bits if layer.out_bits == 16 else 7
        shift = max(0, peak.bit_length() - target)
        layer = LayerSpec(layer.kind, layer.cin, layer.cout, layer.h, layer.w, layer.stride,
                          layer.quant, shift, layer.act, layer.out_bits)
        out.append(layer)
        x = np.stack([requantize(a, shift, layer.act == Act.RELU, layer.out_bits) for a in accs])
    return out


def _build(role, layers, rng, positive=False):
    weights = [_random_weights(rng, l, positive) for l in layers]
    layers = _calibrate(layers, weights, rng, DETECTOR_SCORE_BITS)
    return ModelSpec(role, layers), weights


def build_reference_models(seed=SEED):
    """Return ``[(ModelSpec, weights)]`` for detector, coarse and precise."""
    rng = np.random.default_rng(seed)
    return [
        _build(Role.DETECTOR, detector_layers(), rng, positive=True),
        _build(Role.COARSE, _conv_stack(COARSE_PLAN, Quant.PO2), rng),
        _build(Role.PRECISE, _conv_stack(PRECISE_PLAN, Quant.INT8), rng),
    ]
