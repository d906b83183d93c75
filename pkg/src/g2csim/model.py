"""Quantized CNN descriptions and the dense reference executor.

Activations are ``numpy`` integer arrays shaped ``(C, H, W)``. Weights are
kept in their stored form (Po2 codes as ``uint8``, Int8 as ``int8``) with
one array per layer:

===========  ======================
kind         weight array shape
===========  ======================
``NORMAL``   ``(Cout, Cin, 3, 3)``
``DW``       ``(C, 3, 3)``
``PW``       ``(Cout, Cin)``
``FC``       ``(Cout, Cin)``
===========  ======================

``dense_forward`` is the correctness oracle for the simulator: it uses plain
multiplications over the decoded weights and knows nothing about vectors,
indices or memories.
"""
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Tuple

import numpy as np

from .errors import ShapeMismatch
from .quant import Quant, multipliers, requantize

KERNEL = 3


class Kind(IntEnum):
    NORMAL = 0
    DW = 1
    PW = 2
    FC = 3


class Act(IntEnum):
    IDENTITY = 0
    RELU = 1


class Role(IntEnum):
    DETECTOR = 0
    COARSE = 1
    PRECISE = 2


@dataclass(frozen=True)
class LayerSpec:
    kind: Kind
    cin: int
    cout: int
    h: int = 1
    w: int = 1
    stride: int = 1
    quant: Quant = Quant.INT8
    shift: int = 0
    act: Act = Act.RELU
    out_bits: int = 8

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "quant", Quant(self.quant))
        object.__setattr__(self, "act", Act(self.act))
        if min(self.cin, self.cout, self.h, self.w, self.stride) < 1:
            raise ValueError(f"non-positive dimension in {self}")
        if self.kind == Kind.DW and self.cout != self.cin:
            raise ValueError("depth-wise conv requires Cout == Cin")
        if self.kind == Kind.FC and (self.h, self.w, self.stride) != (1, 1, 1):
            raise ValueError("FC layers take a flattened input: use h=w=stride=1")
        if self.out_bits not in (8, 16):
            raise ValueError("out_bits must be 8 or 16")
        if self.shift < 0:
            raise ValueError("requant shift must be non-negative")

    @property
    def pad(self):
        return 1 if self.kind in (Kind.NORMAL, Kind.DW) else 0

    @property
    def hout(self):
        return (self.h - 1) // self.stride + 1

    @property
    def wout(self):
        return (self.w - 1) // self.stride + 1

    @property
    def in_shape(self):
        if self.kind == Kind.FC:
            return (self.cin, 1, 1)
        return (self.cin, self.h, self.w)

    @property
    def out_shape(self):
        return (self.cout, self.hout, self.wout)

    @property
    def weight_shape(self):
        if self.kind == Kind.NORMAL:
            return (self.cout, self.cin, KERNEL, KERNEL)
        if self.kind == Kind.DW:
            return (self.cin, KERNEL, KERNEL)
        return (self.cout, self.cin)

    @property
    def weight_dtype(self):
        return np.uint8 if self.quant == Quant.PO2 else np.int8

    def accepts(self, shape):
        shape = tuple(shape)
        if self.kind == Kind.FC:
            return int(np.prod(shape)) == self.cin
        return shape == self.in_shape


@dataclass(frozen=True)
class ModelSpec:
    role: Role
    layers: Tuple[LayerSpec, ...]
    total_macs: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_bits != 8:
                raise ValueError("only the final layer may emit 16-bit outputs")
            if not b.accepts(a.out_shape):
                raise ShapeMismatch(f"{a.out_shape} does not feed {b.kind.name} {b.in_shape}")
        if self.role == Role.DETECTOR:
            last = self.layers[-1]
            if last.out_shape != (1, 1, 1) or last.out_bits != 16:
                raise ValueError("detector must end in a 16-bit scalar head")
        object.__setattr__(self, "total_macs", sum(layer_macs(l) for l in self.layers))

    @property
    def in_shape(self):
        return self.layers[0].in_shape

    @property
    def out_shape(self):
        return self.layers[-1].out_shape


def layer_macs(layer):
    """Closed-form MAC count (one multiply-accumulate per weight use)."""
    hw = layer.hout * layer.wout
    if layer.kind == Kind.NORMAL:
        return layer.cin * layer.cout * KERNEL * KERNEL * hw
    if layer.kind == Kind.DW:
        return layer.cin * KERNEL * KERNEL * hw
    if layer.kind == Kind.PW:
        return layer.cin * layer.cout * hw
    return layer.cin * layer.cout


def model_macs(model):
    return sum(layer_macs(l) for l in model.layers)


def check_activation(x, shape=None, bits=8):
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeMismatch(f"activation must be (C, H, W), got shape {x.shape}")
    if shape is not None and tuple(x.shape) != tuple(shape):
        raise ShapeMismatch(f"expected activation shape {tuple(shape)}, got {x.shape}")
    lim = 1 << (bits - 1)
    if x.size and (x.min() < -lim or x.max() > lim - 1):
        raise ValueError(f"activation outside the signed {bits}-bit range")
    return x


def check_weights(layer, raw):
    raw = np.asarray(raw)
    if raw.shape != layer.weight_shape:
        raise ShapeMismatch(f"weights {raw.shape} != {layer.weight_shape} for {layer.kind.name}")
    return raw


def _accumulate(layer, mult, x):
    """int64 accumulator of one layer (wrapped to int32 by the caller)."""
    s = layer.stride
    ho, wo = layer.hout, layer.wout
    x = x.astype(np.int64)
    mult = mult.astype(np.int64)
    if layer.kind == Kind.FC:
        return (mult @ x.reshape(-1)).reshape(layer.cout, 1, 1)
    if layer.kind == Kind.PW:
        return np.einsum("oc,chw->ohw", mult, x[:, ::s, ::s][:, :ho, :wo])
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    acc = np.zeros((layer.cout, ho, wo), dtype=np.int64)
    for kh in range(KERNEL):
        for kw in range(KERNEL):
            patch = xp[:, kh:kh + s * (ho - 1) + 1:s, kw:kw + s * (wo - 1) + 1:s]
            if layer.kind == Kind.NORMAL:
                acc += np.einsum("oc,chw->ohw", mult[:, :, kh, kw], patch)
            else:
                acc += mult[:, kh, kw, None, None] * patch
    return acc


def layer_forward(layer, raw, x):
    check_weights(layer, raw)
    x = np.asarray(x)
    if not layer.accepts(x.shape):
        raise ShapeMismatch(f"input {x.shape} does not match {layer.kind.name} {layer.in_shape}")
    acc = _accumulate(layer, multipliers(raw, layer.quant), x)
    return requantize(acc, layer.shift, layer.act == Act.RELU, layer.out_bits)


def dense_forward(model, weights, x, return_all=False):
    """Bit-exact dense execution of ``model`` on one int8 input map.

    With ``return_all`` the list of every layer's output is returned instead
    of just the last one.
    """
    if len(weights) != len(model.layers):
        raise ShapeMismatch("one weight array per layer expected")
    x = check_activation(x)
    if not model.layers[0].accepts(x.shape):
        raise ShapeMismatch(f"input {x.shape} does not match model input {model.in_shape}")
    outs = []
    for layer, raw in zip(model.layers, weights):
        x = layer_forward(layer, raw, x)
        outs.append(x)
    return outs if return_all else x
