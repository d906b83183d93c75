"""Weight/activation number formats.

Two weight formats are supported:

* ``Quant.PO2``  -- 4-bit power-of-two codes. Bit 3 is the sign, bits 2..0
  hold the exponent ``e`` (value ``+-2**-e`` times the layer scale) and the
  code ``0b1111`` is an exact zero. Code ``0b0111`` is unused and rejected.
* ``Quant.INT8`` -- plain signed 8-bit integers.

Inside the integer datapath a Po2 weight with exponent ``e`` multiplies by
``2**(PO2_FRAC_BITS - e)``, i.e. a left shift; the ``2**-PO2_FRAC_BITS``
factor is folded into the layer's requantization shift.
"""
from enum import IntEnum
import math

import numpy as np

PO2_ZERO = 0b1111
PO2_MAX_EXP = 6
PO2_FRAC_BITS = PO2_MAX_EXP
_PO2_UNUSED = 0b0111


class Quant(IntEnum):
    PO2 = 0
    INT8 = 1

    @property
    def bits(self):
        return 4 if self is Quant.PO2 else 8


def po2_encode(value, layer_scale=1.0):
    """Nearest 4-bit Po2 code to ``value`` by absolute log2 distance.

    Magnitudes beyond either end of the grid saturate to the endpoint code.
    """
    if layer_scale <= 0:
        raise ValueError("layer_scale must be positive")
    if value == 0:
        return PO2_ZERO
    sign = 1 if value < 0 else 0
    lg = math.log2(abs(value) / layer_scale)
    # first minimum wins: ties go to the larger magnitude
    e = min(range(PO2_MAX_EXP + 1), key=lambda k: abs(lg + k))
    return (sign << 3) | e


def po2_decode(code, layer_scale=1.0):
    code = int(code)
    if code == PO2_ZERO:
        return 0.0
    if code == _PO2_UNUSED or not 0 <= code <= 0xF:
        raise ValueError(f"invalid Po2 code {code:#06b}")
    mag = layer_scale * 2.0 ** -(code & 0x7)
    return -mag if code & 0x8 else mag


def po2_levels(layer_scale=1.0):
    """All representable values (zero first), as floats."""
    vals = [0.0]
    for sign in (0, 1):
        for e in range(PO2_MAX_EXP + 1):
            vals.append(po2_decode((sign << 3) | e, layer_scale))
    return vals


def valid_po2_codes(codes):
    codes = np.asarray(codes)
    return bool(np.all((codes <= 0xF) & (codes != _PO2_UNUSED)))


def po2_multipliers(codes):
    """Integer multipliers ``+-2**(6-e)`` (0 for the zero code)."""
    codes = np.asarray(codes, dtype=np.int64)
    if not valid_po2_codes(codes) or np.any(codes < 0):
        raise ValueError("array holds invalid Po2 codes")
    mag = np.left_shift(1, PO2_FRAC_BITS - (codes & 0x7))
    mult = np.where(codes & 0x8, -mag, mag)
    return np.where(codes == PO2_ZERO, 0, mult).astype(np.int32)


def po2_shift_sign(codes):
    """Split codes into (left shift amount, sign in {-1,0,1}) for shift-only MACs."""
    codes = np.asarray(codes, dtype=np.int64)
    shift = PO2_FRAC_BITS - (codes & 0x7)
    sign = np.where(codes & 0x8, -1, 1)
    sign = np.where(codes == PO2_ZERO, 0, sign)
    return np.where(codes == PO2_ZERO, 0, shift), sign


def multipliers(codes, quant):
    """Decode raw stored weights into int32 datapath multipliers."""
    if quant == Quant.PO2:
        return po2_multipliers(codes)
    return np.asarray(codes).astype(np.int32)


def out_range(bits):
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def wrap_int32(acc):
    """Two's-complement wrap of an integer array to int32."""
    return np.asarray(acc, dtype=np.int64).astype(np.int32)


def requantize(acc, shift, relu, out_bits):
    """Arithmetic right shift, activation, clamp to the signed output width."""
    y = np.right_shift(wrap_int32(acc), shift)
    if relu:
        y = np.maximum(y, 0)
    lo, hi = out_range(out_bits)
    y = np.clip(y, lo, hi)
    return y.astype(np.int8 if out_bits == 8 else np.int16)
