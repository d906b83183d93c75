"""Independent oracles used by the tests.

``loop_forward`` is a straight loop nest over decoded weight values with no
numpy broadcasting tricks, so it shares nothing with the library's einsum
path or the engine's vector datapath.
"""
import numpy as np

from g2csim.model import Act, Kind
from g2csim.quant import Quant, po2_decode
from g2csim.sparse import from_vectors, to_vectors, zero_code


def weight_value(code, quant):
    # Po2 values are fractions; scale by 64 to stay in integers
    if quant == Quant.PO2:
        return int(round(po2_decode(int(code)) * 64))
    return int(code)


def loop_layer(layer, raw, x):
    cin, cout, s = layer.cin, layer.cout, layer.stride
    ho, wo = layer.hout, layer.wout
    acc = [[[0] * wo for _ in range(ho)] for _ in range(cout)]
    if layer.kind == Kind.FC:
        flat = [int(v) for v in np.asarray(x).reshape(-1)]
        acc = [[[sum(weight_value(raw[o][i], layer.quant) * flat[i] for i in range(cin))]]
               for o in range(cout)]
    else:
        h, w = layer.h, layer.w
        for o in range(cout):
            for r in range(ho):
                for c in range(wo):
                    tot = 0
                    if layer.kind == Kind.PW:
                        for i in range(cin):
                            tot += weight_value(raw[o][i], layer.quant) * int(x[i][r * s][c * s])
                    else:
                        chans = range(cin) if layer.kind == Kind.NORMAL else (o,)
                        for i in chans:
                            for kh in range(3):
                                for kw in range(3):
                                    rr, cc = r * s + kh - 1, c * s + kw - 1
                                    if 0 <= rr < h and 0 <= cc < w:
                                        wv = raw[o][i][kh][kw] if layer.kind == Kind.NORMAL \
                                            else raw[o][kh][kw]
                                        tot += weight_value(wv, layer.quant) * int(x[i][rr][cc])
                    acc[o][r][c] = tot
    lo, hi = -(1 << (layer.out_bits - 1)), (1 << (layer.out_bits - 1)) - 1
    out = np.zeros((cout, ho, wo), dtype=np.int64)
    for o in range(cout):
        for r in range(ho):
            for c in range(wo):
                v = acc[o][r][c]
                v = ((v + (1 << 31)) % (1 << 32)) - (1 << 31)   # int32 wrap
                v >>= layer.shift
                if layer.act == Act.RELU:
                    v = max(v, 0)
                out[o, r, c] = min(max(v, lo), hi)
    return out


def loop_macs(layer):
    """MACs counted by walking every output position (padding taps included)."""
    if layer.kind == Kind.FC:
        return layer.cin * layer.cout
    per_out = {Kind.NORMAL: layer.cin * 9, Kind.DW: 9, Kind.PW: layer.cin}[layer.kind]
    n = 0
    for _o in range(layer.cout):
        for _r in range(layer.hout):
            for _c in range(layer.wout):
                n += per_out
    return n


def random_layer_weights(rng, layer, sparsity=0.0):
    """Random stored codes, then a ``sparsity`` fraction of vectors zeroed."""
    shape = layer.weight_shape
    if layer.quant == Quant.PO2:
        codes = rng.choice([c for c in range(16) if c != 0b0111], size=shape).astype(np.uint8)
    else:
        codes = rng.integers(-128, 128, size=shape).astype(np.int8)
    if layer.kind == Kind.FC or sparsity == 0:
        return codes
    vecs = to_vectors(layer, codes).copy()
    k = int(round(sparsity * len(vecs)))
    vecs[rng.permutation(len(vecs))[:k]] = zero_code(layer)
    return from_vectors(layer, vecs)
