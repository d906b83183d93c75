"""Binary model container (``EG2C``).

Layout, little-endian::

    "EG2C"  u16 version  u8 role  u16 n_layers
    per layer:  u8 kind  u8 quant  u16 Cin  u16 Cout  u16 H  u16 W
                u8 stride  i8 shift  u8 act  u8 out_bits
                raw weights (Po2: 2 codes per byte, low nibble first; Int8: 1 byte)
    sparse section, per conv layer (FC layers are dense and have no entry):
                u32 nonzero_vectors  u16 indices[n]  packed vector payload
"""
import struct

import numpy as np

from .model import Kind, LayerSpec, ModelSpec
from .quant import Quant
from .sparse import (INDEX_BYTES, encode_sparse, pack_vectors, prune_vectors, sparsity_stats,
                     unpack_vectors, vector_payload_bytes)

MAGIC = b"EG2C"
VERSION = 1
_HEAD = struct.Struct("<4sHBH")
_LAYER = struct.Struct("<BBHHHHBbBB")


def pack_codes(layer, raw):
    flat = np.asarray(raw).reshape(-1)
    if layer.quant == Quant.INT8:
        return flat.astype(np.int8).tobytes()
    codes = flat.astype(np.uint8)
    if len(codes) % 2:
        codes = np.append(codes, np.uint8(0))
    return (codes[0::2] | (codes[1::2] << 4)).astype(np.uint8).tobytes()


def unpack_codes(layer, data):
    n = int(np.prod(layer.weight_shape))
    if layer.quant == Quant.INT8:
        arr = np.frombuffer(data, dtype=np.int8, count=n)
    else:
        b = np.frombuffer(data, dtype=np.uint8, count=(n + 1) // 2)
        arr = np.stack([b & 0xF, b >> 4], axis=1).reshape(-1)[:n]
    return arr.reshape(layer.weight_shape).copy()


def raw_size(layer):
    n = int(np.prod(layer.weight_shape))
    return n if layer.quant == Quant.INT8 else (n + 1) // 2


def dumps(model, weights):
    out = [_HEAD.pack(MAGIC, VERSION, int(model.role), len(model.layers))]
    for layer, raw in zip(model.layers, weights):
        out.append(_LAYER.pack(layer.kind, layer.quant, layer.cin, layer.cout, layer.h,
                               layer.w, layer.stride, layer.shift, layer.act, layer.out_bits))
        out.append(pack_codes(layer, raw))
    for layer, raw in zip(model.layers, weights):
        if layer.kind == Kind.FC:
            continue
        sp = encode_sparse(layer, raw)
        out.append(struct.pack("<I", sp.nnz))
        out.append(sp.indices.astype("<u2").tobytes())
        out.append(pack_vectors(layer.quant, sp.vectors))
    return b"".join(out)


def loads(data):
    try:
        return _loads(bytes(data))
    except struct.error as exc:
        raise ValueError(f"truncated model file ({exc})") from None


def _loads(data):
    magic, version, role, n = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError("not an EG2C model file")
    if version != VERSION:
        raise ValueError(f"unsupported model version {version}")
    pos = _HEAD.size
    layers, weights = [], []
    for _ in range(n):
        f = _LAYER.unpack_from(data, pos)
        pos += _LAYER.size
        layer = LayerSpec(Kind(f[0]), f[2], f[3], f[4], f[5], f[6], Quant(f[1]), f[7], f[8], f[9])
        size = raw_size(layer)
        weights.append(unpack_codes(layer, data[pos:pos + size]))
        pos += size
        layers.append(layer)
    for layer, raw in zip(layers, weights):
        if layer.kind == Kind.FC:
            continue
        (nnz,) = struct.unpack_from("<I", data, pos)
        pos += 4
        idx = np.frombuffer(data, dtype="<u2", count=nnz, offset=pos).astype(np.int64)
        pos += INDEX_BYTES * nnz
        size = nnz * vector_payload_bytes(layer.quant)
        vecs = unpack_vectors(layer.quant, data[pos:pos + size], nnz)
        pos += size
        sp = encode_sparse(layer, raw)
        if not (np.array_equal(idx, sp.indices) and np.array_equal(vecs, sp.vectors)):
            raise ValueError("sparse section disagrees with the dense weights")
    if pos != len(data):
        raise ValueError(f"{len(data) - pos} trailing bytes in model file")
    return ModelSpec(role, layers), weights


def save(path, model, weights):
    with open(path, "wb") as f:
        f.write(dumps(model, weights))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())


def prune_model(model, weights, s):
    """Vector-prune every conv layer to sparsity ``s``.

    Returns the pruned weights and one :class:`SparsityStats` per conv layer.
    """
    pruned, stats = [], []
    for layer, raw in zip(model.layers, weights):
        w = prune_vectors(layer, raw, s)
        pruned.append(w)
        if layer.kind != Kind.FC:
            stats.append(sparsity_stats(encode_sparse(layer, w)))
    return pruned, stats


def prune_file(src, dst, s):
    model, weights = load(src)
    pruned, stats = prune_model(model, weights, s)
    save(dst, model, pruned)
    return stats
