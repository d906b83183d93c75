"""Vector-wise sparse weight format.

A weight *vector* is three stored weight codes: one kernel row for normal and
depth-wise 3x3 convs, one group of three input channels for point-wise
convs. All-zero vectors are dropped; the survivors are kept in canonical
order together with their flat canonical index (16-bit in memory).

Canonical vector index:

* ``NORMAL``: ``(co * Cin + ci) * 3 + kernel_row``
* ``DW``:     ``c * 3 + kernel_row``
* ``PW``:     ``co * ceil(Cin / 3) + triplet``

FC layers are kept dense and are rejected here.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import IndexOutOfRange, ShapeMismatch, UnsupportedKind
from .model import KERNEL, Kind, check_weights
from .quant import PO2_ZERO, Quant, multipliers

VEC = 3
INDEX_BYTES = 2
MAX_VECTORS = 1 << (8 * INDEX_BYTES)


@dataclass(frozen=True, eq=False)
class SparseLayer:
    layer: object
    vectors: np.ndarray      # (n, 3) stored codes, canonical order
    indices: np.ndarray      # (n,) strictly increasing
    dense_vector_count: int

    def __post_init__(self):
        if len(self.vectors) != len(self.indices):
            raise ValueError("one index per vector")
        if len(self.indices) and np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")

    @property
    def nnz(self):
        return len(self.indices)

    def __eq__(self, other):
        return (isinstance(other, SparseLayer) and self.layer == other.layer
                and self.dense_vector_count == other.dense_vector_count
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.vectors, other.vectors))


@dataclass(frozen=True)
class SparsityStats:
    total_vectors: int
    nonzero_vectors: int

    @property
    def vector_sparsity(self):
        if self.total_vectors == 0:
            return 0.0
        return 1.0 - self.nonzero_vectors / self.total_vectors


def triplets(cin):
    return -(-cin // VEC)


def dense_vector_count(layer):
    if layer.kind == Kind.NORMAL:
        return layer.cout * layer.cin * KERNEL
    if layer.kind == Kind.DW:
        return layer.cin * KERNEL
    if layer.kind == Kind.PW:
        return layer.cout * triplets(layer.cin)
    raise UnsupportedKind("FC layers are stored dense")


def zero_code(layer):
    return PO2_ZERO if layer.quant == Quant.PO2 else 0


def to_vectors(layer, raw):
    """All dense vectors of a layer in canonical order, shape (n, 3)."""
    raw = check_weights(layer, raw)
    if layer.kind in (Kind.NORMAL, Kind.DW):
        return raw.reshape(-1, VEC)
    if layer.kind == Kind.PW:
        t = triplets(layer.cin)
        padded = np.full((layer.cout, t * VEC), zero_code(layer), dtype=raw.dtype)
        padded[:, :layer.cin] = raw
        return padded.reshape(-1, VEC)
    raise UnsupportedKind("FC layers are stored dense")


def from_vectors(layer, vecs):
    vecs = np.asarray(vecs)
    if layer.kind in (Kind.NORMAL, Kind.DW):
        return vecs.reshape(layer.weight_shape).copy()
    return vecs.reshape(layer.cout, -1)[:, :layer.cin].copy()


def vector_origin(layer, index):
    """Decode a canonical index into its (channel..., row/triplet) tuple."""
    index = int(index)
    if not 0 <= index < dense_vector_count(layer):
        raise IndexOutOfRange(f"vector index {index} outside layer")
    if layer.kind == Kind.NORMAL:
        pair, kr = divmod(index, KERNEL)
        co, ci = divmod(pair, layer.cin)
        return co, ci, kr
    if layer.kind == Kind.DW:
        c, kr = divmod(index, KERNEL)
        return c, c, kr
    co, t = divmod(index, triplets(layer.cin))
    return co, t


def nonzero_mask(layer, vecs):
    return np.any(multipliers(vecs, layer.quant) != 0, axis=1)


def encode_sparse(layer, raw):
    vecs = to_vectors(layer, raw)
    if len(vecs) > MAX_VECTORS:
        raise ValueError(f"{len(vecs)} vectors exceed the 16-bit index space")
    keep = np.flatnonzero(nonzero_mask(layer, vecs))
    return SparseLayer(layer, vecs[keep].copy(), keep.astype(np.int64), len(vecs))


def decode_sparse(sparse, layer):
    if sparse.layer != layer:
        raise ShapeMismatch("sparse layer was encoded for a different LayerSpec")
    n = dense_vector_count(layer)
    if sparse.dense_vector_count != n:
        raise ShapeMismatch("dense vector count disagrees with the layer")
    if sparse.nnz and (sparse.indices.min() < 0 or sparse.indices.max() >= n):
        raise IndexOutOfRange("sparse index outside the dense vector range")
    vecs = np.full((n, VEC), zero_code(layer), dtype=layer.weight_dtype)
    vecs[sparse.indices] = sparse.vectors
    return from_vectors(layer, vecs)


def sparsity_stats(sparse):
    return SparsityStats(sparse.dense_vector_count, sparse.nnz)


def vector_payload_bytes(quant):
    # 12 bits of Po2 codes round up to 2 bytes; 3 Int8 codes take 3
    return 2 if quant == Quant.PO2 else 3


def pack_vectors(quant, vecs):
    vecs = np.asarray(vecs)
    if quant == Quant.PO2:
        v = vecs.astype(np.uint16)
        words = v[:, 0] | (v[:, 1] << 4) | (v[:, 2] << 8)
        return words.astype("<u2").tobytes()
    return vecs.astype(np.int8).tobytes()


def unpack_vectors(quant, data, n):
    if quant == Quant.PO2:
        words = np.frombuffer(bytes(data[:2 * n]), dtype="<u2").astype(np.uint16)
        out = np.stack([(words >> s) & 0xF for s in (0, 4, 8)], axis=1)
        return out.astype(np.uint8)
    return np.frombuffer(bytes(data[:3 * n]), dtype=np.int8).reshape(n, VEC).copy()


def payload_bytes(sparse):
    return sparse.nnz * vector_payload_bytes(sparse.layer.quant)


def prune_count(total, s):
    """Vectors to zero for a target sparsity ``s``, keeping at least one."""
    if not 0 <= s < 1:
        raise ValueError("target sparsity must lie in [0, 1)")
    k = math.ceil(round(s * total, 9))
    return max(0, min(k, total - 1))


def prune_vectors(layer, raw, s):
    """Zero the ``s`` fraction of vectors with the smallest L1 norm.

    Ties go to the lower canonical index. FC layers are returned unchanged.
    """
    if layer.kind == Kind.FC:
        return np.array(raw, copy=True)
    vecs = to_vectors(layer, raw).copy()
    k = prune_count(len(vecs), s)
    if k == 0:
        return from_vectors(layer, vecs)
    l1 = np.abs(multipliers(vecs, layer.quant).astype(np.int64)).sum(axis=1)
    order = np.lexsort((np.arange(len(vecs)), l1))
    vecs[order[:k]] = zero_code(layer)
    return from_vectors(layer, vecs)
