import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from g2csim.errors import IndexOutOfRange, ShapeMismatch, UnsupportedKind
from g2csim.model import Kind, LayerSpec
from g2csim.quant import PO2_ZERO, Quant
from g2csim.sparse import (SparseLayer, decode_sparse, dense_vector_count, encode_sparse,
                           pack_vectors, prune_count, prune_vectors, sparsity_stats,
                           to_vectors, unpack_vectors, vector_origin)

from oracles import random_layer_weights

KINDS = [LayerSpec(Kind.NORMAL, 3, 4, 4, 4, quant=Quant.PO2),
         LayerSpec(Kind.DW, 5, 5, 4, 4, quant=Quant.INT8),
         LayerSpec(Kind.PW, 7, 3, 4, 4, quant=Quant.PO2),
         LayerSpec(Kind.PW, 6, 2, 4, 4, quant=Quant.INT8)]


def test_vector_counts():
    assert dense_vector_count(KINDS[0]) == 4 * 3 * 3
    assert dense_vector_count(KINDS[1]) == 15
    assert dense_vector_count(KINDS[2]) == 3 * 3     # ceil(7/3) triplets
    with pytest.raises(UnsupportedKind):
        dense_vector_count(LayerSpec(Kind.FC, 4, 2))


def test_canonical_index_layout():
    l = KINDS[0]
    assert vector_origin(l, (2 * 3 + 1) * 3 + 2) == (2, 1, 2)
    assert vector_origin(KINDS[2], 1 * 3 + 2) == (1, 2)
    with pytest.raises(IndexOutOfRange):
        vector_origin(l, dense_vector_count(l))


def test_pw_padding_uses_zero_code():
    l = KINDS[2]
    vecs = to_vectors(l, np.zeros(l.weight_shape, np.uint8))
    assert vecs.reshape(3, -1)[:, 7:].tolist() == [[PO2_ZERO, PO2_ZERO]] * 3


@pytest.mark.parametrize("layer", KINDS, ids=lambda l: f"{l.kind.name}-{l.quant.name}")
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), s=st.sampled_from([0.0, 0.25, 0.5, 0.9]))
def test_encode_decode_roundtrip(layer, seed, s):
    raw = random_layer_weights(np.random.default_rng(seed), layer, s)
    sp = encode_sparse(layer, raw)
    assert np.array_equal(decode_sparse(sp, layer), raw)
    assert np.all(np.diff(sp.indices) > 0)


def test_all_zero_vectors_dropped():
    l = KINDS[1]
    raw = np.zeros(l.weight_shape, np.int8)
    raw[2, 1, 0] = 5
    sp = encode_sparse(l, raw)
    assert sp.indices.tolist() == [2 * 3 + 1]
    assert sparsity_stats(sp).vector_sparsity == pytest.approx(14 / 15)


def test_decode_rejects_foreign_layer():
    sp = encode_sparse(KINDS[1], np.ones(KINDS[1].weight_shape, np.int8))
    with pytest.raises(ShapeMismatch):
        decode_sparse(sp, LayerSpec(Kind.DW, 5, 5, 8, 8))


def test_decode_rejects_out_of_range_index():
    l = KINDS[1]
    bad = SparseLayer(l, np.ones((1, 3), np.int8), np.array([99]), dense_vector_count(l))
    with pytest.raises(IndexOutOfRange):
        decode_sparse(bad, l)


@given(st.lists(st.lists(st.sampled_from([c for c in range(16) if c != 7]),
                         min_size=3, max_size=3), max_size=20))
def test_po2_payload_roundtrip(vecs):
    v = np.array(vecs, dtype=np.uint8).reshape(-1, 3)
    data = pack_vectors(Quant.PO2, v)
    assert len(data) == 2 * len(v)
    assert np.array_equal(unpack_vectors(Quant.PO2, data, len(v)), v)


def test_int8_payload_is_three_bytes():
    v = np.array([[1, -2, 3]], np.int8)
    assert pack_vectors(Quant.INT8, v) == bytes([1, 254, 3])


def test_prune_count_keeps_one_vector():
    assert prune_count(3, 0.99) == 2
    assert prune_count(100, 0.394) == 40
    assert prune_count(100, 0.0) == 0
    with pytest.raises(ValueError):
        prune_count(10, 1.0)


def test_prune_removes_smallest_norm_first():
    l = LayerSpec(Kind.DW, 1, 1, 4, 4)
    raw = np.array([[[9, 9, 9], [1, 0, 0], [1, 0, 0]]], np.int8)
    out = prune_vectors(l, raw, 0.5)          # ceil(1.5) = 2 vectors, tie -> lower index
    assert out.tolist() == [[[9, 9, 9], [0, 0, 0], [0, 0, 0]]]
    out = prune_vectors(l, raw, 0.3)
    assert out.tolist() == [[[9, 9, 9], [0, 0, 0], [1, 0, 0]]]


def test_prune_zero_is_identity(coarse):
    model, weights = coarse
    for l, w in zip(model.layers, weights):
        assert np.array_equal(prune_vectors(l, w, 0.0), w)


def test_prune_never_empties_a_layer():
    l = LayerSpec(Kind.DW, 1, 1, 4, 4)
    out = prune_vectors(l, np.ones(l.weight_shape, np.int8), 0.99)
    assert encode_sparse(l, out).nnz == 1
