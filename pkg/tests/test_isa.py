import numpy as np
import pytest
from hypothesis import given, strategies as st

from g2csim.errors import CapacityExceeded, FieldRangeError
from g2csim.hw import MemoryConfig
from g2csim.isa import (FIELDS, Features, Instruction, Opcode, Program, assemble, decode,
                        disassemble, disassemble_word, dumps_program, loads_program,
                        parse_listing, threshold_program)
from g2csim.model import Act, Kind, LayerSpec, ModelSpec, Role


def _legal_args(op):
    out = {}
    for name, hi, lo, bias, signed in FIELDS.get(op, []):
        width = hi - lo + 1
        if signed:
            out[name] = st.integers(-(1 << (width - 1)), (1 << (width - 1)) - 1)
        else:
            out[name] = st.integers(bias, (1 << width) - 1 + bias)
    return st.fixed_dictionaries(out)


instructions = st.sampled_from(list(Opcode)).flatmap(
    lambda op: _legal_args(op).map(lambda kw: Instruction.make(op, **kw)))


@given(instructions)
def test_encode_decode_identity(ins):
    word = ins.encode()
    assert 0 <= word < 2 ** 32
    assert decode(word) == ins
    assert decode(word).encode() == word


@given(st.lists(instructions, max_size=20))
def test_listing_roundtrip(prog):
    words = [i.encode() for i in prog]
    assert parse_listing(disassemble(words)) == words


def test_reserved_bits_disassemble_as_raw_word():
    word = Instruction.make(Opcode.HALT).encode() | 1
    assert decode(word) is None
    assert disassemble_word(word) == ".word 0xf0000001"
    assert parse_listing(disassemble([word])) == [word]


def test_unknown_opcode_is_raw_word():
    assert disassemble_word(0xA0000000).startswith(".word")


def test_field_range_error():
    with pytest.raises(FieldRangeError):
        Instruction.make(Opcode.SET_SHAPE_A, Cin=1 << 14, Cout=1).encode()
    with pytest.raises(FieldRangeError):
        Instruction.make(Opcode.SET_THRESH, value=40000).encode()


def test_set_thresh_is_signed():
    ins = decode(Instruction.make(Opcode.SET_THRESH, value=-5).encode())
    assert ins["value"] == -5


def test_assembling_wide_layer_fails_with_range_error():
    l = LayerSpec(Kind.FC, 1 << 14, 1, quant=0, out_bits=16)
    model = ModelSpec(Role.COARSE, [l])
    raw = np.zeros(l.weight_shape, np.uint8)
    with pytest.raises(FieldRangeError):
        assemble(model, [raw], mem=MemoryConfig(weight_gb=1 << 20, act_gb_a=1 << 15))


def test_program_file_roundtrip(coarse):
    prog = assemble(*coarse)
    assert loads_program(dumps_program(prog)) == list(prog.words)
    with pytest.raises(ValueError):
        loads_program(b"XXXX" + dumps_program(prog)[4:])
    with pytest.raises(ValueError):
        loads_program(dumps_program(prog)[:-1])


def test_program_layout(reference_models):
    sizes = [len(assemble(m, w).words) for m, w in reference_models]
    # 8 words per layer minus the final SWAP_GB, plus HALT (and CMP_THRESH)
    assert sizes == [8 * 3 - 1 + 2, 8 * 10 - 1 + 1, 8 * 15 - 1 + 1]
    det = assemble(*reference_models[0])
    assert decode(det.words[-2]).op == Opcode.CMP_THRESH


def test_dense_program_has_no_index_block(coarse):
    assert assemble(*coarse, features=Features(sparse=False)).index_bytes == 0


def test_weight_overflow_detected(precise):
    with pytest.raises(CapacityExceeded):
        assemble(*precise, mem=MemoryConfig(weight_gb=1024))


def test_threshold_program():
    prog = threshold_program(-7)
    assert [decode(w).op for w in prog.words] == [Opcode.SET_THRESH, Opcode.HALT]
    assert isinstance(prog, Program)


def test_assemble_rejects_weight_count_mismatch(coarse):
    model, weights = coarse
    with pytest.raises(ValueError):
        assemble(model, weights[:-1])


def test_relu_and_out16_fields(detector):
    prog = assemble(*detector)
    sets = [decode(w) for w in prog.words if decode(w).op == Opcode.SET_LAYER]
    assert [s["relu"] for s in sets] == [l.act == Act.RELU for l in detector[0].layers]
    assert sets[-1]["out16"] == 1
