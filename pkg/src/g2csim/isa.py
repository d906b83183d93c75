"""32-bit instruction set, assembler and disassembler.

Every word carries its opcode in bits 31..28. Operand layouts::

    SET_LAYER    27:26 kind  25 prec(1=int8)  24 sparse  23 cir  22 drir
                 21:19 stride-1  18 relu  17 out16  16:12 requant shift  7:0 layer id
    SET_SHAPE_A  27:14 Cin   13:0 Cout
    SET_SHAPE_B  27:14 H     13:0 W
    SET_ADDR     27:25 region  24:0 byte address
    RUN_LAYER    7:0 layer id
    SET_THRESH   15:0 signed threshold
    NOP SWAP_GB CMP_THRESH HALT   no operands

Any bit not covered by an operand must be zero; other words disassemble as
``.word``.
"""
from dataclasses import dataclass
from enum import IntEnum
import re
import struct
from typing import Tuple

import numpy as np

from .errors import CapacityExceeded, FieldRangeError
from .hw import MemoryConfig, Region
from .mapper import EngineConfig, map_layer, output_bytes, staged_bytes
from .model import Act, Kind, Role
from .modelio import pack_codes
from .sparse import SparseLayer, decode_sparse, encode_sparse, pack_vectors, to_vectors

WORD_MASK = 0xFFFFFFFF


class Opcode(IntEnum):
    NOP = 0x0
    SET_LAYER = 0x1
    SET_SHAPE_A = 0x2
    SET_SHAPE_B = 0x3
    SET_ADDR = 0x4
    RUN_LAYER = 0x5
    SWAP_GB = 0x6
    CMP_THRESH = 0x7
    SET_THRESH = 0x8
    HALT = 0xF


# (name, hi, lo, bias, signed)
FIELDS = {
    Opcode.SET_LAYER: [("kind", 27, 26, 0, False), ("prec", 25, 25, 0, False),
                       ("sparse", 24, 24, 0, False), ("cir", 23, 23, 0, False),
                       ("drir", 22, 22, 0, False), ("stride", 21, 19, 1, False),
                       ("relu", 18, 18, 0, False), ("out16", 17, 17, 0, False),
                       ("shift", 16, 12, 0, False), ("id", 7, 0, 0, False)],
    Opcode.SET_SHAPE_A: [("Cin", 27, 14, 0, False), ("Cout", 13, 0, 0, False)],
    Opcode.SET_SHAPE_B: [("H", 27, 14, 0, False), ("W", 13, 0, 0, False)],
    Opcode.SET_ADDR: [("region", 27, 25, 0, False), ("addr", 24, 0, 0, False)],
    Opcode.RUN_LAYER: [("id", 7, 0, 0, False)],
    Opcode.SET_THRESH: [("value", 15, 0, 0, True)],
}

_SYMBOLS = {
    "kind": {int(k): k.name.lower() for k in Kind},
    "prec": {0: "po2", 1: "int8"},
    "region": {0: "weight", 1: "index", 2: "act_a", 3: "act_b", 4: "output"},
}


@dataclass(frozen=True)
class Instruction:
    op: Opcode
    args: Tuple[Tuple[str, int], ...] = ()

    def __getitem__(self, name):
        return dict(self.args)[name]

    @classmethod
    def make(cls, op, **kw):
        names = [f[0] for f in FIELDS.get(Opcode(op), [])]
        missing = set(names) ^ set(kw)
        if missing:
            raise ValueError(f"{Opcode(op).name}: bad operands {sorted(missing)}")
        return cls(Opcode(op), tuple((n, int(kw[n])) for n in names))

    def encode(self):
        word = int(self.op) << 28
        for (name, hi, lo, bias, signed), (_, value) in zip(FIELDS.get(self.op, []), self.args):
            width = hi - lo + 1
            v = value - bias
            if signed:
                if not -(1 << (width - 1)) <= v < (1 << (width - 1)):
                    raise FieldRangeError(f"{self.op.name}.{name}={value} exceeds {width} signed bits")
                v &= (1 << width) - 1
            elif not 0 <= v < (1 << width):
                raise FieldRangeError(f"{self.op.name}.{name}={value} exceeds {width} bits")
            word |= v << lo
        return word

    def text(self):
        parts = [self.op.name]
        for name, value in self.args:
            if name in _SYMBOLS:
                parts.append(f"{name}={_SYMBOLS[name].get(value, value)}")
            elif name == "addr":
                parts.append(f"addr={value:#08x}")
            else:
                parts.append(f"{name}={value}")
        return " ".join(parts)


def decode(word):
    """Decode a word, or return None if it is not a canonical instruction."""
    word &= WORD_MASK
    try:
        op = Opcode(word >> 28)
    except ValueError:
        return None
    args = []
    used = 0xF << 28
    for name, hi, lo, bias, signed in FIELDS.get(op, []):
        width = hi - lo + 1
        v = (word >> lo) & ((1 << width) - 1)
        used |= ((1 << width) - 1) << lo
        if signed and v >> (width - 1):
            v -= 1 << width
        args.append((name, v + bias))
    if word & ~used & WORD_MASK:
        return None
    return Instruction(op, tuple(args))


def disassemble_word(word):
    ins = decode(word)
    return ins.text() if ins is not None else f".word {word & WORD_MASK:#010x}"


def disassemble(words):
    """One listing line per word: ``pc  text``. Never raises."""
    return "\n".join(f"{pc:04d}  {disassemble_word(w)}" for pc, w in enumerate(words))


_LINE = re.compile(r"^\s*(?:\d+\s+)?(\S+)(.*)$")


def parse_line(line):
    m = _LINE.match(line)
    if not m:
        raise ValueError(f"cannot parse {line!r}")
    mnem, rest = m.group(1), m.group(2).split()
    if mnem == ".word":
        return int(rest[0], 0)
    op = Opcode[mnem]
    kw = {}
    for tok in rest:
        name, _, val = tok.partition("=")
        rev = {v: k for k, v in _SYMBOLS.get(name, {}).items()}
        kw[name] = rev[val] if val in rev else int(val, 0)
    return Instruction.make(op, **kw).encode()


def parse_listing(text):
    """Inverse of :func:`disassemble` (blank lines and ``#`` comments skipped)."""
    words = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        if line.strip():
            words.append(parse_line(line))
    return words


@dataclass(frozen=True)
class Features:
    sparse: bool = True
    cir: bool = True
    drir: bool = True


@dataclass(frozen=True)
class Program:
    words: Tuple[int, ...]
    role: Role = Role.DETECTOR
    n_layers: int = 0
    weight_bytes: int = 0
    index_bytes: int = 0

    def listing(self):
        return disassemble(self.words)


PROGRAM_MAGIC = b"EG2P"


def dumps_program(program):
    words = np.asarray(program.words, dtype="<u4")
    return PROGRAM_MAGIC + struct.pack("<I", len(words)) + words.tobytes()


def loads_program(data):
    data = bytes(data)
    if data[:4] != PROGRAM_MAGIC:
        raise ValueError("not an EG2P program file")
    (n,) = struct.unpack_from("<I", data, 4)
    if len(data) != 8 + 4 * n:
        raise ValueError("program file length does not match its word count")
    return [int(w) for w in np.frombuffer(data, dtype="<u4", offset=8)]


def layer_image(layer, raw, sparse_enabled):
    """Bytes a layer occupies in (weight GB, index SRAM).

    Sparse conv layers store their nonzero vectors plus an index block
    (u16 count, then u16 indices); with sparsity disabled every vector is
    stored and no index block exists. FC weights are always dense codes.
    """
    if layer.kind == Kind.FC:
        return pack_codes(layer, raw), b""
    sp = raw if isinstance(raw, SparseLayer) else encode_sparse(layer, raw)
    if not sparse_enabled:
        dense = raw if not isinstance(raw, SparseLayer) else decode_sparse(raw, layer)
        return pack_vectors(layer.quant, to_vectors(layer, dense)), b""
    index = struct.pack("<H", sp.nnz) + sp.indices.astype("<u2").tobytes()
    return pack_vectors(layer.quant, sp.vectors), index


def layer_weights(layer, raw, sparse_enabled):
    """The weight view the mapper schedules: SparseLayer, or dense codes."""
    if layer.kind == Kind.FC or not sparse_enabled:
        if isinstance(raw, SparseLayer):
            return decode_sparse(raw, layer)
        return raw
    return raw if isinstance(raw, SparseLayer) else encode_sparse(layer, raw)


def _act_bytes(shape, bits):
    return int(np.prod(shape)) * bits // 8


def assemble(model, weights, cfg=EngineConfig(), mem=MemoryConfig(), features=Features(),
             weight_base=0, index_base=0, check_staging=True):
    """Compile a model into a :class:`Program`.

    ``weights`` holds one entry per layer: raw stored codes or a
    :class:`~g2csim.sparse.SparseLayer` for conv layers.
    """
    if not model.layers:
        raise ValueError("cannot assemble a model without layers")
    if len(weights) != len(model.layers):
        raise ValueError("one weight entry per layer expected")
    words = []
    w_addr, i_addr = weight_base, index_base
    act = Region.ACT_A
    first = model.layers[0]
    if _act_bytes(first.in_shape, 8) > mem.capacity(act):
        raise CapacityExceeded("input frame exceeds the activation buffer")
    for lid, (layer, raw) in enumerate(zip(model.layers, weights)):
        if lid > 0xFF:
            raise FieldRangeError("more than 256 layers")
        layer_words = [
            Instruction.make(Opcode.SET_LAYER, kind=layer.kind, prec=layer.quant,
                             sparse=features.sparse and layer.kind != Kind.FC,
                             cir=features.cir, drir=features.drir, stride=layer.stride,
                             relu=layer.act == Act.RELU, out16=layer.out_bits == 16,
                             shift=layer.shift, id=lid),
            Instruction.make(Opcode.SET_SHAPE_A, Cin=layer.cin, Cout=layer.cout),
            Instruction.make(Opcode.SET_SHAPE_B, H=layer.h, W=layer.w),
            Instruction.make(Opcode.SET_ADDR, region=Region.WEIGHT, addr=w_addr),
            Instruction.make(Opcode.SET_ADDR, region=Region.INDEX, addr=i_addr),
            Instruction.make(Opcode.SET_ADDR, region=act, addr=0),
            Instruction.make(Opcode.RUN_LAYER, id=lid),
        ]
        # encode first: out-of-range fields fail before any capacity check
        words += [i.encode() for i in layer_words]
        out_region = Region.ACT_B if act == Region.ACT_A else Region.ACT_A
        if _act_bytes(layer.out_shape, layer.out_bits) > mem.capacity(out_region):
            raise CapacityExceeded(f"layer {lid} output exceeds the activation buffer")
        wimg, iimg = layer_image(layer, raw, features.sparse)
        if w_addr + len(wimg) > mem.weight_gb:
            raise CapacityExceeded(f"layer {lid} weights overflow the weight buffer")
        if i_addr + len(iimg) > mem.index_sram:
            raise CapacityExceeded(f"layer {lid} indices overflow the index SRAM")
        if check_staging:
            sched = map_layer(layer, layer_weights(layer, raw, features.sparse), cfg,
                              features.cir, features.drir, lid, mem.in_act_buf)
            for wave in sched.waves:
                if staged_bytes(layer, wave) > mem.in_act_buf:
                    raise CapacityExceeded(f"layer {lid}: a wave stages more than the input buffer")
                if output_bytes(layer, wave) > mem.out_act_buf:
                    raise CapacityExceeded(f"layer {lid}: a wave emits more than the output buffer")
        w_addr += len(wimg)
        i_addr += len(iimg)
        if lid < len(model.layers) - 1:
            words.append(Instruction.make(Opcode.SWAP_GB).encode())
            act = out_region
    if model.role == Role.DETECTOR:
        words.append(Instruction.make(Opcode.CMP_THRESH).encode())
    words.append(Instruction.make(Opcode.HALT).encode())
    if len(words) > mem.instr_words:
        raise CapacityExceeded("program exceeds the instruction SRAM")
    return Program(tuple(words), model.role, len(model.layers),
                   w_addr - weight_base, i_addr - index_base)


def threshold_program(threshold):
    """Two-word program that loads the detection threshold register."""
    return Program((Instruction.make(Opcode.SET_THRESH, value=threshold).encode(),
                    Instruction.make(Opcode.HALT).encode()))
