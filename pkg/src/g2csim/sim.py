"""Instruction-driven engine model.

The engine executes a :class:`~g2csim.isa.Program` against its own memory
images: weights and indices are written into the weight buffer and index
SRAM at the addresses the program names, and every layer reads its input
from one activation buffer and writes the other (ping-pong). Layer math runs
vector by vector from the stored codes -- Po2 weights as shifts -- so it
shares no code with :func:`g2csim.model.dense_forward`.

Timing is cycle-approximate at wave granularity. A layer costs
``max(compute, prep) + min(first wave, first prep chunk)`` cycles where
compute is the sum of wave durations from the lane schedule and prep is the
time to stage each wave's input rows at ``prep_bandwidth`` bytes per cycle.
Every other instruction costs one cycle. None of this depends on activation
values, so a loaded program's statistics are computed once.
"""
from dataclasses import asdict, dataclass, field, replace
import os
import struct
import sys
from typing import List, Optional

import numpy as np

from .errors import BufferOverflow, Fault
from .hw import MemoryConfig, Region
from .isa import Features, Opcode, Program, assemble, decode, layer_image
from .mapper import EngineConfig, map_layer, staged_bytes, staged_rows
from .model import Act, Kind, LayerSpec, check_activation
from .modelio import unpack_codes
from .quant import Quant, po2_shift_sign, requantize, valid_po2_codes, wrap_int32
from .sparse import (INDEX_BYTES, SparseLayer, VEC, dense_vector_count, from_vectors,
                     prune_vectors, triplets, unpack_vectors, vector_payload_bytes)

STATS_SCHEMA_VERSION = 1
DEFAULT_CLOCK_HZ = 2_000_000


@dataclass
class LayerStats:
    layer: int
    kind: str
    compute_cycles: int = 0
    prep_cycles: int = 0
    overlapped_cycles: int = 0
    layer_cycles: int = 0
    busy_lane_cycles: int = 0
    lane_cycles: int = 0
    waves: int = 0
    peak_busy_lanes: int = 0
    macs: int = 0
    staged_bytes: int = 0

    @property
    def utilization(self):
        return self.busy_lane_cycles / self.lane_cycles if self.lane_cycles else 0.0


@dataclass
class SimStats:
    total_cycles: int = 0
    instructions: int = 0
    macs_executed: int = 0
    macs_po2: int = 0
    macs_int8: int = 0
    weight_bytes_read: int = 0
    index_bytes_read: int = 0
    act_gb_reads: int = 0
    act_gb_writes: int = 0
    offchip_act_accesses: int = 0
    offchip_weight_bytes: int = 0
    input_load_bytes: int = 0
    layers: List[LayerStats] = field(default_factory=list)

    COUNTERS = ("total_cycles", "instructions", "macs_executed", "macs_po2", "macs_int8",
                "weight_bytes_read", "index_bytes_read", "act_gb_reads", "act_gb_writes",
                "offchip_act_accesses", "offchip_weight_bytes", "input_load_bytes")

    @property
    def busy_lane_cycles(self):
        return sum(l.busy_lane_cycles for l in self.layers)

    @property
    def utilization(self):
        lane = sum(l.lane_cycles for l in self.layers)
        return self.busy_lane_cycles / lane if lane else 0.0

    def __add__(self, other):
        out = SimStats(layers=self.layers + other.layers)
        for name in self.COUNTERS:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def copy(self):
        return replace(self, layers=list(self.layers))

    def to_dict(self, clock_hz=DEFAULT_CLOCK_HZ, energy=None):
        d = {"schema_version": STATS_SCHEMA_VERSION}
        d.update({name: getattr(self, name) for name in self.COUNTERS})
        d["latency_ms"] = self.total_cycles / clock_hz * 1e3
        d["utilization"] = self.utilization
        d["layers"] = [dict(asdict(l), utilization=l.utilization) for l in self.layers]
        if energy is not None:
            d["energy"] = energy.estimate(self)
        return d


@dataclass(frozen=True)
class EnergyModel:
    """Linear event-count energy model with user-supplied coefficients (pJ)."""

    pj_per_po2_mac: float = 0.0
    pj_per_int8_mac: float = 0.0
    pj_per_weight_byte: float = 0.0
    pj_per_index_byte: float = 0.0
    pj_per_act_read_byte: float = 0.0
    pj_per_act_write_byte: float = 0.0
    pj_per_offchip_byte: float = 0.0

    BANNER = "estimate from user-supplied coefficients; not silicon-calibrated"

    def __post_init__(self):
        if min(asdict(self).values()) < 0:
            raise ValueError("energy coefficients must be non-negative")

    def estimate(self, stats):
        parts = {
            "po2_mac": stats.macs_po2 * self.pj_per_po2_mac,
            "int8_mac": stats.macs_int8 * self.pj_per_int8_mac,
            "weight_gb": stats.weight_bytes_read * self.pj_per_weight_byte,
            "index_sram": stats.index_bytes_read * self.pj_per_index_byte,
            "act_gb_read": stats.act_gb_reads * self.pj_per_act_read_byte,
            "act_gb_write": stats.act_gb_writes * self.pj_per_act_write_byte,
            "offchip": (stats.offchip_act_accesses + stats.offchip_weight_bytes)
            * self.pj_per_offchip_byte,
        }
        return {"note": self.BANNER, "total_pj": sum(parts.values()), "breakdown_pj": parts}


@dataclass
class RunResult:
    output: np.ndarray
    stats: SimStats
    anomaly: bool
    layer_outputs: Optional[list] = None


def sparse_gather(layer, wave, x, capacity=2048):
    """Stage the input rows a wave needs into the input activation buffer.

    Returns ``(buffer, addresses)``: the staged bytes in first-use order and
    the matching ``(channel, row)`` list. Rows of zero-padding and rows only
    needed by skipped (zero) vectors are never fetched.
    """
    x = np.asarray(x)
    if layer.kind == Kind.FC:
        buf = x.reshape(-1).astype(np.int8) if wave else np.zeros(0, np.int8)
        addrs = [("flat", 0)] if wave else []
    else:
        addrs = staged_rows(wave)
        rows = [x[c, r] for c, r in addrs]
        buf = np.concatenate(rows).astype(np.int8) if rows else np.zeros(0, np.int8)
    if buf.size > capacity:
        raise BufferOverflow(f"wave stages {buf.size} bytes into a {capacity}-byte buffer")
    return buf, addrs


# ---------------------------------------------------------------- datapath

def _mac_terms(acts, codes, quant):
    """acts (V, ...) times one weight code per vector, shift-only for Po2."""
    codes = np.asarray(codes)
    extra = (None,) * (acts.ndim - 1)
    if quant == Quant.PO2:
        shift, sign = po2_shift_sign(codes)
        return np.left_shift(acts, shift[(slice(None),) + extra]) * sign[(slice(None),) + extra]
    return acts * codes.astype(np.int64)[(slice(None),) + extra]


def vector_accumulate(layer, indices, vecs, x):
    """Int64 accumulator of one layer computed from its stored vectors."""
    ho, wo, s = layer.hout, layer.wout, layer.stride
    x = np.asarray(x, dtype=np.int64)
    acc = np.zeros((layer.cout, ho, wo), dtype=np.int64)
    if len(indices) == 0:
        return acc
    idx = np.asarray(indices)
    if layer.kind in (Kind.NORMAL, Kind.DW):
        kr = idx % 3
        if layer.kind == Kind.NORMAL:
            ci = (idx // 3) % layer.cin
            co = idx // (3 * layer.cin)
        else:
            ci = co = idx // 3
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        rows = xp[ci[:, None], kr[:, None] + s * np.arange(ho)[None, :], :]
        for kc in range(3):
            cols = rows[:, :, kc:kc + s * (wo - 1) + 1:s]
            np.add.at(acc, co, _mac_terms(cols, vecs[:, kc], layer.quant))
        return acc
    # point-wise: vector (co, triplet) over three input channels
    t = triplets(layer.cin)
    xs = np.zeros((t * VEC, ho, wo), dtype=np.int64)
    xs[:layer.cin] = x[:, ::s, ::s][:, :ho, :wo]
    co, tt = idx // t, idx % t
    for j in range(VEC):
        np.add.at(acc, co, _mac_terms(xs[VEC * tt + j], vecs[:, j], layer.quant))
    return acc


def fc_accumulate(layer, raw, x):
    flat = np.asarray(x, dtype=np.int64).reshape(-1)
    acc = np.zeros(layer.cout, dtype=np.int64)
    for co in range(layer.cout):
        acc[co] = _mac_terms(flat, raw[co], layer.quant).sum()
    return acc.reshape(layer.cout, 1, 1)


# ------------------------------------------------------------------ engine

@dataclass
class _LayerPlan:
    lid: int
    spec: LayerSpec
    sparse: bool
    in_region: Region
    out_region: Region
    indices: Optional[np.ndarray]       # conv layers
    vectors: Optional[np.ndarray]
    fc_raw: Optional[np.ndarray]
    weight_bytes: int
    index_bytes: int
    timing: LayerStats


@dataclass
class LoadedProgram:
    program: Program
    instrs: list
    plans: dict                          # pc of RUN_LAYER -> _LayerPlan
    stats: SimStats
    in_shape: Optional[tuple]
    stale: bool = False


_SETUP_CYCLES = 1


def layer_timing(spec, weights, features, cfg, mem, lid=0):
    """Wave-level timing of one layer (``weights`` as the mapper sees them)."""
    sched = map_layer(spec, weights, cfg, features.cir, features.drir, lid, mem.in_act_buf)
    durations = sched.wave_durations
    staged = [staged_bytes(spec, w) for w in sched.waves]
    for b in staged:
        if b > mem.in_act_buf:
            raise BufferOverflow(f"layer {lid}: wave stages {b} bytes, buffer holds {mem.in_act_buf}")
    preps = [-(-b // mem.prep_bandwidth) for b in staged]
    compute, prep = sum(durations), sum(preps)
    fill = min(durations[0], preps[0]) if durations else 0
    st = LayerStats(lid, spec.kind.name.lower(), compute, prep, min(compute, prep),
                    max(_SETUP_CYCLES, max(compute, prep) + fill), sched.busy_lane_cycles,
                    sched.wave_cycles * sched.num_lanes, len(sched.waves),
                    sched.peak_busy_lanes, sched.macs, sum(staged))
    return st, sched


def _act_nbytes(shape, bits):
    return int(np.prod(shape)) * (bits // 8)


class Engine:
    """One simulated processor: memories, registers and loaded programs."""

    def __init__(self, cfg=EngineConfig(), mem=MemoryConfig(), clock_hz=DEFAULT_CLOCK_HZ,
                 trace=None):
        self.cfg = cfg
        self.mem = mem
        self.clock_hz = clock_hz
        self.trace = os.environ.get("E_G2C_TRACE") == "1" if trace is None else trace
        self.memory = {r: bytearray(mem.capacity(r)) for r in Region}
        self.threshold = 0
        self.anomaly_flag = False
        self._images = []                # (region, start, end, LoadedProgram)

    # -- memory
    def _write(self, pc, region, addr, data, owner):
        end = addr + len(data)
        if end > len(self.memory[region]):
            raise Fault(pc, f"{region.name} image [{addr}, {end}) exceeds capacity")
        if not data:
            return
        for reg, s, e, other in self._images:
            if reg == region and s < end and addr < e and other is not owner:
                other.stale = True
        self._images = [im for im in self._images if not im[3].stale]
        self.memory[region][addr:end] = data
        self._images.append((region, addr, end, owner))

    def _read_act(self, region, shape, bits):
        n = int(np.prod(shape))
        dt = np.int8 if bits == 8 else np.dtype("<i2")
        return np.frombuffer(bytes(self.memory[region][:n * (bits // 8)]), dtype=dt).reshape(shape)

    def _write_act(self, region, arr):
        data = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
        self.memory[region][:len(data)] = data

    # -- loading
    def load(self, program, model=None, weights=None, features=None):
        """Write a program's weight images into memory and precompute timing.

        Register values come from the program itself; ``model``/``weights``
        supply the data and are cross-checked against the SET_* fields.
        """
        words = list(program.words) if isinstance(program, Program) else list(program)
        if not isinstance(program, Program):
            program = Program(tuple(words))
        if len(words) > self.mem.instr_words:
            raise Fault(self.mem.instr_words, "program exceeds the instruction SRAM")
        loaded = LoadedProgram(program, [], {}, SimStats(), None)
        regs, addrs = {}, {}
        act_in = Region.ACT_A
        last_out = None
        halted = False
        stats = loaded.stats
        for pc, word in enumerate(words):
            ins = decode(word)
            if ins is None:
                raise Fault(pc, f"undecodable word {word:#010x}")
            loaded.instrs.append(ins)
            op = ins.op
            stats.instructions += 1
            if op == Opcode.SET_LAYER:
                regs = dict(ins.args)
            elif op in (Opcode.SET_SHAPE_A, Opcode.SET_SHAPE_B):
                regs.update(ins.args)
            elif op == Opcode.SET_ADDR:
                region = Region(ins["region"]) if ins["region"] <= Region.OUTPUT else None
                if region is None:
                    raise Fault(pc, f"unknown memory region {ins['region']}")
                if region in (Region.ACT_A, Region.ACT_B):
                    if region != act_in:
                        raise Fault(pc, f"{region.name} is not the current input buffer")
                    addrs["act"] = ins["addr"]
                else:
                    addrs[region] = ins["addr"]
            elif op == Opcode.RUN_LAYER:
                plan = self._plan(pc, ins["id"], regs, addrs, act_in, model, weights, loaded,
                                  features)
                loaded.plans[pc] = plan
                if loaded.in_shape is None:
                    loaded.in_shape = plan.spec.in_shape
                    stats.input_load_bytes = _act_nbytes(plan.spec.in_shape, 8)
                t = plan.timing
                stats.layers.append(t)
                stats.total_cycles += t.layer_cycles
                stats.macs_executed += t.macs
                if plan.spec.quant == Quant.PO2:
                    stats.macs_po2 += t.macs
                else:
                    stats.macs_int8 += t.macs
                stats.weight_bytes_read += plan.weight_bytes
                stats.index_bytes_read += plan.index_bytes
                stats.act_gb_reads += t.staged_bytes
                out_b = _act_nbytes(plan.spec.out_shape, plan.spec.out_bits)
                stats.act_gb_writes += out_b
                if not self.mem.pingpong and last_out is not None:
                    stats.offchip_act_accesses += 2 * last_out
                last_out = out_b
                addrs = {}
                continue
            elif op == Opcode.SWAP_GB:
                act_in = Region.ACT_B if act_in == Region.ACT_A else Region.ACT_A
            elif op == Opcode.CMP_THRESH:
                last = list(loaded.plans.values())[-1].spec if loaded.plans else None
                if last is None or last.out_shape != (1, 1, 1) or last.out_bits != 16:
                    raise Fault(pc, "CMP_THRESH needs a 16-bit scalar layer output")
            elif op == Opcode.HALT:
                stats.total_cycles += _SETUP_CYCLES
                halted = True
                break
            stats.total_cycles += _SETUP_CYCLES
        if not halted:
            raise Fault(len(words), "program ran past its last word without HALT")
        return loaded

    def _plan(self, pc, lid, regs, addrs, act_in, model, weights, loaded, features):
        need = {"kind", "Cin", "H", "id"}
        if not need <= set(regs):
            raise Fault(pc, "RUN_LAYER before SET_LAYER/SET_SHAPE_A/SET_SHAPE_B")
        if regs["id"] != lid:
            raise Fault(pc, f"RUN_LAYER id={lid} but SET_LAYER configured id={regs['id']}")
        if not {Region.WEIGHT, Region.INDEX, "act"} <= set(addrs):
            raise Fault(pc, "RUN_LAYER without weight, index and activation addresses")
        try:
            spec = LayerSpec(Kind(regs["kind"]), regs["Cin"], regs["Cout"], regs["H"], regs["W"],
                             regs["stride"], Quant(regs["prec"]), regs["shift"],
                             Act.RELU if regs["relu"] else Act.IDENTITY,
                             16 if regs["out16"] else 8)
        except ValueError as exc:
            raise Fault(pc, f"illegal layer configuration: {exc}") from None
        if model is None or lid >= len(model.layers) or model.layers[lid] != spec:
            raise Fault(pc, f"layer {lid} configuration does not match the supplied model")
        if addrs["act"] != 0:
            raise Fault(pc, "activation tensors must start at offset 0")
        out_region = Region.ACT_B if act_in == Region.ACT_A else Region.ACT_A
        for shape, bits, region in ((spec.in_shape, 8, act_in),
                                    (spec.out_shape, spec.out_bits, out_region)):
            if _act_nbytes(shape, bits) > self.mem.capacity(region):
                raise Fault(pc, f"layer {lid} activations overflow {region.name}")
        sparse = bool(regs["sparse"]) and spec.kind != Kind.FC
        wimg, iimg = layer_image(spec, weights[lid], sparse)
        w_addr, i_addr = addrs[Region.WEIGHT], addrs[Region.INDEX]
        self._write(pc, Region.WEIGHT, w_addr, wimg, loaded)
        self._write(pc, Region.INDEX, i_addr, iimg, loaded)

        # read the layer back from the memory images
        wmem = self.memory[Region.WEIGHT]
        indices = vectors = fc_raw = None
        if spec.kind == Kind.FC:
            fc_raw = unpack_codes(spec, bytes(wmem[w_addr:w_addr + len(wimg)]))
            codes, view = fc_raw, fc_raw
        else:
            if sparse:
                (n,) = struct.unpack_from("<H", self.memory[Region.INDEX], i_addr)
                indices = np.frombuffer(bytes(self.memory[Region.INDEX]), dtype="<u2", count=n,
                                        offset=i_addr + INDEX_BYTES).astype(np.int64)
            else:
                n = dense_vector_count(spec)
                indices = np.arange(n, dtype=np.int64)
            vb = vector_payload_bytes(spec.quant)
            vectors = unpack_vectors(spec.quant, wmem[w_addr:w_addr + n * vb], n)
            if n and indices.max() >= dense_vector_count(spec):
                raise Fault(pc, "index SRAM holds an out-of-range vector index")
            codes = vectors
            view = SparseLayer(spec, vectors, indices, dense_vector_count(spec)) if sparse \
                else from_vectors(spec, vectors)
        if spec.quant == Quant.PO2 and not valid_po2_codes(codes):
            raise Fault(pc, "weight buffer holds an invalid Po2 code")
        feats = Features(sparse, bool(regs["cir"]), bool(regs["drir"]))
        try:
            timing, _ = layer_timing(spec, view, feats, self.cfg, self.mem, lid)
        except BufferOverflow as exc:
            raise Fault(pc, str(exc)) from None
        return _LayerPlan(lid, spec, sparse, act_in, out_region, indices, vectors, fc_raw,
                          len(wimg), len(iimg), timing)

    # -- execution
    def run(self, loaded, x=None, keep_layer_outputs=False):
        """Execute a loaded program on input map ``x``; returns :class:`RunResult`."""
        if loaded.stale:
            raise Fault(0, "weight images of this program were overwritten")
        if loaded.in_shape is not None:
            x = check_activation(x, loaded.in_shape)
            self._write_act(Region.ACT_A, np.asarray(x, dtype=np.int8))
        outs = [] if keep_layer_outputs else None
        out = None
        anomaly = False
        cycles = 0
        for pc, ins in enumerate(loaded.instrs):
            if self.trace:
                print(f"[g2c] pc={pc:04d} cyc={cycles:>9d} {ins.text()}", file=sys.stderr)
            op = ins.op
            if op == Opcode.RUN_LAYER:
                plan = loaded.plans[pc]
                out = self._run_layer(plan)
                cycles += plan.timing.layer_cycles
                if keep_layer_outputs:
                    outs.append(self._read_act(plan.out_region, plan.spec.out_shape,
                                               plan.spec.out_bits).copy())
                continue
            cycles += _SETUP_CYCLES
            if op == Opcode.SET_THRESH:
                self.threshold = ins["value"]
            elif op == Opcode.CMP_THRESH:
                anomaly = int(out.reshape(-1)[0]) > self.threshold
                self.anomaly_flag = anomaly
            elif op == Opcode.HALT:
                break
        return RunResult(out, loaded.stats.copy(), anomaly, outs)

    def _run_layer(self, plan):
        spec = plan.spec
        x = self._read_act(plan.in_region, spec.in_shape if spec.kind != Kind.FC
                           else (spec.cin, 1, 1), 8)
        if spec.kind == Kind.FC:
            acc = fc_accumulate(spec, plan.fc_raw, x)
        else:
            acc = vector_accumulate(spec, plan.indices, plan.vectors, x)
        y = requantize(wrap_int32(acc), spec.shift, spec.act == Act.RELU, spec.out_bits)
        self._write_act(plan.out_region, y)
        return y

    def estimate(self, program, model, weights):
        """Statistics of one inference without executing any data."""
        return self.load(program, model, weights).stats.copy()


def run_program(program, model, weights, x, cfg=EngineConfig(), mem=MemoryConfig(),
                clock_hz=DEFAULT_CLOCK_HZ, threshold=0, keep_layer_outputs=False):
    """One-shot convenience wrapper: fresh engine, load, run."""
    eng = Engine(cfg, mem, clock_hz)
    eng.threshold = threshold
    return eng.run(eng.load(program, model, weights), x, keep_layer_outputs)


def compile_and_estimate(model, weights, cfg=EngineConfig(), mem=MemoryConfig(),
                         features=Features()):
    prog = assemble(model, weights, cfg, mem, features)
    return Engine(cfg, mem).estimate(prog, model, weights)


def speedup_vs_dense(model, weights, s, cfg=EngineConfig(), mem=MemoryConfig(),
                     features=Features()):
    """Cycle ratio of the dense model (sparsity off) to the pruned one (on).

    Both runs use the same CIR/D-RIR flags.
    """
    if not 0 <= s < 1:
        raise ValueError("sparsity must lie in [0, 1)")
    pruned = [prune_vectors(l, w, s) for l, w in zip(model.layers, weights)]
    dense = compile_and_estimate(model, weights, cfg, mem, replace(features, sparse=False))
    sparse = compile_and_estimate(model, pruned, cfg, mem, replace(features, sparse=True))
    return dense.total_cycles / sparse.total_cycles
