"""Mapping layers onto the MAC lanes.

Work is expressed as :class:`WorkItem` s -- one weight vector applied along
one output-row segment -- and gang-scheduled in *waves*: a wave holds at most
one item per lane and lasts as long as its longest item.

* RIR (normal / PW conv, FC): each lane keeps one input row and sweeps it
  along a whole output row. Items are emitted output-row major so that the
  vectors sharing an input row land in the same wave.
* DW conv: work is grouped per (channel, input row). Without CIR a group is a
  single kernel row, so each channel advances one item at a time. CIR puts
  the three kernel rows that consume one input row into one group (3 lanes);
  D-RIR splits every item's output row into two halves (2 lanes each). A
  wave never holds two groups of the same channel, and partially issued
  groups continue in the next wave.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Tuple

from .errors import UnsupportedKind
from .model import KERNEL, Kind
from .sparse import SparseLayer, VEC, dense_vector_count, triplets, vector_origin


@dataclass(frozen=True)
class EngineConfig:
    num_lanes: int = 32
    macs_per_lane: int = 1          # P: MACs per lane per cycle
    drir_sub_row_len: int = 4

    def __post_init__(self):
        if self.num_lanes < 1 or self.macs_per_lane < 1 or self.drir_sub_row_len < 1:
            raise ValueError("engine parameters must be >= 1")


@dataclass(frozen=True, slots=True)
class WorkItem:
    lane: int
    layer_ref: int
    vector: int            # canonical vector index (FC: output neuron)
    row: int               # output row; out of range only for masked CIR slots
    col_start: int
    col_len: int
    est_cycles: int
    macs: int
    in_rows: Tuple[Tuple[int, int], ...]
    masked: bool = False


@dataclass
class LaneSchedule:
    layer_ref: int
    num_lanes: int
    waves: list = field(default_factory=list)

    @property
    def items(self):
        return [it for wave in self.waves for it in wave]

    @property
    def busy_lane_cycles(self):
        return sum(it.est_cycles for wave in self.waves for it in wave)

    @property
    def wave_durations(self):
        return [max(it.est_cycles for it in wave) for wave in self.waves]

    @property
    def wave_cycles(self):
        return sum(self.wave_durations)

    @property
    def utilization(self):
        total = self.wave_cycles * self.num_lanes
        return self.busy_lane_cycles / total if total else 0.0

    @property
    def peak_busy_lanes(self):
        return max((len(w) for w in self.waves), default=0)

    @property
    def macs(self):
        return sum(it.macs for wave in self.waves for it in wave)


def _cycles(macs, cfg):
    return -(-macs // cfg.macs_per_lane)


def _vector_indices(layer, weights):
    """Vectors that generate work: the stored nonzero ones for a SparseLayer,
    every dense vector otherwise (sparsity disabled)."""
    if isinstance(weights, SparseLayer):
        return [int(i) for i in weights.indices]
    return list(range(dense_vector_count(layer)))


def _pack_sequential(items, layer_ref, cfg, row_bytes=0, stage_limit=None):
    """Fill waves in order; with ``stage_limit`` a wave also closes before its
    distinct input rows would exceed that many staged bytes."""
    sched = LaneSchedule(layer_ref, cfg.num_lanes)
    wave, rows = [], set()
    for it in items:
        new = rows.union(it.in_rows)
        full = len(wave) == cfg.num_lanes
        over = stage_limit is not None and wave and len(new) * row_bytes > stage_limit
        if full or over:
            sched.waves.append(tuple(wave))
            wave, new = [], set(it.in_rows)
        wave.append(_on_lane(it, len(wave)))
        rows = new
    if wave:
        sched.waves.append(tuple(wave))
    return sched


def _on_lane(item, lane):
    return WorkItem(lane, item.layer_ref, item.vector, item.row, item.col_start,
                    item.col_len, item.est_cycles, item.macs, item.in_rows, item.masked)


def map_rir(layer, weights, cfg=EngineConfig(), layer_ref=0, stage_limit=None):
    """Row-wise intra-channel reuse mapping for normal conv, PW conv and FC.

    ``stage_limit`` (bytes) caps the input rows one wave may stage; sparse
    layers otherwise pack items from many output rows into one wave.
    """
    if layer.kind == Kind.DW:
        raise UnsupportedKind("use map_dw for depth-wise layers")
    items = []
    if layer.kind == Kind.FC:
        for co in range(layer.cout):
            items.append(WorkItem(-1, layer_ref, co, 0, 0, 1, _cycles(layer.cin, cfg),
                                  layer.cin, ()))
        return _pack_sequential(items, layer_ref, cfg)

    vecs = [(v, vector_origin(layer, v)) for v in _vector_indices(layer, weights)]
    wo, s = layer.wout, layer.stride
    est = _cycles(VEC * wo, cfg)
    for ro in range(layer.hout):
        for v, origin in vecs:
            if layer.kind == Kind.NORMAL:
                _, ci, kr = origin
                r = ro * s + kr - 1
                rows = ((ci, r),) if 0 <= r < layer.h else ()
                macs = VEC * wo
            else:
                _, t = origin
                chans = range(VEC * t, min(VEC * t + VEC, layer.cin))
                rows = tuple((c, ro * s) for c in chans)
                macs = len(chans) * wo
            items.append(WorkItem(-1, layer_ref, v, ro, 0, wo, est, macs, rows))
    return _pack_sequential(items, layer_ref, cfg, layer.w, stage_limit)


def _split_cols(wo, drir):
    if not drir or wo < 2:
        return [(0, wo)]
    half = -(-wo // 2)
    return [(0, half), (half, wo - half)]


def _dw_groups(layer, weights, cfg, cir, drir, layer_ref):
    """Per-channel queues of work groups for a DW layer."""
    present = {}
    for v in _vector_indices(layer, weights):
        c, _, kr = vector_origin(layer, v)
        present.setdefault(c, []).append((v, kr))
    cols = _split_cols(layer.wout, drir)
    s = layer.stride

    def slot(c, v, kr, ro, r, masked):
        rows = ((c, r),) if 0 <= r < layer.h else ()
        return [WorkItem(-1, layer_ref, v, ro, c0, n, _cycles(VEC * n, cfg), VEC * n,
                         rows, masked) for c0, n in cols]

    queues = {}
    for c in sorted(present):
        groups = deque()
        if cir and s == 1:
            # one group per streamed input row; the lane of a kernel row whose
            # output row falls off the map is clocked through it (masked)
            for r in range(layer.h):
                g = []
                for v, kr in present[c]:
                    ro = r + 1 - kr
                    g += slot(c, v, kr, ro, r, not 0 <= ro < layer.hout)
                groups.append(g)
        else:
            for ro in range(layer.hout):
                for v, kr in present[c]:
                    groups.append(slot(c, v, kr, ro, ro * s + kr - 1, False))
        queues[c] = groups
    return queues


def map_dw(layer, weights, cfg=EngineConfig(), enable_cir=True, enable_drir=True, layer_ref=0):
    """Depth-wise mapping with optional CIR (x3 lanes) and D-RIR (x2 lanes).

    CIR needs stride 1; strided DW layers fall back to one kernel row per
    group. D-RIR halves are ``ceil(Wout/2)`` and ``floor(Wout/2)`` wide.
    """
    if layer.kind != Kind.DW:
        raise UnsupportedKind("map_dw only maps depth-wise layers")
    queues = _dw_groups(layer, weights, cfg, enable_cir, enable_drir, layer_ref)
    chans = list(queues)
    partial = {c: [] for c in chans}
    sched = LaneSchedule(layer_ref, cfg.num_lanes)
    ptr = 0
    while any(partial[c] or queues[c] for c in chans):
        wave, free, i = [], cfg.num_lanes, ptr
        last = None
        for _ in range(len(chans)):
            if free == 0:
                break
            c = chans[i % len(chans)]
            i += 1
            cur = partial[c] or (list(queues[c].popleft()) if queues[c] else [])
            if not cur:
                continue
            take, partial[c] = cur[:free], cur[free:]
            for it in take:
                wave.append(_on_lane(it, len(wave)))
            free -= len(take)
            last = c
        # a channel cut off mid-group resumes first in the next wave
        ptr = chans.index(last) if last is not None and partial[last] else i % len(chans)
        sched.waves.append(tuple(wave))
    return sched


def map_layer(layer, weights, cfg=EngineConfig(), cir=True, drir=True, layer_ref=0,
              stage_limit=None):
    if layer.kind == Kind.DW:
        return map_dw(layer, weights, cfg, cir, drir, layer_ref)
    return map_rir(layer, weights, cfg, layer_ref, stage_limit)


def utilization_report(schedules):
    """Per-layer and aggregate lane utilization of a list of schedules."""
    if not schedules:
        raise ValueError("need at least one schedule")
    layers = []
    busy = total = 0
    for sch in schedules:
        b, t = sch.busy_lane_cycles, sch.wave_cycles * sch.num_lanes
        busy += b
        total += t
        layers.append({"layer": sch.layer_ref, "waves": len(sch.waves),
                       "busy_lane_cycles": b, "lane_cycles": t,
                       "utilization": b / t if t else 0.0})
    return {"layers": layers, "aggregate": busy / total if total else 0.0}


def schedule_to_json(sched):
    """Debug dump of a schedule: per-wave busy/idle lanes and duration."""
    return {"layer": sched.layer_ref, "num_lanes": sched.num_lanes,
            "utilization": sched.utilization,
            "waves": [{"duration": max(it.est_cycles for it in w), "busy": len(w),
                       "idle": sched.num_lanes - len(w)} for w in sched.waves]}


def staged_rows(wave):
    """Distinct (channel, input row) pairs a wave needs, in first-use order."""
    seen = {}
    for it in wave:
        for r in it.in_rows:
            seen.setdefault(r, None)
    return list(seen)


def staged_bytes(layer, wave):
    if layer.kind == Kind.FC:
        return layer.cin if wave else 0
    return len(staged_rows(wave)) * layer.w


def output_channel(layer, vector):
    if layer.kind == Kind.NORMAL:
        return vector // (layer.cin * KERNEL)
    if layer.kind == Kind.DW:
        return vector // KERNEL
    if layer.kind == Kind.PW:
        return vector // triplets(layer.cin)
    return vector


def output_bytes(layer, wave):
    """Bytes of finished output rows a wave hands to the output buffer."""
    rows = {(output_channel(layer, it.vector), it.row) for it in wave if not it.masked}
    width = 1 if layer.kind == Kind.FC else layer.wout
    return len(rows) * width * (layer.out_bits // 8)
