"""Event-driven beat pipeline on one time-multiplexed engine.

Per beat the detector runs first; its score is compared against the current
threshold and exactly one converter follows (precise on an anomaly, coarse
otherwise). All three models stay resident in the weight buffer at disjoint
addresses, so a model switch only costs a fixed number of cycles for the
program and base-pointer swap. Threshold updates are applied by running a
two-word ``SET_THRESH``/``HALT`` program on the same engine.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .adaptation import AdaptConfig, ThresholdAdapter, detect
from .errors import CapacityExceeded
from .hw import MemoryConfig
from .isa import Features, assemble, threshold_program
from .mapper import EngineConfig
from .model import Role
from .sim import DEFAULT_CLOCK_HZ, Engine, SimStats

DEFAULT_BPM = 80
DEFAULT_SWITCH_CYCLES = 64


@dataclass
class HeartbeatWindow:
    egm_frame: np.ndarray
    index: int = 0
    period_ms: float = 60000 / DEFAULT_BPM

    def __post_init__(self):
        if not self.period_ms > 0:
            raise ValueError("heartbeat period must be positive")


@dataclass
class BeatResult:
    index: int
    score: int
    threshold: int
    anomaly: bool
    conversion_kind: str                 # "coarse" | "precise"
    ecg_frame: Optional[np.ndarray]
    cycles: Dict[str, int]
    latency_ms: float
    latency_fraction: float
    start_cycle: int = 0
    spans: Dict[str, tuple] = field(default_factory=dict)

    @property
    def total_cycles(self):
        return sum(self.cycles.values())


@dataclass(frozen=True)
class SimConfig:
    engine: EngineConfig = EngineConfig()
    memory: MemoryConfig = MemoryConfig()
    features: Features = Features()
    clock_hz: int = DEFAULT_CLOCK_HZ
    switch_cycles: int = DEFAULT_SWITCH_CYCLES
    functional_converters: bool = True   # False: converter timing only, no ECG output


class Pipeline:
    """Engine with the detector and both converters loaded side by side."""

    def __init__(self, models, sim=SimConfig()):
        by_role = {m.role: (m, w) for m, w in models}
        if set(by_role) != {Role.DETECTOR, Role.COARSE, Role.PRECISE}:
            raise ValueError("need one detector, one coarse and one precise model")
        self.sim = sim
        self.engine = Engine(sim.engine, sim.memory, sim.clock_hz)
        self.models = by_role
        self.programs, self.loaded = {}, {}
        w_base = i_base = 0
        for role in (Role.DETECTOR, Role.COARSE, Role.PRECISE):
            model, weights = by_role[role]
            prog = assemble(model, weights, sim.engine, sim.memory, sim.features, w_base, i_base)
            w_base += prog.weight_bytes
            i_base += prog.index_bytes
            self.programs[role] = prog
        if w_base > sim.memory.weight_gb or i_base > sim.memory.index_sram:
            raise CapacityExceeded("the three models do not fit side by side")
        for role, prog in self.programs.items():
            model, weights = by_role[role]
            self.loaded[role] = self.engine.load(prog, model, weights)
        self.clock = 0

    @property
    def threshold(self):
        return self.engine.threshold

    def set_threshold(self, value):
        """Run the threshold-load program; returns the cycles it took."""
        loaded = self.engine.load(threshold_program(int(value)))
        return self.engine.run(loaded).stats.total_cycles

    def converter_stats(self, role):
        return self.loaded[role].stats.copy()


def process_beat(window, pipeline, adapter=None):
    """Detect, dispatch one converter and account cycles for one beat."""
    sim = pipeline.sim
    eng = pipeline.engine
    det = eng.run(pipeline.loaded[Role.DETECTOR], window.egm_frame)
    score = int(det.output.reshape(-1)[0])
    threshold = eng.threshold
    anomaly = detect(score, threshold)
    assert anomaly == det.anomaly     # engine comparator and host rule agree
    role = Role.PRECISE if anomaly else Role.COARSE
    if sim.functional_converters:
        conv = eng.run(pipeline.loaded[role], window.egm_frame)
        ecg, conv_cycles = conv.output, conv.stats.total_cycles
    else:
        ecg, conv_cycles = None, pipeline.loaded[role].stats.total_cycles
    cycles = {"detect": det.stats.total_cycles, "switch": sim.switch_cycles,
              "convert": conv_cycles, "adapt": 0}
    if adapter is not None:
        update = adapter.push(score)
        if update is not None:
            cycles["adapt"] = pipeline.set_threshold(update.threshold)
    start = pipeline.clock
    t = start
    spans = {}
    for name in ("detect", "switch", "convert", "adapt"):
        spans[name] = (t, t + cycles[name])
        t += cycles[name]
    pipeline.clock = t
    total = t - start
    latency_ms = total / sim.clock_hz * 1e3
    return BeatResult(window.index, score, threshold, anomaly,
                      "precise" if anomaly else "coarse", ecg, cycles, latency_ms,
                      latency_ms / window.period_ms, start, spans)


@dataclass
class StreamResult:
    beats: List[BeatResult]
    threshold_trace: List[tuple]         # (sample_index, threshold)
    stats: SimStats

    @property
    def scores(self):
        return np.array([b.score for b in self.beats], dtype=np.int64)

    def accuracy(self, labels):
        pred = np.array([b.anomaly for b in self.beats])
        return float(np.mean(pred == np.asarray(labels, dtype=bool)))


def run_stream(windows, pipeline, adapt_cfg=AdaptConfig(), initial_threshold=None):
    """Process beats in order; the threshold adapts as the window fills."""
    if not len(windows):
        raise ValueError("empty stream")
    if initial_threshold is not None:
        adapt_cfg = replace(adapt_cfg, initial_threshold=int(initial_threshold))
    adapter = ThresholdAdapter(adapt_cfg)
    pipeline.set_threshold(adapt_cfg.initial_threshold)
    beats, trace = [], []
    totals = {r: 0 for r in (Role.DETECTOR, Role.COARSE, Role.PRECISE)}
    for i, win in enumerate(windows):
        before = adapter.state.update_count
        res = process_beat(win, pipeline, adapter)
        beats.append(res)
        totals[Role.DETECTOR] += 1
        totals[Role.PRECISE if res.anomaly else Role.COARSE] += 1
        if adapter.state.update_count != before:
            trace.append((i, adapter.threshold))
    # counters only; per-layer detail would grow with every beat
    agg = SimStats()
    for role, n in totals.items():
        st = pipeline.loaded[role].stats
        for name in SimStats.COUNTERS:
            setattr(agg, name, getattr(agg, name) + n * getattr(st, name))
    return StreamResult(beats, trace, agg)


def windows_from_frames(frames, bpm=DEFAULT_BPM):
    period = 60000 / bpm
    return [HeartbeatWindow(np.asarray(f), i, period) for i, f in enumerate(frames)]


def best_static_threshold(scores, labels):
    """Threshold maximizing ``score > t`` accuracy on the given beats
    (lowest such ``t`` on ties)."""
    scores = np.asarray(scores, dtype=np.int64)
    labels = np.asarray(labels, dtype=bool)
    cands = np.concatenate(([scores.min() - 1], np.unique(scores)))
    accs = [np.mean((scores > c) == labels) for c in cands]
    i = int(np.argmax(accs))
    return int(cands[i]), float(accs[i])


def calibrate_lanes(models, targets_ms=(0.32, 9.62, 13.32), candidates=(1, 2, 4, 8, 16, 32, 64),
                    sim=SimConfig()):
    """Pick the per-lane MAC parallelism P that best matches target latencies.

    Returns ``(best_p, rows)`` where each row holds P, the three latencies
    and the mean relative error. This is a report, not a check.
    """
    rows = []
    for p in candidates:
        cfg = replace(sim.engine, macs_per_lane=p)
        lat = []
        for model, weights in models:
            prog = assemble(model, weights, cfg, sim.memory, sim.features)
            st = Engine(cfg, sim.memory, sim.clock_hz).estimate(prog, model, weights)
            lat.append(st.total_cycles / sim.clock_hz * 1e3)
        err = float(np.mean([abs(l - t) / t for l, t in zip(lat, targets_ms)]))
        rows.append({"P": p, "latency_ms": lat, "mean_rel_error": err})
    best = min(rows, key=lambda r: (r["mean_rel_error"], r["P"]))
    return best["P"], rows
