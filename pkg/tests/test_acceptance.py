"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``python3 tests/test_acceptance.py`` or as part of
``pytest``; the per-criterion lines are repeated in the terminal summary.
"""
import itertools
import sys
import time

import numpy as np
import pytest

from g2csim.adaptation import (AdaptConfig, Histogram, adapt_threshold, bin_index,
                               valley_fraction)
from g2csim.hw import MemoryConfig
from g2csim.isa import FIELDS, Features, Instruction, Opcode, assemble, decode
from g2csim.mapper import EngineConfig, map_dw
from g2csim.model import Kind, LayerSpec, ModelSpec, Role, dense_forward
from g2csim.orchestrator import (Pipeline, SimConfig, best_static_threshold, calibrate_lanes,
                                 run_stream, windows_from_frames)
from g2csim.quant import Quant
from g2csim.sim import Engine, run_program, speedup_vs_dense
from g2csim.sparse import prune_vectors
from g2csim.streams import gen_stream

from oracles import loop_layer, loop_macs, random_layer_weights

RESULTS = []


def verdict(n, name, ok, detail):
    line = f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# 1 -------------------------------------------------------------------------

def _random_layer(rng, kind, quant):
    h, w = int(rng.integers(3, 10)), int(rng.integers(3, 17))
    stride = int(rng.choice([1, 1, 2]))
    cin = int(rng.integers(1, 8))
    cout = cin if kind == Kind.DW else int(rng.integers(1, 8))
    shift = int(rng.integers(0, 12))
    act = int(rng.integers(0, 2))
    out_bits = int(rng.choice([8, 16]))
    if kind == Kind.FC:
        return LayerSpec(kind, int(rng.integers(1, 64)), cout, quant=quant, shift=shift,
                         act=act, out_bits=out_bits)
    return LayerSpec(kind, cin, cout, h, w, stride, quant, shift, act, out_bits)


def test_c01_oracle_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.time()
    combos = list(itertools.product(Kind, Quant, [0.0, 0.25, 0.5, 0.9]))
    per = 32
    mismatches, loop_checked = 0, 0
    for kind, quant, s in combos:
        for i in range(per):
            layer = _random_layer(rng, kind, quant)
            raw = random_layer_weights(rng, layer)
            raw = prune_vectors(layer, raw, s)
            x = rng.integers(-128, 128, size=layer.in_shape).astype(np.int8)
            feats = Features(sparse=s > 0 or bool(rng.integers(0, 2)),
                             cir=bool(rng.integers(0, 2)), drir=bool(rng.integers(0, 2)))
            model = ModelSpec(Role.COARSE, [layer])
            out = run_program(assemble(model, [raw], features=feats), model, [raw], x).output
            ref = dense_forward(model, [raw], x)
            if i < 2:                       # spot-check the oracle itself
                loop_checked += 1
                mismatches += not np.array_equal(ref, loop_layer(layer, raw, x))
            mismatches += not np.array_equal(out, ref)
    n = len(combos) * per
    dt = time.time() - t0
    ok = mismatches == 0 and n >= 1000 and dt < 300
    assert verdict(1, "oracle equivalence",
                   ok, f"{n} programs over {len(combos)} kind/precision/sparsity cells, "
                       f"{loop_checked} also vs loop oracle, {mismatches} mismatches, {dt:.1f}s")


# 2 -------------------------------------------------------------------------

def test_c02_model_complexity(reference_models):
    targets = (4e3, 2.69e6, 5.79e6)
    rows, ok = [], True
    for (model, w), target in zip(reference_models, targets):
        closed = model.total_macs
        walked = sum(loop_macs(l) for l in model.layers)
        dense = Engine().estimate(assemble(model, w, features=Features(False, True, True)),
                                  model, w).macs_executed
        err = closed / target - 1
        ok &= closed == walked == dense and abs(err) <= 0.02
        rows.append(f"{model.role.name.lower()} {closed} ({err:+.2%})")
    assert verdict(2, "model complexity", ok,
                   "; ".join(rows) + "; closed form = loop count = executed dense MACs")


# 3 -------------------------------------------------------------------------

def test_c03_sparsity_speedup(reference_models):
    grid = [round(0.05 * i, 2) for i in range(13)] + [0.394]
    grid = sorted(set(grid))
    curve = {}
    for s in grid:
        curve[s] = [speedup_vs_dense(m, w, s) for m, w in reference_models[1:]]
    for s in grid:
        print(f"    s={s:.3f}  coarse {curve[s][0]:.4f}  precise {curve[s][1]:.4f}")
    monotone = all(curve[a][k] <= curve[b][k] for a, b in zip(grid, grid[1:]) for k in (0, 1))
    hits = [s for s in grid if 0.35 <= s <= 0.45 and all(1.6 <= v <= 1.7 for v in curve[s])]
    ok = monotone and bool(hits)
    best = hits[0] if hits else 0.394
    assert verdict(3, "sparsity speedup", ok,
                   f"s={best}: coarse {curve[best][0]:.3f}x, precise {curve[best][1]:.3f}x; "
                   f"in-range points {hits}; curve monotone={monotone}")


# 4 -------------------------------------------------------------------------

def test_c04_dataflow_multipliers():
    layer = LayerSpec(Kind.DW, 1, 1, 8, 8)
    w = np.ones(layer.weight_shape, np.int8)
    occ = [map_dw(layer, w, EngineConfig(), c, d).utilization
           for c, d in ((False, False), (True, False), (True, True))]
    ok = occ == [1 / 32, 3 / 32, 6 / 32]
    assert verdict(4, "dataflow multipliers", ok,
                   f"occupancy baseline {occ[0] * 32:g}/32, CIR {occ[1] * 32:g}/32, "
                   f"CIR+D-RIR {occ[2] * 32:g}/32")


# 5 -------------------------------------------------------------------------

def test_c05_near_full_utilization(reference_models):
    t0 = time.time()
    worst, busy, lanes = 1.0, 0, 0
    for model, w in reference_models:
        st = Engine().estimate(assemble(model, w), model, w)
        for l, spec in zip(st.layers, model.layers):
            if spec.kind == Kind.FC:
                continue
            worst = min(worst, l.utilization)
            busy += l.busy_lane_cycles
            lanes += l.lane_cycles
    agg = busy / lanes
    dt = time.time() - t0
    ok = worst >= 0.95 and agg >= 0.97 and dt < 60
    assert verdict(5, "near-full utilization", ok,
                   f"worst conv layer {worst:.4f}, aggregate {agg:.4f} ({dt:.1f}s)")


# 6 -------------------------------------------------------------------------

def test_c06_pingpong_no_offchip(reference_models):
    frames = gen_stream(5, 6, 0.5, 0.0).frames
    pl = Pipeline(reference_models)
    res = run_stream(windows_from_frames(frames), pl, initial_threshold=900)
    per_inference = [pl.loaded[r].stats.offchip_act_accesses for r in (Role.COARSE, Role.PRECISE)]
    kinds = sorted({b.conversion_kind for b in res.beats})
    mem = MemoryConfig(pingpong=False)
    model, w = reference_models[1]
    spill = Engine(mem=mem).estimate(assemble(model, w, mem=mem), model, w).offchip_act_accesses
    ok = per_inference == [0, 0] and res.stats.offchip_act_accesses == 0 and spill > 0
    assert verdict(6, "ping-pong buffering", ok,
                   f"offchip act accesses per converter inference {per_inference}, "
                   f"stream total {res.stats.offchip_act_accesses} over {kinds}; "
                   f"single-buffer baseline {spill}")


# 7 -------------------------------------------------------------------------

def test_c07_adaptation_effectiveness(reference_models):
    t0 = time.time()
    st = gen_stream(7, 10000, 0.1, 0.3)
    cfg = AdaptConfig()
    pl = Pipeline(reference_models, SimConfig(functional_converters=False))
    det = pl.loaded[Role.DETECTOR]
    warm = [int(pl.engine.run(det, f).output[0, 0, 0]) for f in st.frames[:cfg.window]]
    thr, _ = best_static_threshold(warm, st.labels[:cfg.window])
    res = run_stream(windows_from_frames(st.frames), pl, cfg, thr)
    scores = res.scores
    static = float(np.mean((scores > thr) == st.labels.astype(bool)))
    adaptive = res.accuracy(st.labels)
    valley = valley_fraction(scores, cfg)
    dt = time.time() - t0
    gain = adaptive - static
    ok = gain >= 0.03 and dt < 120
    assert verdict(7, "adaptation effectiveness", ok,
                   f"adaptive {adaptive:.4f} vs static {static:.4f} (+{gain * 100:.1f} points), "
                   f"{len(res.threshold_trace)} updates, valley in {valley:.0%} of windows, "
                   f"{dt:.1f}s")


# 8 -------------------------------------------------------------------------

def test_c08_adaptation_mechanics():
    rng = np.random.default_rng(8)
    h = Histogram(AdaptConfig(window=1024, value_range=(-2000, 2000)))
    ops = rng.random(10 ** 6) < 0.8
    vals = rng.integers(-3000, 3000, size=10 ** 6)
    conserved = True
    for is_obs, v in zip(ops, vals):
        if is_obs:
            h.observe(v)
        else:
            h.evict()
        if h.counts.sum() != h.occupancy or h.counts.min() < 0:
            conserved = False
            break
    truth = np.bincount([bin_index(x, -2000, 2000, 16) for x in h.ring], minlength=16)
    conserved &= np.array_equal(truth, h.counts)

    def filled(counts, hi):
        width = hi // len(counts)
        g = Histogram(AdaptConfig(num_bins=len(counts), value_range=(0, hi), window=sum(counts),
                                  sensitive_range=(0, len(counts) - 1)))
        for k, n in enumerate(counts):
            for _ in range(n):
                g.observe(k * width)
        return adapt_threshold(g).threshold

    midpoint = filled([5, 1, 0, 2, 7], 100)
    tie = filled([3, 0, 0, 3], 80)
    ok = conserved and midpoint == 50 and tie == 30
    assert verdict(8, "adaptation mechanics", ok,
                   f"10^6 observe/evict ops conserved={conserved}; midpoint example {midpoint} "
                   f"(expect 50); tie-break example {tie} (expect 30)")


# 9 -------------------------------------------------------------------------

def test_c09_isa_roundtrip(reference_models):
    rng = np.random.default_rng(9)
    n, bad = 0, 0
    for op in Opcode:
        for _ in range(500):
            kw = {}
            for name, hi, lo, bias, signed in FIELDS.get(op, []):
                width = hi - lo + 1
                if signed:
                    kw[name] = int(rng.integers(-(1 << (width - 1)), 1 << (width - 1)))
                else:
                    kw[name] = int(rng.integers(0, 1 << width)) + bias
            ins = Instruction.make(op, **kw)
            word = ins.encode()
            n += 1
            bad += decode(word) != ins or decode(word).encode() != word
    faults = []
    x = np.zeros((3, 16, 64), np.int8)
    for model, w in reference_models:
        for feats in (Features(), Features(False, False, False)):
            try:
                run_program(assemble(model, w, features=feats), model, w, x)
            except Exception as exc:          # any fault fails the criterion
                faults.append(f"{model.role.name}: {exc}")
    ok = bad == 0 and not faults
    assert verdict(9, "ISA round-trip", ok,
                   f"{n} instructions over {len(Opcode)} opcodes, {bad} mismatches; "
                   f"reference programs faulted: {faults or 'none'}")


# 10 ------------------------------------------------------------------------

def test_c10_latency_calibration(reference_models):
    targets = (0.32, 9.62, 13.32)
    best, rows = calibrate_lanes(reference_models, targets)
    chosen = next(r for r in rows if r["P"] == best)
    for r in rows:
        lat = ", ".join(f"{v:.3f}" for v in r["latency_ms"])
        print(f"    P={r['P']:2d}  latency ms [{lat}]  mean rel error {r['mean_rel_error']:.3f}")
    lat = ", ".join(f"{v:.3f}" for v in chosen["latency_ms"])
    verdict(10, "latency calibration (reported only)", True,
            f"chosen P={best}, latencies [{lat}] ms vs [0.32, 9.62, 13.32] ms, "
            f"mean relative error {chosen['mean_rel_error']:.3f}; per-lane parallelism of "
            f"the original engine is unspecified, so P is a fit")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
