"""Run reports: aggregate JSON plus a per-beat CSV.

Output is deterministic for a fixed stream and configuration (sorted keys,
no timestamps), and the JSON validates against ``report.schema.json``.
"""
import csv
from dataclasses import replace
import json
from importlib import resources

import numpy as np

from .isa import assemble
from .model import Kind, Role
from .sim import Engine, EnergyModel

REPORT_SCHEMA_VERSION = 1
BEAT_COLUMNS = ("index", "anomaly", "kind", "cycles", "latency_ms", "latency_fraction")


def load_schema():
    return json.loads(resources.files("g2csim").joinpath("report.schema.json").read_text())


def model_summary(pipeline, role):
    """Per-model cycles, latency, utilization and speedup over a dense build."""
    sim = pipeline.sim
    model, weights = pipeline.models[role]
    st = pipeline.converter_stats(role)
    if sim.features.sparse:
        dense_feats = replace(sim.features, sparse=False)
        prog = assemble(model, weights, sim.engine, sim.memory, dense_feats)
        dense = Engine(sim.engine, sim.memory, sim.clock_hz).estimate(prog, model, weights)
        dense_cycles = dense.total_cycles
    else:
        dense_cycles = st.total_cycles
    conv = [l for l, spec in zip(st.layers, model.layers) if spec.kind != Kind.FC]
    busy = sum(l.busy_lane_cycles for l in conv)
    lanes = sum(l.lane_cycles for l in conv)
    return {
        "cycles": st.total_cycles,
        "dense_cycles": dense_cycles,
        "latency_ms": st.total_cycles / sim.clock_hz * 1e3,
        "macs": model.total_macs,
        "macs_executed": st.macs_executed,
        "speedup_vs_dense": dense_cycles / st.total_cycles,
        "utilization": st.utilization,
        "busy_lane_cycles": st.busy_lane_cycles,
        "lane_cycles": sum(l.lane_cycles for l in st.layers),
        "conv_utilization": busy / lanes if lanes else 0.0,
        "layers": [{"layer": l.layer, "kind": l.kind, "cycles": l.layer_cycles,
                    "utilization": l.utilization} for l in st.layers],
    }


def build_report(result, pipeline, labels=None, adapt_cfg=None, energy=None,
                 initial_threshold=None):
    sim = pipeline.sim
    beats = result.beats
    names = {Role.DETECTOR: "detector", Role.COARSE: "coarse", Role.PRECISE: "precise"}
    models = {names[r]: model_summary(pipeline, r) for r in names}
    n_precise = sum(b.anomaly for b in beats)
    # dispatch-weighted speedup over what the same beats would cost dense
    used = (len(beats) * models["detector"]["cycles"]
            + n_precise * models["precise"]["cycles"]
            + (len(beats) - n_precise) * models["coarse"]["cycles"])
    dense = (len(beats) * models["detector"]["dense_cycles"]
             + n_precise * models["precise"]["dense_cycles"]
             + (len(beats) - n_precise) * models["coarse"]["dense_cycles"])
    lat = np.array([b.latency_ms for b in beats])
    frac = np.array([b.latency_fraction for b in beats])
    agg = {
        "beats": len(beats),
        "precise_conversions": int(n_precise),
        "coarse_conversions": int(len(beats) - n_precise),
        "total_cycles": int(sum(b.total_cycles for b in beats)),
        "utilization": _weighted_utilization(models, len(beats), n_precise),
        "latency_ms_mean": float(lat.mean()),
        "latency_ms_max": float(lat.max()),
        "latency_fraction_max": float(frac.max()),
        "counters": {k: getattr(result.stats, k) for k in result.stats.COUNTERS},
    }
    if labels is not None:
        agg["dispatch_accuracy"] = result.accuracy(labels)
    rep = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "clock_hz": sim.clock_hz,
        "lanes": sim.engine.num_lanes,
        "P": sim.engine.macs_per_lane,
        "features": {"sparsity": sim.features.sparse, "cir": sim.features.cir,
                     "drir": sim.features.drir},
        "speedup": dense / used,
        "models": models,
        "aggregate": agg,
        "adaptation": {
            "bins": adapt_cfg.num_bins if adapt_cfg else None,
            "window": adapt_cfg.window if adapt_cfg else None,
            "initial_threshold": initial_threshold,
            "final_threshold": pipeline.threshold,
            "trace": [[int(i), int(t)] for i, t in result.threshold_trace],
        },
    }
    if energy is not None:
        rep["energy"] = energy.estimate(result.stats)
        rep["energy"]["banner"] = EnergyModel.BANNER
    return rep


def _weighted_utilization(models, n, n_precise):
    busy = lanes = 0
    for name, count in (("detector", n), ("precise", n_precise), ("coarse", n - n_precise)):
        m = models[name]
        busy += count * m["busy_lane_cycles"]
        lanes += count * m["lane_cycles"]
    return busy / lanes if lanes else 0.0


def dumps_report(rep):
    return json.dumps(rep, indent=2, sort_keys=True) + "\n"


def write_report(json_path, rep, beats, csv_path=None):
    """Write the JSON report and the per-beat CSV next to it."""
    with open(json_path, "w") as f:
        f.write(dumps_report(rep))
    if csv_path is None:
        csv_path = str(json_path).rsplit(".", 1)[0] + ".beats.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(BEAT_COLUMNS)
        for b in beats:
            w.writerow([b.index, int(b.anomaly), b.conversion_kind, b.total_cycles,
                        f"{b.latency_ms:.6f}", f"{b.latency_fraction:.8f}"])
    return csv_path
