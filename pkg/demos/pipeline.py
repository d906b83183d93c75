"""End to end: synthetic beats through detector + one converter per beat."""
import numpy as np

from g2csim import AdaptConfig, Pipeline, SimConfig, build_reference_models, run_stream
from g2csim.orchestrator import best_static_threshold, windows_from_frames
from g2csim.report import build_report
from g2csim.streams import gen_stream

stream = gen_stream(seed=3, n_beats=600, anomaly_rate=0.1, drift=0.3)
models = build_reference_models()
pipe = Pipeline(models, SimConfig(functional_converters=False))   # converter timing only

cfg = AdaptConfig(window=128)
warm = run_stream(windows_from_frames(stream.frames[:cfg.window]), pipe, cfg)
t0, acc0 = best_static_threshold(warm.scores, stream.labels[:cfg.window])
print("initial threshold", t0, "warm-up accuracy %.3f" % acc0)

res = run_stream(windows_from_frames(stream.frames), pipe, cfg, initial_threshold=t0)
print("accuracy %.4f" % res.accuracy(stream.labels))
print("threshold trace", res.threshold_trace[:5], "...")

lat = np.array([b.latency_ms for b in res.beats])
kinds = np.array([b.conversion_kind for b in res.beats])
for k in ("coarse", "precise"):
    print(k, (kinds == k).sum(), "beats, mean latency %.3f ms" % lat[kinds == k].mean())

rep = build_report(res, pipe, stream.labels, cfg, initial_threshold=t0)
print("speedup", rep["speedup"], "| adaptation", {k: rep["adaptation"][k] for k in list(rep["adaptation"])[:4]})
for role, m in rep["models"].items():
    print(role, m["cycles"], "cycles", "%.3f ms" % m["latency_ms"], "util %.3f" % m["utilization"])
# dumps_report(rep) gives the full JSON; write_report also emits a per-beat CSV
