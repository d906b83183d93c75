"""Lane occupancy of a depth-wise layer under the three DW mappings,
and what vector pruning does to a point-wise layer."""
import numpy as np

from g2csim import EngineConfig, Kind, LayerSpec, map_dw, map_layer
from g2csim.sparse import encode_sparse, prune_vectors

dw = LayerSpec(Kind.DW, 8, 8, 16, 64)
w = np.random.default_rng(1).integers(-8, 8, size=dw.weight_shape).astype(np.int8)

for cir, drir in [(False, False), (True, False), (True, True)]:
    s = map_dw(dw, w, EngineConfig(), enable_cir=cir, enable_drir=drir)
    print("cir=%d drir=%d  peak lanes %2d/32  waves %4d  util %.3f"
          % (cir, drir, s.peak_busy_lanes, len(s.waves), s.utilization))

# first few waves of the CIR+D-RIR schedule
s = map_dw(dw, w)
for wave in s.waves[:3]:
    print([(it.vector, it.row, it.col_start, it.col_len) for it in wave][:6], "...")

pw = LayerSpec(Kind.PW, 48, 64, 8, 32)
raw = np.random.default_rng(2).integers(-50, 50, size=pw.weight_shape).astype(np.int8)
dense = map_layer(pw, raw)
for frac in (0.25, 0.5, 0.75):
    sp = encode_sparse(pw, prune_vectors(pw, raw, frac))
    sched = map_layer(pw, sp)
    print("s=%.2f  %d vectors kept  wave cycles %d (dense %d)"
          % (frac, len(sp.indices), sched.wave_cycles, dense.wave_cycles))
