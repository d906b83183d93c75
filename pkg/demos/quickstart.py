"""Quick tour: build the three reference models, compile one, run it."""
import numpy as np

from g2csim import EngineConfig, assemble, build_reference_models, dense_forward, run_program
from g2csim.model import model_macs
from g2csim.sim import DEFAULT_CLOCK_HZ

models = build_reference_models()            # [(ModelSpec, weights)] for detector, coarse, precise
for model, _ in models:
    print(model.role.name, len(model.layers), "layers", model_macs(model), "MACs")

coarse, weights = models[1]
prog = assemble(coarse, weights)             # sparsity on by default, nothing pruned yet
print(len(prog.words), "instruction words")
print(prog.listing()[:400])

rng = np.random.default_rng(0)
x = rng.integers(-20, 20, size=coarse.in_shape).astype(np.int8)

res = run_program(prog, coarse, weights, x)
ref = dense_forward(coarse, weights, x)
np.array_equal(res.output, ref)              # bit exact vs the plain reference
print("cycles", res.stats.total_cycles, "latency %.3f ms" % (res.stats.total_cycles / DEFAULT_CLOCK_HZ * 1e3))

# P (MACs per lane per cycle) scales the compute part of every layer
for p in (1, 4, 16):
    cfg = EngineConfig(macs_per_lane=p)
    st = run_program(assemble(coarse, weights, cfg), coarse, weights, x, cfg).stats
    print("P=%-2d" % p, st.total_cycles, "cycles")
