"""``g2csim`` command line.

Exit codes: 0 ok, 1 usage, 2 invalid config or input file, 3 simulation fault.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import json
import os
import sys

import numpy as np

from . import modelio
from .adaptation import AdaptConfig, ThresholdAdapter
from .config import RunConfig, load_config
from .errors import ConfigError, Fault, G2CError
from .isa import assemble, disassemble, dumps_program, loads_program
from .model import Role, dense_forward
from .orchestrator import (Pipeline, best_static_threshold, calibrate_lanes, run_stream,
                           windows_from_frames)
from .reference import build_reference_models
from .report import build_report, dumps_report, write_report
from .sim import Engine, speedup_vs_dense
from .streams import gen_stream, read_scores, read_stream, write_stream

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2, 3
ROLE_NAMES = {"detector": Role.DETECTOR, "coarse": Role.COARSE, "precise": Role.PRECISE}
TARGET_LATENCY_MS = (0.32, 9.62, 13.32)


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(f"{self.prog}: error: {message}")


def _config(args):
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def load_models(manifest):
    """Models from a JSON manifest ``{"detector": path, "coarse": .., "precise": ..}``;
    ``None`` gives the built-in reference models."""
    if manifest is None:
        return build_reference_models()
    with open(manifest) as f:
        try:
            paths = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{manifest}: not valid JSON ({exc})") from None
    if not isinstance(paths, dict) or set(paths) != set(ROLE_NAMES):
        raise ConfigError("model manifest needs exactly detector, coarse and precise entries")
    base = os.path.dirname(os.path.abspath(manifest))
    out = []
    for name in ("detector", "coarse", "precise"):
        model, weights = modelio.load(os.path.join(base, paths[name]))
        if model.role != ROLE_NAMES[name]:
            raise ConfigError(f"{paths[name]} holds a {model.role.name.lower()} model")
        out.append((model, weights))
    return out


def cmd_gen(args):
    if args.out is None and args.models_out is None:
        raise _Usage("gen: give --out and/or --models-out")
    if args.out:
        st = gen_stream(args.seed, args.beats, args.rate, args.drift)
        write_stream(args.out, st)
        print(f"wrote {len(st)} beats ({int(st.labels.sum())} anomalous) to {args.out}")
    if args.models_out:
        os.makedirs(args.models_out, exist_ok=True)
        manifest = {}
        for (model, weights), name in zip(build_reference_models(args.model_seed), ROLE_NAMES):
            fname = f"{name}.eg2c"
            modelio.save(os.path.join(args.models_out, fname), model, weights)
            manifest[name] = fname
            print(f"{name}: {len(model.layers)} layers, {model.total_macs} MACs -> {fname}")
        with open(os.path.join(args.models_out, "models.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    return EXIT_OK


def cmd_compile(args):
    cfg = _config(args)
    model, weights = modelio.load(args.model)
    prog = assemble(model, weights, cfg.engine, cfg.memory, cfg.features)
    if args.out:
        with open(args.out, "wb") as f:
            f.write(dumps_program(prog))
    if args.listing:
        print(prog.listing())
    st = Engine(cfg.engine, cfg.memory, cfg.clock_hz).estimate(prog, model, weights)
    print(f"{len(prog.words)} words, {prog.weight_bytes} weight bytes, "
          f"{prog.index_bytes} index bytes, {st.total_cycles} cycles "
          f"({st.total_cycles / cfg.clock_hz * 1e3:.3f} ms), utilization {st.utilization:.4f}")
    return EXIT_OK


def cmd_prune(args):
    if not 0 <= args.sparsity < 1:
        raise _Usage("prune: --sparsity must lie in [0, 1)")
    stats = modelio.prune_file(args.model, args.out, args.sparsity)
    total = sum(s.total_vectors for s in stats)
    zero = sum(s.total_vectors - s.nonzero_vectors for s in stats)
    print(json.dumps({"layers": [{"total_vectors": s.total_vectors,
                                  "nonzero_vectors": s.nonzero_vectors,
                                  "vector_sparsity": s.vector_sparsity} for s in stats],
                      "vector_sparsity": zero / total if total else 0.0}, indent=2))
    return EXIT_OK


def _warmup_threshold(pipeline, frames, labels, window):
    eng = pipeline.engine
    det = pipeline.loaded[Role.DETECTOR]
    n = min(window, len(frames))
    scores = [int(eng.run(det, f).output.reshape(-1)[0]) for f in frames[:n]]
    return best_static_threshold(scores, labels[:n])[0]


def cmd_run(args):
    cfg = _config(args)
    if args.fast:
        cfg = replace(cfg, functional_converters=False)
    stream = read_stream(args.stream)
    models = load_models(args.models)
    pipeline = Pipeline(models, cfg.sim)
    if args.initial_threshold is None:
        thr = _warmup_threshold(pipeline, stream.frames, stream.labels, cfg.adapt.window)
    else:
        thr = args.initial_threshold
    res = run_stream(windows_from_frames(stream.frames, cfg.bpm), pipeline, cfg.adapt, thr)
    rep = build_report(res, pipeline, stream.labels, cfg.adapt, cfg.energy, thr)
    csv_path = write_report(args.report, rep, res.beats, args.csv)
    agg = rep["aggregate"]
    print(f"{agg['beats']} beats: {agg['precise_conversions']} precise, "
          f"{agg['coarse_conversions']} coarse; accuracy {agg['dispatch_accuracy']:.4f}; "
          f"max latency fraction {agg['latency_fraction_max']:.4f}")
    print(f"report -> {args.report}, beats -> {csv_path}")
    return EXIT_OK


def cmd_adapt_demo(args):
    with open(args.stream) as f:
        header = f.readline().strip()
    if header.split(",")[0] == "score":
        scores = read_scores(args.stream)
    else:
        stream = read_stream(args.stream)
        (det, w), _, _ = load_models(args.models)
        scores = [int(dense_forward(det, w, fr).reshape(-1)[0]) for fr in stream.frames]
    try:
        cfg = AdaptConfig(num_bins=args.bins, window=args.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ad = ThresholdAdapter(cfg)
    print("sample_index,threshold")
    for i, s in enumerate(scores):
        if ad.push(s) is not None:
            print(f"{i},{ad.threshold}")
    return EXIT_OK


def _speedup_point(job):
    s, models, cfg = job
    return s, [speedup_vs_dense(m, w, s, cfg.engine, cfg.memory, cfg.features)
               for m, w in models]


def cmd_sweep(args):
    cfg = _config(args)
    models = load_models(args.models)
    if args.kind == "lanes":
        best, rows = calibrate_lanes(models, TARGET_LATENCY_MS, sim=cfg.sim)
        chosen = next(r for r in rows if r["P"] == best)
        out = {"kind": "lanes", "targets_ms": list(TARGET_LATENCY_MS), "chosen_P": best,
               "residual_mean_rel_error": chosen["mean_rel_error"], "rows": rows,
               "caveat": "per-lane MAC parallelism of the original engine is unspecified; "
                         "P is fitted, not derived"}
    else:
        points = [round(float(s), 6) for s in np.linspace(0, args.max_sparsity, args.points)]
        converters = [mw for mw in models if mw[0].role != Role.DETECTOR]
        jobs = [(s, converters, cfg) for s in points]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                results = list(ex.map(_speedup_point, jobs))
        else:
            results = [_speedup_point(j) for j in jobs]
        results.sort(key=lambda r: r[0])
        out = {"kind": "sparsity",
               "rows": [{"sparsity": s, "speedup_coarse": a, "speedup_precise": b}
                        for s, (a, b) in results]}
    text = dumps_report(out)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_disasm(args):
    with open(args.program, "rb") as f:
        data = f.read()
    try:
        words = loads_program(data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(disassemble(words))
    if args.model:
        # loading checks the program against the model; faults exit with 3
        cfg = _config(args)
        model, weights = modelio.load(args.model)
        st = Engine(cfg.engine, cfg.memory, cfg.clock_hz).estimate(words, model, weights)
        print(f"# {st.total_cycles} cycles, utilization {st.utilization:.4f}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="g2csim", description="Event-driven EGM-to-ECG engine simulator")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic beat stream and/or reference models")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--beats", type=int, default=1000)
    g.add_argument("--rate", type=float, default=0.1, help="anomaly rate in [0, 1]")
    g.add_argument("--drift", type=float, default=0.0,
                   help="DC drift at stream end as a fraction of beat amplitude")
    g.add_argument("--out", help="beat CSV to write")
    g.add_argument("--models-out", help="directory for reference models and models.json")
    g.add_argument("--model-seed", type=int, default=2021)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("compile", help="assemble a model file into a program")
    c.add_argument("--model", required=True)
    c.add_argument("--out")
    c.add_argument("--listing", action="store_true")
    c.add_argument("--config")
    c.set_defaults(func=cmd_compile)

    pr = sub.add_parser("prune", help="vector-prune a model file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--sparsity", type=float, required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_prune)

    r = sub.add_parser("run", help="run a beat stream through the pipeline")
    r.add_argument("--stream", required=True)
    r.add_argument("--models", help="model manifest JSON (default: reference models)")
    r.add_argument("--report", required=True)
    r.add_argument("--csv", help="per-beat CSV (default: <report>.beats.csv)")
    r.add_argument("--config")
    r.add_argument("--initial-threshold", type=int,
                   help="default: best static threshold over the first window")
    r.add_argument("--fast", action="store_true",
                   help="skip converter arithmetic; timing is unaffected")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("adapt-demo", help="print threshold updates for a stream")
    a.add_argument("--stream", required=True, help="beat CSV or single-column score CSV")
    a.add_argument("--bins", type=int, default=16)
    a.add_argument("--window", type=int, default=4096)
    a.add_argument("--models")
    a.set_defaults(func=cmd_adapt_demo)

    s = sub.add_parser("sweep", help="sparsity-speedup curve or lane-parallelism calibration")
    s.add_argument("--kind", choices=("sparsity", "lanes"), default="sparsity")
    s.add_argument("--models")
    s.add_argument("--config")
    s.add_argument("--points", type=int, default=11)
    s.add_argument("--max-sparsity", type=float, default=0.9)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("disasm", help="disassemble a program file")
    d.add_argument("program")
    d.add_argument("--model", help="also load the program against this model")
    d.add_argument("--config")
    d.set_defaults(func=cmd_disasm)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd is None:
            raise _Usage(parser.format_usage().strip())
        return args.func(args)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except Fault as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (G2CError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
