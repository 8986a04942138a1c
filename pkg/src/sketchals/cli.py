"""Command line interface.

Subcommands:

* ``gen``        emit a synthetic tensor to a text file
* ``decompose``  run one decomposition, print the fitness trace
* ``bench``      run an experiment batch, write records CSV (+ timings)
* ``summarize``  turn a records CSV into a quartile summary CSV

Flags mirror the keys of the INI config files; ``--config FILE`` loads
defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .harness import (
    read_config_file,
    read_records_csv,
    run_experiment,
    run_single,
    spec_from_mapping,
    summarize,
    write_records_csv,
    write_summary_csv,
    write_timings_csv,
)
from .synth import generate
from .tensors import CPModel, SparseTensor, TuckerModel, read_tensor, write_tensor
from .cp import save_cp
from .tucker import save_tucker

_SKETCH_ALIASES = {
    "ts": "sketched-tucker-ts",
    "lev": "sketched-tucker-lev",
    "lev-det": "sketched-tucker-lev-det",
}


def _add_experiment_flags(parser, with_alg=True):
    parser.add_argument("--family", help="synthetic tensor family")
    parser.add_argument("--s", type=int, help="extent of every mode")
    parser.add_argument("--n", type=int, help="tensor order (default 3)")
    parser.add_argument("--rank", type=int, help="decomposition rank R")
    parser.add_argument("--rtrue", type=int, help="true rank of the generator")
    parser.add_argument("--p", type=float, help="sparsity parameter")
    parser.add_argument("--base", choices=["dense", "sparse"],
                        help="base family for coherent tensors")
    parser.add_argument("--spikes", type=int, help="spike count for coherent tensors")
    if with_alg:
        parser.add_argument("--alg", help="algorithm name")
        parser.add_argument("--sketch", choices=list(_SKETCH_ALIASES),
                            help="shorthand: use with --alg sketched-tucker")
        parser.add_argument("--K", type=float, help="sketch size factor (m = K R^2)")
        parser.add_argument("--m", type=int, help="sketch size m directly")
        parser.add_argument("--init", help="initialization: random | hosvd | rrf")
        parser.add_argument("--sweeps", type=int, help="ALS sweeps")
        parser.add_argument("--tucker-sweeps", type=int, dest="tucker_sweeps",
                            help="Tucker sweeps of the compression stage")
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--config", help="INI config file with the same keys")


def _collect(args, keys):
    file_vals = read_config_file(args.config) if args.config else {}
    out = dict(file_vals)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    if out.get("alg") == "sketched-tucker" and args.sketch:
        out["alg"] = _SKETCH_ALIASES[args.sketch]
    out.pop("sketch", None)
    return out


_SPEC_FLAGS = ("family", "s", "n", "rank", "rtrue", "p", "base", "spikes",
               "alg", "K", "m", "init", "sweeps", "tucker_sweeps", "reps", "seed")


def cmd_gen(args):
    values = _collect(args, _SPEC_FLAGS)
    values.setdefault("alg", "hooi")
    values.setdefault("rank", values.get("rtrue", 1))
    spec = spec_from_mapping(values)
    tensor = generate(spec.synth)
    write_tensor(args.out, tensor)
    kind = "sparse" if isinstance(tensor, SparseTensor) else "dense"
    print(f"wrote {kind} tensor shape={tensor.shape} to {args.out}")


def cmd_decompose(args):
    values = _collect(args, _SPEC_FLAGS)
    if args.infile:
        tensor = read_tensor(args.infile)
        values.setdefault("family", "tucker-dense")
        values.setdefault("s", max(tensor.shape))
        values.setdefault("rtrue", values.get("rank", 1))
    else:
        if "family" not in values:
            sys.exit("decompose needs --in FILE or generator flags (--family ...)")
        tensor = None
    spec = spec_from_mapping(values)
    if tensor is None:
        tensor = generate(spec.synth)
    seed = spec.base_seed
    model, trace, m = run_single(tensor, spec, seed)
    sketch_note = f" m={m}" if m else ""
    print(f"# {spec.algorithm} rank={spec.rank} seed={seed}{sketch_note}")
    for i, fit in enumerate(trace.fitness, start=1):
        print(f"sweep {i}: fitness {fit:.6f}")
    if args.out:
        manifest = {
            "algorithm": spec.algorithm,
            "config": (
                f"rank={spec.rank} sweeps={spec.sweeps or 'default'} "
                f"init={spec.init or 'default'} tucker_sweeps={spec.tucker_sweeps}"
            ),
            "seed": str(seed),
            "final_fitness": repr(float(trace.fitness[-1])),
            "sketch_size": str(m) if m else "none",
        }
        if isinstance(model, TuckerModel):
            save_tucker(args.out, model, manifest)
        elif isinstance(model, CPModel):
            save_cp(args.out, model, manifest)
        print(f"model written to {args.out}")


def cmd_bench(args):
    values = _collect(args, _SPEC_FLAGS)
    spec = spec_from_mapping(values)
    records = run_experiment(spec)
    write_records_csv(args.out, records)
    base, ext = os.path.splitext(args.out)
    write_timings_csv(f"{base}.times{ext or '.csv'}", records)
    failures = sum(1 for r in records if r.error)
    print(f"{len(records)} runs ({failures} failed) -> {args.out}")
    for rec in records:
        if rec.error:
            print(f"  seed {rec.seed}: {rec.error}")


def cmd_summarize(args):
    records = read_records_csv(args.infile)
    summary = summarize(records)
    write_summary_csv(args.out, summary)
    print(
        f"n={summary['count']} failures={summary['failures']} "
        f"median={summary['median']:.4f} q25={summary['q25']:.4f} q75={summary['q75']:.4f}"
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="sketchals")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="emit a synthetic tensor")
    _add_experiment_flags(p_gen, with_alg=False)
    p_gen.add_argument("--out", required=True, help="output tensor file")
    p_gen.set_defaults(func=cmd_gen)

    p_dec = sub.add_parser("decompose", help="run one decomposition")
    _add_experiment_flags(p_dec)
    p_dec.add_argument("--in", dest="infile", help="input tensor file")
    p_dec.add_argument("--out", help="directory for the fitted model")
    p_dec.set_defaults(func=cmd_decompose)

    p_bench = sub.add_parser("bench", help="run an experiment batch")
    _add_experiment_flags(p_bench)
    p_bench.add_argument("--reps", type=int, help="repetitions (default 10)")
    p_bench.add_argument("--out", required=True, help="records CSV path")
    p_bench.set_defaults(func=cmd_bench)

    p_sum = sub.add_parser("summarize", help="summarize a records CSV")
    p_sum.add_argument("infile", help="records CSV from bench")
    p_sum.add_argument("--out", required=True, help="summary CSV path")
    p_sum.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
