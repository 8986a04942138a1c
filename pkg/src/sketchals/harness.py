"""Experiment runner: seeded batches of decompositions with CSV output.

A batch is described by an :class:`ExperimentSpec` (synthetic tensor recipe
plus algorithm and its parameters).  Each repetition i regenerates the tensor
and runs the algorithm with seed ``base_seed + i``, so a batch is a pure
function of its spec.  Fitness traces go to a records CSV with columns
``seed,sweep,fitness``; measured per-sweep wall times go to a sibling
``*.times.csv`` (they are the one non-reproducible output, so they are kept
out of the deterministic artifact); :func:`summarize` produces quartile
summaries of the final fitness.

Failures of individual runs are recorded as NaN fitness rows rather than
aborting the batch.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import cp as cp_mod
from . import tucker as tucker_mod
from .synth import SynthSpec, generate
from .tensors import SparseTensor

TUCKER_ALGS = {
    "hooi": None,
    "sketched-tucker-ts": "tensorsketch",
    "sketched-tucker-lev": "leverage-random",
    "sketched-tucker-lev-det": "leverage-deterministic",
    "ref-ts": "tensorsketch",
}
CP_ALGS = {
    "cp-als": None,
    "sketched-cp": "leverage-random",
    "tucker+cp": None,
    "sketched-tucker+cp": "leverage-random",
}
ALGORITHMS = tuple(TUCKER_ALGS) + tuple(CP_ALGS)

# sparse storage stops paying off well before this; mirrors the generators'
# dense-assembly crossover
DENSIFY_THRESHOLD = 0.25


@dataclass
class ExperimentSpec:
    synth: SynthSpec
    algorithm: str
    rank: int
    sweeps: int | None = None
    sketch_size: int | None = None
    sketch_factor: float | None = None
    init: str | None = None
    tucker_sweeps: int = 5
    repetitions: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        needs_sketch = (
            self.algorithm not in ("hooi", "cp-als", "tucker+cp")
        )
        if needs_sketch and self.sketch_size is None and self.sketch_factor is None:
            raise ValueError(f"{self.algorithm} needs a sketch size (m or K)")

    def spec_hash(self):
        return hashlib.sha256(repr(self).encode()).hexdigest()[:12]


@dataclass
class RunRecord:
    spec_hash: str
    seed: int
    sweep_fitness: list
    final_fitness: float
    wall_s: float
    sweep_wall_s: list = field(default_factory=list)
    sketch_size: int | None = None
    error: str | None = None


def _tucker_config(spec, seed, n_modes):
    return tucker_mod.TuckerConfig(
        ranks=(spec.rank,) * n_modes,
        max_sweeps=spec.sweeps if spec.sweeps is not None else 5,
        sketch=TUCKER_ALGS[spec.algorithm],
        sketch_size=spec.sketch_size,
        sketch_factor=spec.sketch_factor,
        init=spec.init,
        seed=seed,
    )


def _cp_config(spec, seed):
    return cp_mod.CPConfig(
        rank=spec.rank,
        max_sweeps=spec.sweeps,
        sketch=CP_ALGS[spec.algorithm],
        sketch_size=spec.sketch_size,
        sketch_factor=spec.sketch_factor,
        init=spec.init,
        seed=seed,
        tucker_sweeps=spec.tucker_sweeps,
    )


def run_single(tensor, spec, seed):
    """One decomposition run; returns (model, trace, resolved sketch size)."""
    n_modes = len(tensor.shape)
    if spec.algorithm in TUCKER_ALGS:
        cfg = _tucker_config(spec, seed, n_modes)
        if spec.algorithm == "hooi":
            model, trace = tucker_mod.hooi(tensor, cfg)
        elif spec.algorithm == "ref-ts":
            model, trace = tucker_mod.ref_tucker_ts(tensor, cfg)
        else:
            model, trace = tucker_mod.sketched_tucker_als(tensor, cfg)
        m = cfg.resolved_sketch_size() if cfg.sketch else None
        return model, trace, m
    cfg = _cp_config(spec, seed)
    if spec.algorithm == "cp-als":
        model, trace = cp_mod.cp_als(tensor, cfg)
    elif spec.algorithm == "sketched-cp":
        model, trace = cp_mod.sketched_cp_als(tensor, cfg)
    else:
        model, trace = cp_mod.cp_via_sketched_tucker(tensor, cfg)
    needs_m = spec.algorithm in ("sketched-cp", "sketched-tucker+cp")
    return model, trace, cfg.resolved_sketch_size() if needs_m else None


def run_experiment(spec):
    """All repetitions of one experiment; per-run failures become NaN records."""
    records = []
    for i in range(spec.repetitions):
        seed = spec.base_seed + i
        tensor = generate(replace(spec.synth, seed=seed))
        if isinstance(tensor, SparseTensor) and tensor.density > DENSIFY_THRESHOLD:
            tensor = tensor.to_dense()
        try:
            _, trace, m = run_single(tensor, spec, seed)
            records.append(
                RunRecord(
                    spec_hash=spec.spec_hash(),
                    seed=seed,
                    sweep_fitness=[float(f) for f in trace.fitness],
                    final_fitness=float(trace.fitness[-1]),
                    wall_s=float(sum(trace.wall_s)),
                    sweep_wall_s=[float(w) for w in trace.wall_s],
                    sketch_size=m,
                )
            )
        except Exception as exc:  # noqa: BLE001 - batch must survive bad runs
            records.append(
                RunRecord(
                    spec_hash=spec.spec_hash(),
                    seed=seed,
                    sweep_fitness=[math.nan],
                    final_fitness=math.nan,
                    wall_s=math.nan,
                    sweep_wall_s=[],
                    sketch_size=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return records


def _fmt(x):
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def write_records_csv(path, records):
    with open(path, "w", newline="\n") as fh:
        fh.write("seed,sweep,fitness\n")
        for rec in records:
            for sweep, fit in enumerate(rec.sweep_fitness, start=1):
                fh.write(f"{rec.seed},{sweep},{_fmt(fit)}\n")


def write_timings_csv(path, records):
    with open(path, "w", newline="\n") as fh:
        fh.write("seed,sweep,wall_ms\n")
        for rec in records:
            for sweep, wall in enumerate(rec.sweep_wall_s, start=1):
                fh.write(f"{rec.seed},{sweep},{_fmt(wall * 1e3)}\n")


def read_records_csv(path):
    """Rebuild minimal records (seed, fitness trace) from a records CSV."""
    traces = {}
    order = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "seed,sweep,fitness":
            raise ValueError(f"unexpected records header {header!r}")
        for line in fh:
            seed_s, _, fit_s = line.strip().split(",")
            seed = int(seed_s)
            if seed not in traces:
                traces[seed] = []
                order.append(seed)
            traces[seed].append(float(fit_s))
    return [
        RunRecord(
            spec_hash="",
            seed=seed,
            sweep_fitness=traces[seed],
            final_fitness=traces[seed][-1],
            wall_s=math.nan,
        )
        for seed in order
    ]


def summarize(records):
    """Quartile summary (linear interpolation) of the final fitness values.

    Outliers are values beyond quartile +/- 1.5 IQR; NaN records count as
    failures and are excluded from the statistics.
    """
    if not records:
        raise ValueError("cannot summarize an empty batch")
    finals = np.array([rec.final_fitness for rec in records], dtype=float)
    ok = finals[~np.isnan(finals)]
    failures = int(np.isnan(finals).sum())
    if ok.size == 0:
        return {
            "count": len(records),
            "failures": failures,
            "mean": math.nan,
            "q25": math.nan,
            "median": math.nan,
            "q75": math.nan,
            "outliers": [],
        }
    q25, q50, q75 = (float(np.percentile(ok, q)) for q in (25, 50, 75))
    iqr = q75 - q25
    lo, hi = q25 - 1.5 * iqr, q75 + 1.5 * iqr
    outliers = sorted(float(v) for v in ok[(ok < lo) | (ok > hi)])
    return {
        "count": len(records),
        "failures": failures,
        "mean": float(ok.mean()),
        "q25": q25,
        "median": q50,
        "q75": q75,
        "outliers": outliers,
    }


def write_summary_csv(path, summary):
    with open(path, "w", newline="\n") as fh:
        fh.write("count,failures,mean,q25,median,q75,outliers\n")
        out = ";".join(_fmt(v) for v in summary["outliers"])
        fh.write(
            f"{summary['count']},{summary['failures']},{_fmt(summary['mean'])},"
            f"{_fmt(summary['q25'])},{_fmt(summary['median'])},{_fmt(summary['q75'])},"
            f"{out}\n"
        )


# --------------------------------------------------------------------------
# key=value config files (INI sections); keys mirror the CLI flags
# --------------------------------------------------------------------------

_SPEC_KEYS = {
    "family": str,
    "s": int,
    "n": int,
    "rank": int,
    "rtrue": int,
    "p": float,
    "alg": str,
    "m": int,
    "K": float,
    "init": str,
    "sweeps": int,
    "tucker_sweeps": int,
    "reps": int,
    "seed": int,
    "base": str,
    "spikes": int,
}


def spec_from_mapping(values):
    """Build an ExperimentSpec from a flat {flag name: value} mapping."""
    conv = {}
    for key, raw in values.items():
        if raw is None:
            continue
        if key not in _SPEC_KEYS:
            raise ValueError(f"unknown experiment key {key!r}")
        conv[key] = _SPEC_KEYS[key](raw)
    missing = [k for k in ("family", "s", "rtrue", "rank", "alg") if k not in conv]
    if missing:
        raise ValueError(f"missing experiment keys: {', '.join(missing)}")
    synth = SynthSpec(
        family=conv["family"],
        s=conv["s"],
        r_true=conv["rtrue"],
        n_modes=conv.get("n", 3),
        alpha=conv["rtrue"] / conv["rank"],
        p=conv.get("p", 1.0),
        n_spikes=conv.get("spikes", 10),
        coherent_base=conv.get("base", "dense"),
        seed=conv.get("seed", 0),
    )
    return ExperimentSpec(
        synth=synth,
        algorithm=conv["alg"],
        rank=conv["rank"],
        sweeps=conv.get("sweeps"),
        sketch_size=conv.get("m"),
        sketch_factor=conv.get("K"),
        init=conv.get("init"),
        tucker_sweeps=conv.get("tucker_sweeps", 5),
        repetitions=conv.get("reps", 10),
        base_seed=conv.get("seed", 0),
    )


def read_config_file(path):
    """Flat mapping from an INI config file (all sections merged in order)."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (K vs k)
    with open(path) as fh:
        parser.read_file(fh)
    values = {}
    for section in parser.sections():
        values.update(dict(parser.items(section)))
    return values
