"""Tucker decomposition drivers.

* :func:`hooi` - exact alternating least squares (one factor plus the core per
  subproblem), HOSVD or random initialization.
* :func:`sketched_tucker_als` - the same update scheme with every subproblem
  replaced by a sketched rank-constrained least squares solve (TensorSketch or
  leverage-score sampling), range-finder initialization by default.
* :func:`ref_tucker_ts` - reference one-variable-at-a-time sketched baseline:
  each sweep solves N unconstrained sketched problems for the factors with the
  core fixed plus one for the core with all factors fixed.

Every driver is a pure function of (tensor, config) and is bit-reproducible
for a fixed config seed.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import RankDeficientError, rsvd_lrls
from .rng import make_rng, split_rng
from .sketching import (
    CompositeSketchOp,
    TensorSketchOp,
    composite_apply,
    lev_apply,
    lev_build,
    ts_apply_kron,
    ts_apply_rhs,
)
from .tensors import (
    SparseTensor,
    TuckerModel,
    fitness,
    fold,
    matricize,
    matricize_t,
    read_matrix,
    read_tensor,
    tensor_norm,
    ttm,
    ttmc,
    write_matrix,
    write_tensor,
)

SKETCH_KINDS = (None, "tensorsketch", "leverage-random", "leverage-deterministic")


@dataclass
class TuckerConfig:
    ranks: tuple
    max_sweeps: int = 5
    sketch: str | None = None
    sketch_size: int | None = None  # m directly ...
    sketch_factor: float | None = None  # ... or K, with m = K * R^2
    init: str | None = None  # default: hosvd for hooi, rrf for sketched drivers
    rrf_width: int | None = None
    seed: int = 0
    convergence_tol: float = 0.0

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        if self.sketch not in SKETCH_KINDS:
            raise ValueError(f"unknown sketch kind {self.sketch!r}")

    def resolved_sketch_size(self):
        if self.sketch_size is not None:
            return int(self.sketch_size)
        if self.sketch_factor is not None:
            return int(math.ceil(self.sketch_factor * max(self.ranks) ** 2))
        raise ValueError("sketched drivers need sketch_size or sketch_factor")

    def resolved_rrf_width(self, rank):
        if self.rrf_width is not None:
            return max(int(self.rrf_width), rank)
        if self.sketch_factor is not None:
            k_factor = self.sketch_factor
        elif self.sketch_size is not None:
            k_factor = self.sketch_size / max(self.ranks) ** 2
        else:
            k_factor = 4.0
        return max(rank, int(math.ceil(math.sqrt(k_factor) * rank)))


@dataclass
class SweepTrace:
    """Per-sweep fitness / wall time plus per-subproblem residuals.

    For exact drivers the residuals are true decomposition residuals; for
    sketched drivers they are the residuals of the sketched subproblems.
    stage_split marks where a second stage begins for compound drivers.
    """

    fitness: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    wall_s: list = field(default_factory=list)
    stage_split: int | None = None


def random_orthonormal(n_rows, n_cols, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n_rows, n_cols)))
    return q[:, :n_cols]


def hosvd_init(t, ranks, rng=None):
    """Leading left singular vectors of every unfolding, via the mode Grams.

    Ranks beyond the numerical rank are padded automatically with orthonormal
    complement directions (eigenvectors of zero eigenvalues).  rng is accepted
    for interface parity with the randomized initializers; this implementation
    is deterministic and ignores it.
    """
    factors = []
    for n, rank in enumerate(ranks):
        tn = matricize(t, n)
        gram = (tn @ tn.T).toarray() if sp.issparse(tn) else tn @ tn.T
        _, vecs = np.linalg.eigh(gram)
        factors.append(vecs[:, ::-1][:, :rank])
    return factors


def init_rrf(tn, rank, width, rng):
    """Range-finder initialization of one factor from the mode unfolding.

    Sketches the columns of tn down to `width` with a composite
    CountSketch-plus-Gaussian operator (one pass over the nonzeros), then
    returns the leading `rank` left singular vectors of the sketch.
    """
    if width < rank:
        raise ValueError(f"sketch width {width} below target rank {rank}")
    k2 = rank * rank + width
    op = CompositeSketchOp.build(tn.shape[1], width, k2, rng)
    b = composite_apply(tn, op)
    u, _, _ = np.linalg.svd(b, full_matrices=False)
    if u.shape[1] < rank:
        raise ValueError(f"cannot extract {rank} directions from a {b.shape} sketch")
    return u[:, :rank]


def _validate_ranks(shape, ranks):
    if len(ranks) != len(shape):
        raise ValueError("one rank per mode required")
    for n, (s, r) in enumerate(zip(shape, ranks)):
        if not 1 <= r <= s:
            raise ValueError(f"rank {r} invalid for extent {s} at mode {n}")


def hooi(t, config):
    """Exact Tucker-ALS: per mode, contract all other factors and take the
    leading singular vectors of the unfolded result; the core is refreshed
    from the last mode's contraction."""
    if config.sketch is not None:
        raise ValueError("hooi is the unsketched driver; got a sketch config")
    shape = t.shape
    ndim = len(shape)
    ranks = config.ranks
    _validate_ranks(shape, ranks)
    rng = make_rng(config.seed)
    init = config.init or "hosvd"
    if init == "hosvd":
        factors = hosvd_init(t, ranks, rng)
    elif init == "random":
        factors = [random_orthonormal(shape[n], ranks[n], rng) for n in range(ndim)]
    else:
        raise ValueError(f"unknown init {init!r} for hooi")
    norm_t = tensor_norm(t)
    norm_t_sq = norm_t**2
    trace = SweepTrace()
    core = None
    for _ in range(config.max_sweeps):
        tic = time.perf_counter()
        y = None
        for n in range(ndim):
            y = ttmc(t, factors, skip=n)
            yn = matricize(y, n)
            u, svals, _ = np.linalg.svd(yn, full_matrices=False)
            factors[n] = u[:, : ranks[n]]
            captured = float(np.sum(svals[: ranks[n]] ** 2))
            trace.residuals.append(np.sqrt(max(norm_t_sq - captured, 0.0)))
        core = ttm(y, factors[ndim - 1].T, ndim - 1)
        fit = 1.0 - np.sqrt(max(norm_t_sq - float(np.vdot(core, core)), 0.0)) / norm_t
        trace.wall_s.append(time.perf_counter() - tic)
        trace.fitness.append(float(fit))
        if len(trace.fitness) > 1 and abs(trace.fitness[-1] - trace.fitness[-2]) < config.convergence_tol:
            break
    return TuckerModel(core, factors), trace


def _check_sketch_size(m, ranks):
    for j in range(len(ranks)):
        need = int(np.prod([ranks[n] for n in range(len(ranks)) if n != j]))
        if m < need:
            raise ValueError(
                f"sketch size {m} below {need}, the sketched system width for mode {j}"
            )


def _vec_column(t):
    """Full tensor flattened to a (prod shape, 1) column, sparse-aware."""
    if isinstance(t, SparseTensor):
        flat = np.ravel_multi_index(t.coords.T, t.shape)
        total = int(np.prod(t.shape))
        return sp.csr_matrix(
            (t.values, (flat, np.zeros(t.nnz, dtype=np.int64))), shape=(total, 1)
        )
    return np.asarray(t).reshape(-1, 1)


def sketched_tucker_als(t, config):
    """Sketched rank-constrained Tucker-ALS.

    Modes 2..N are initialized (range finder by default), the first factor is
    produced by its first subproblem.  Each subproblem sketches the Kronecker
    chain of the other factors and the matching unfolding, then solves the
    rank-constrained system with the randomized low-rank solver.  TensorSketch
    operators and their sketched right-hand sides are built once per mode and
    reused across sweeps; leverage samplers are rebuilt from the current
    factors for every subproblem.  A rank-deficient sketched system is redrawn
    once before failing.
    """
    if config.sketch is None:
        raise ValueError("sketched_tucker_als needs a sketch kind")
    shape = t.shape
    ndim = len(shape)
    ranks = config.ranks
    _validate_ranks(shape, ranks)
    m = config.resolved_sketch_size()
    _check_sketch_size(m, ranks)
    rng_init, rng_sketch, rng_solve = split_rng(config.seed, 3)
    init = config.init or "rrf"
    factors = [None] * ndim
    if init == "rrf":
        for n in range(1, ndim):
            width = config.resolved_rrf_width(ranks[n])
            factors[n] = init_rrf(matricize(t, n), ranks[n], width, rng_init)
    elif init == "random":
        for n in range(1, ndim):
            factors[n] = random_orthonormal(shape[n], ranks[n], rng_init)
    else:
        raise ValueError(f"unknown init {init!r} for sketched_tucker_als")

    use_ts = config.sketch == "tensorsketch"
    variant = "random" if config.sketch == "leverage-random" else "deterministic"
    # the tensor never changes, so its transposed unfoldings are built once
    unfoldings_t = [matricize_t(t, n) for n in range(ndim)]
    ts_ops = [None] * ndim
    ts_rhs = [None] * ndim
    if use_ts:
        for n in range(ndim):
            extents = tuple(shape[k] for k in range(ndim) if k != n)
            ts_ops[n] = TensorSketchOp.build(extents, m, rng_sketch)
            ts_rhs[n] = ts_apply_rhs(ts_ops[n], unfoldings_t[n])

    def solve_mode(n, redraw):
        others = [factors[k] for k in range(ndim) if k != n]
        if use_ts:
            if redraw:
                extents = tuple(shape[k] for k in range(ndim) if k != n)
                ts_ops[n] = TensorSketchOp.build(extents, m, rng_sketch)
                ts_rhs[n] = ts_apply_rhs(ts_ops[n], unfoldings_t[n])
            z = ts_apply_kron(ts_ops[n], others)
            y = ts_rhs[n]
        else:
            sampler = lev_build(others, m, variant, rng_sketch)
            z, y = lev_apply(sampler, others, unfoldings_t[n])
        core_t, a = rsvd_lrls(z, y, ranks[n], rng_solve)
        resid = float(np.linalg.norm((z @ core_t) @ a.T - y))
        return core_t, a, resid

    trace = SweepTrace()
    core_unfolded = None
    for _ in range(config.max_sweeps):
        tic = time.perf_counter()
        for n in range(ndim):
            try:
                core_t, a, resid = solve_mode(n, redraw=False)
            except RankDeficientError:
                try:
                    core_t, a, resid = solve_mode(n, redraw=True)
                except RankDeficientError as exc:
                    raise RankDeficientError(
                        f"mode-{n} sketched system rank-deficient after redraw "
                        f"(m={m}, sketch={config.sketch}): {exc}"
                    ) from exc
            factors[n] = a
            core_unfolded = core_t
            trace.residuals.append(resid)
        core = fold(core_unfolded.T, ndim - 1, ranks)
        trace.wall_s.append(time.perf_counter() - tic)
        trace.fitness.append(float(fitness(t, TuckerModel(core, factors))))
        if len(trace.fitness) > 1 and abs(trace.fitness[-1] - trace.fitness[-2]) < config.convergence_tol:
            break
    return TuckerModel(core, factors), trace


def ref_tucker_ts(t, config):
    """Reference sketched baseline: one variable per subproblem.

    Each sweep updates every factor (core fixed) and then the core (all
    factors fixed) by unconstrained sketched least squares with TensorSketch;
    factors are re-orthonormalized after each update.  All sketches share the
    configured sketch size and are drawn once, before the first sweep; the
    core is initialized by one core solve against the initial factors.
    """
    if config.sketch != "tensorsketch":
        raise ValueError("the reference baseline is TensorSketch-based")
    shape = t.shape
    ndim = len(shape)
    ranks = config.ranks
    _validate_ranks(shape, ranks)
    m = config.resolved_sketch_size()
    _check_sketch_size(m, ranks)
    rng_init, rng_sketch = split_rng(config.seed, 2)
    init = config.init or "rrf"
    factors = []
    for n in range(ndim):
        if init == "rrf":
            width = config.resolved_rrf_width(ranks[n])
            factors.append(init_rrf(matricize(t, n), ranks[n], width, rng_init))
        elif init == "random":
            factors.append(random_orthonormal(shape[n], ranks[n], rng_init))
        else:
            raise ValueError(f"unknown init {init!r} for ref_tucker_ts")

    ts_ops = []
    ts_rhs = []
    for n in range(ndim):
        extents = tuple(shape[k] for k in range(ndim) if k != n)
        op = TensorSketchOp.build(extents, m, rng_sketch)
        ts_ops.append(op)
        ts_rhs.append(ts_apply_rhs(op, matricize_t(t, n)))
    core_op = TensorSketchOp.build(shape, m, rng_sketch)
    core_rhs = ts_apply_rhs(core_op, _vec_column(t))

    def update_core():
        z = ts_apply_kron(core_op, factors)
        sol, *_ = np.linalg.lstsq(z, core_rhs, rcond=None)
        return sol.reshape(ranks), float(np.linalg.norm(z @ sol - core_rhs))

    core, _ = update_core()
    trace = SweepTrace()
    for _ in range(config.max_sweeps):
        tic = time.perf_counter()
        for n in range(ndim):
            others = [factors[k] for k in range(ndim) if k != n]
            z = ts_apply_kron(ts_ops[n], others) @ matricize(core, n).T
            sol, *_ = np.linalg.lstsq(z, ts_rhs[n], rcond=None)
            trace.residuals.append(float(np.linalg.norm(z @ sol - ts_rhs[n])))
            q, _ = np.linalg.qr(sol.T)
            factors[n] = q[:, : ranks[n]]
        core, core_resid = update_core()
        trace.residuals.append(core_resid)
        trace.wall_s.append(time.perf_counter() - tic)
        trace.fitness.append(float(fitness(t, TuckerModel(core, factors))))
        if len(trace.fitness) > 1 and abs(trace.fitness[-1] - trace.fitness[-2]) < config.convergence_tol:
            break
    return TuckerModel(core, factors), trace


def save_tucker(dirpath, model, manifest=None):
    """Write core.tns, factor_n.mat (1-based), and a key=value manifest."""
    os.makedirs(dirpath, exist_ok=True)
    write_tensor(os.path.join(dirpath, "core.tns"), model.core)
    for n, a in enumerate(model.factors):
        write_matrix(os.path.join(dirpath, f"factor_{n + 1}.mat"), a)
    lines = {"ranks": " ".join(str(r) for r in model.ranks)}
    lines.update(manifest or {})
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        for key, val in lines.items():
            fh.write(f"{key}={val}\n")


def load_tucker(dirpath):
    core = read_tensor(os.path.join(dirpath, "core.tns"))
    factors = []
    n = 1
    while os.path.exists(os.path.join(dirpath, f"factor_{n}.mat")):
        factors.append(read_matrix(os.path.join(dirpath, f"factor_{n}.mat")))
        n += 1
    return TuckerModel(core, factors)
