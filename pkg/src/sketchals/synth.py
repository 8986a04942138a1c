"""Seeded generators for the synthetic tensor families used by the benchmarks.

Families (all order 3 by default; the machinery is general in the order):

* ``tucker-dense``          dense tensor with exact Tucker rank r_true
* ``tucker-lowrank-signal`` the dense tensor plus a power-law rank-1 signal
* ``tucker-sparse``         sparse-core, sparse-factor Tucker product
* ``coherent``              dense or sparse base plus a few large spikes
* ``cp-sparse``             sum of r_true outer products of sparse vectors

Randomness: every generator is a pure function of (spec, seed).  The seed's
SeedSequence is spawned into one Philox stream per ingredient (core, each
factor, signal/spike stream), so e.g. the lowrank-signal family with zero
signal amplitude reproduces the plain dense family bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import split_rng
from .tensors import SparseTensor, ttm

FAMILIES = (
    "tucker-dense",
    "tucker-lowrank-signal",
    "tucker-sparse",
    "coherent",
    "cp-sparse",
)


@dataclass(frozen=True)
class SynthSpec:
    family: str
    s: int
    r_true: int
    n_modes: int = 3
    alpha: float | None = None  # r_true / decomposition rank, bookkeeping only
    p: float = 1.0
    n_signal: int = 5
    c_signal: float = 3.0
    eta: float = 0.5
    n_spikes: int = 10
    coherent_base: str = "dense"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("sparsity parameter p must lie in (0, 1]")
        if self.s < 1 or self.r_true < 1 or self.n_modes < 1:
            raise ValueError("extents and ranks must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")


def generate(spec):
    """Dispatch on spec.family."""
    if spec.family == "tucker-dense":
        return gen_tucker_dense(spec)
    if spec.family == "tucker-lowrank-signal":
        return gen_lowrank_signal(spec)
    if spec.family == "tucker-sparse":
        return gen_tucker_sparse(spec)
    if spec.family == "coherent":
        return gen_coherent(spec, spec.coherent_base)
    if spec.family == "cp-sparse":
        return gen_cp_sparse(spec)
    raise ValueError(f"unknown family {spec.family!r}")


def _dense_ingredients(spec, rngs):
    core = rngs[0].standard_normal((spec.r_true,) * spec.n_modes)
    factors = [
        rngs[1 + n].standard_normal((spec.s, spec.r_true))
        for n in range(spec.n_modes)
    ]
    return core, factors


def _assemble_dense(core, factors):
    out = core
    for n, mat in enumerate(factors):
        out = ttm(out, mat, n)
    return out


def gen_tucker_dense(spec):
    """Core times factor chain with i.i.d. standard normal entries."""
    rngs = split_rng(spec.seed, spec.n_modes + 1)
    core, factors = _dense_ingredients(spec, rngs)
    return _assemble_dense(core, factors)


def gen_lowrank_signal(spec):
    """Dense Tucker tensor plus rank-1 terms with power-law magnitudes
    lambda_i = C ||T||_F / i^(1+eta), unit-norm direction vectors."""
    rngs = split_rng(spec.seed, spec.n_modes + 2)
    core, factors = _dense_ingredients(spec, rngs)
    out = _assemble_dense(core, factors)
    sig_rng = rngs[-1]
    norm_t = np.linalg.norm(out)
    for i in range(1, spec.n_signal + 1):
        lam = spec.c_signal * norm_t / i ** (1.0 + spec.eta)
        vecs = []
        for _ in range(spec.n_modes):
            v = sig_rng.standard_normal(spec.s)
            vecs.append(v / np.linalg.norm(v))
        term = vecs[0]
        for v in vecs[1:]:
            term = np.multiply.outer(term, v)
        out = out + lam * term
    return out


def _sparse_entries(rng, shape, p):
    mask = rng.uniform(size=shape) < p
    vals = rng.standard_normal(shape)
    return np.where(mask, vals, 0.0)


def _accumulate_outer_products(terms, shape, compact_at=4_000_000):
    """Sum of sparse outer products, accumulated in coordinate form.

    terms yields (value, [index arrays per mode], [entry arrays per mode]).
    Linear indices are compacted (duplicate coordinates summed) whenever the
    buffer grows past compact_at, keeping memory proportional to the output
    plus one batch.
    """
    acc_idx = np.zeros(0, dtype=np.int64)
    acc_val = np.zeros(0)
    buf_idx = [acc_idx]
    buf_val = [acc_val]
    buffered = 0

    def compact():
        nonlocal acc_idx, acc_val, buf_idx, buf_val, buffered
        all_idx = np.concatenate(buf_idx)
        all_val = np.concatenate(buf_val)
        uniq, inv = np.unique(all_idx, return_inverse=True)
        sums = np.bincount(inv, weights=all_val)
        acc_idx, acc_val = uniq, sums
        buf_idx = [acc_idx]
        buf_val = [acc_val]
        buffered = 0

    for value, idx_lists, entry_lists in terms:
        if any(len(ix) == 0 for ix in idx_lists):
            continue
        lin = idx_lists[0]
        vals = entry_lists[0]
        for ix, ev, extent in zip(idx_lists[1:], entry_lists[1:], shape[1:]):
            lin = (lin[:, None] * extent + ix[None, :]).ravel()
            vals = (vals[:, None] * ev[None, :]).ravel()
        buf_idx.append(lin)
        buf_val.append(value * vals)
        buffered += lin.size
        if buffered > compact_at:
            compact()
    compact()
    coords = np.stack(np.unravel_index(acc_idx, shape), axis=1)
    return SparseTensor(shape, coords, acc_val)


def _sparse_tucker_once(spec, rngs):
    core = _sparse_entries(rngs[0], (spec.r_true,) * spec.n_modes, spec.p)
    factors = [
        _sparse_entries(rngs[1 + n], (spec.s, spec.r_true), spec.p)
        for n in range(spec.n_modes)
    ]
    shape = (spec.s,) * spec.n_modes
    core_nnz = np.argwhere(core != 0)
    # enumerating nonzero factor-row combinations is the memory-safe route for
    # genuinely sparse output; when the expected work approaches the dense
    # size, assembling densely is both faster and equivalent
    col_nnz = [np.count_nonzero(f, axis=0) for f in factors]
    est = sum(
        float(np.prod([col_nnz[m][tuple(c)[m]] for m in range(spec.n_modes)]))
        for c in core_nnz
    )
    if est > 0.25 * np.prod(shape):
        return SparseTensor.from_dense(_assemble_dense(core, factors))

    def terms():
        for c in core_nnz:
            idx_lists = [np.flatnonzero(factors[m][:, c[m]]) for m in range(spec.n_modes)]
            entry_lists = [factors[m][idx_lists[m], c[m]] for m in range(spec.n_modes)]
            yield core[tuple(c)], idx_lists, entry_lists

    return _accumulate_outer_products(terms(), shape)


def gen_tucker_sparse(spec):
    """Tucker product of a sparse core and sparse factors (entries standard
    normal with probability p).  An all-zero draw is regenerated once from a
    fresh sub-stream and then returned as-is."""
    rngs = split_rng(spec.seed, spec.n_modes + 2)
    out = _sparse_tucker_once(spec, rngs[: spec.n_modes + 1])
    if out.nnz == 0:
        retry = split_rng(spec.seed, 2 * (spec.n_modes + 1) + 1)
        out = _sparse_tucker_once(spec, retry[spec.n_modes + 1 :])
    return out


def _sparse_cp_once(spec, rngs):
    shape = (spec.s,) * spec.n_modes
    vecs = [
        _sparse_entries(rngs[n], (spec.s, spec.r_true), spec.p)
        for n in range(spec.n_modes)
    ]
    col_nnz = [np.count_nonzero(v, axis=0) for v in vecs]
    est = sum(
        float(np.prod([col_nnz[m][r] for m in range(spec.n_modes)]))
        for r in range(spec.r_true)
    )
    if est > 0.25 * np.prod(shape):
        dense = np.zeros(shape)
        for r in range(spec.r_true):
            term = vecs[0][:, r]
            for m in range(1, spec.n_modes):
                term = np.multiply.outer(term, vecs[m][:, r])
            dense += term
        return SparseTensor.from_dense(dense)

    def terms():
        for r in range(spec.r_true):
            idx_lists = [np.flatnonzero(vecs[m][:, r]) for m in range(spec.n_modes)]
            entry_lists = [vecs[m][idx_lists[m], r] for m in range(spec.n_modes)]
            yield 1.0, idx_lists, entry_lists

    return _accumulate_outer_products(terms(), shape)


def gen_cp_sparse(spec):
    """Sum of r_true outer products of vectors with sparse normal entries."""
    rngs = split_rng(spec.seed, spec.n_modes + 1)
    out = _sparse_cp_once(spec, rngs[: spec.n_modes])
    if out.nnz == 0:
        retry = split_rng(spec.seed, 2 * spec.n_modes + 1)
        out = _sparse_cp_once(spec, retry[spec.n_modes :])
    return out


def gen_coherent(spec, base="dense"):
    """Base tensor plus n_spikes large entries at distinct random positions.

    Spike values are i.i.d. normal with mean ||base||_F / sqrt(n_spikes) and
    unit variance, so the expected spike-to-base norm ratio is about one.
    Positions colliding with an existing nonzero (or another spike) are
    resampled.
    """
    rngs = split_rng(spec.seed, spec.n_modes + 3)
    shape = (spec.s,) * spec.n_modes
    if base == "dense":
        core, factors = _dense_ingredients(spec, rngs)
        base_t = _assemble_dense(core, factors)
        occupied = set()
    elif base == "sparse":
        base_t = _sparse_tucker_once(spec, rngs[: spec.n_modes + 1])
        occupied = set(np.ravel_multi_index(base_t.coords.T, shape).tolist())
    else:
        raise ValueError(f"unknown base {base!r}")
    spike_rng = rngs[-2]
    if spec.n_spikes == 0:
        return base_t
    norm_base = (
        base_t.norm() if isinstance(base_t, SparseTensor) else np.linalg.norm(base_t)
    )
    total = int(np.prod(shape))
    positions = []
    taken = set(occupied)
    while len(positions) < spec.n_spikes:
        cand = int(spike_rng.integers(0, total))
        if cand in taken:
            continue
        taken.add(cand)
        positions.append(cand)
    values = spike_rng.normal(norm_base / np.sqrt(spec.n_spikes), 1.0, spec.n_spikes)
    coords = np.stack(np.unravel_index(np.array(positions), shape), axis=1)
    if isinstance(base_t, SparseTensor):
        all_coords = np.vstack([base_t.coords, coords])
        all_vals = np.concatenate([base_t.values, values])
        return SparseTensor(shape, all_coords, all_vals)
    out = base_t.copy()
    out[tuple(coords.T)] += values
    return out
